"""Published convergence tables for the sine manufactured solutions, stored as data.

Column names match :mod:`xgdg.study`: ``u_err`` is the L^2 error of the
potential/displacement, ``superclose`` the distance to its L^2 projection,
``post_<scheme>`` the error of a postprocessed solution.  Rates are pairwise
``log2(e_{L-1} / e_L)`` listed at the finer level ``L``; ``None`` where the
table prints none.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .spaces import DegreeTuple


@dataclass(frozen=True)
class ReferenceTable:
    name: str
    case: str
    alpha: DegreeTuple
    levels: tuple
    errors: dict
    rates: dict
    settings: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        return list(self.errors)

    def error(self, column: str, level: int) -> float:
        return self.errors[column][self.levels.index(level)]

    def rate(self, column: str, level: int):
        """Rate between ``level - 1`` and ``level`` (``None`` if not printed)."""
        return self.rates[column][self.levels.index(level)]


_SCALAR = {"gamma": 1.0, "rho": 1.0, "schemes": ("s1", "s2")}
_ELASTIC = {"gamma": 1.0, "rho": 1.0, "rho2": 1.0, "E": 1.0, "nu": 0.4, "schemes": ("elastic",)}


def _table(name, case, alpha, levels, cols, settings):
    levels = tuple(levels)
    errors = {c: tuple(v[0]) for c, v in cols.items()}
    # a table without a rate at its coarsest level gets a leading None
    rates = {c: tuple(v[1]) if len(v[1]) == len(levels) else (None,) + tuple(v[1]) for c, v in cols.items()}
    for c in cols:
        assert len(errors[c]) == len(levels) and len(rates[c]) == len(levels), (name, c)
    return ReferenceTable(name, case, DegreeTuple(*alpha), tuple(levels), errors, rates, dict(settings))


TABLES = {
    "table1": _table("table1", "sine", (1, 0, 0, 1), range(3, 9), {
        "u_err": ((1.45e-1, 6.89e-2, 3.33e-2, 1.64e-2, 8.19e-3, 4.09e-3), (0.92, 1.08, 1.05, 1.02, 1.00, 1.00)),
        "superclose": ((6.81e-2, 2.26e-2, 6.24e-3, 1.62e-3, 4.11e-4, 1.03e-4), (0.93, 1.59, 1.86, 1.95, 1.98, 1.99)),
        "post_s1": ((6.91e-2, 2.27e-2, 6.25e-3, 1.62e-3, 4.11e-4, 1.03e-4), (1.00, 1.61, 1.86, 1.95, 1.98, 1.99)),
        "post_s2": ((6.87e-2, 2.26e-2, 6.24e-3, 1.62e-3, 4.11e-4, 1.03e-4), (1.04, 1.60, 1.86, 1.95, 1.98, 1.99)),
    }, _SCALAR),
    "table2": _table("table2", "sine", (2, 1, 1, 2), range(3, 8), {
        "u_err": ((1.96e-2, 4.95e-3, 1.24e-3, 3.11e-4, 7.78e-5), (1.95, 1.98, 1.99, 2.00, 2.00)),
        "superclose": ((1.99e-3, 1.43e-4, 9.40e-6, 6.02e-7, 3.80e-8), (3.35, 3.80, 3.92, 3.97, 3.98)),
        "post_s1": ((2.41e-3, 1.68e-4, 1.10e-5, 7.00e-7, 4.42e-8), (3.42, 3.84, 3.94, 3.97, 3.99)),
        "post_s2": ((2.22e-3, 1.49e-4, 9.63e-6, 6.11e-7, 3.85e-8), (3.52, 3.89, 3.96, 3.98, 3.99)),
    }, _SCALAR),
    "table3": _table("table3", "sine", (3, 2, 2, 3), range(3, 8), {
        "u_err": ((2.17e-3, 2.75e-4, 3.45e-5, 4.31e-6, 5.39e-7), (2.92, 2.98, 2.99, 3.00, 3.00)),
        "superclose": ((8.89e-5, 3.20e-6, 1.06e-7, 3.39e-9, 1.07e-10), (4.42, 4.80, 4.92, 4.97, 4.98)),
        "post_s1": ((3.48e-4, 1.34e-5, 4.50e-7, 1.44e-8, 4.57e-10), (3.91, 4.70, 4.90, 4.96, 4.98)),
        "post_s2": ((1.55e-4, 6.07e-6, 2.04e-7, 6.56e-9, 2.08e-10), (3.78, 4.68, 4.89, 4.96, 4.98)),
    }, _SCALAR),
    "table4": _table("table4", "elastic-sine", (3, 2, 2, 3), range(1, 7), {
        "u_err": ((9.87e-2, 2.37e-2, 3.08e-3, 3.89e-4, 4.87e-5, 6.10e-6), (2.06, 2.94, 2.99, 3.00, 3.00)),
        "superclose": ((2.90e-2, 5.65e-3, 3.71e-4, 1.51e-5, 5.17e-7, 1.67e-8), (2.36, 3.93, 4.62, 4.87, 4.95)),
        "post_elastic": ((3.68e-2, 6.83e-3, 3.74e-4, 1.43e-5, 4.79e-7, 1.54e-8), (2.43, 4.19, 4.71, 4.90, 4.96)),
    }, _ELASTIC),
    "table5": _table("table5", "elastic-sine", (4, 3, 3, 4), range(1, 6), {
        "u_err": ((7.17e-2, 4.12e-3, 2.69e-4, 1.70e-5, 1.06e-6), (4.12, 3.94, 3.98, 4.00)),
        "superclose": ((2.51e-2, 7.52e-4, 2.27e-5, 5.76e-7, 1.13e-8), (5.06, 5.05, 5.30, 5.68)),
        "post_elastic": ((3.47e-2, 8.82e-4, 2.28e-5, 5.29e-7, 1.01e-8), (5.30, 5.27, 5.43, 5.71)),
    }, _ELASTIC),
    "table6": _table("table6", "elastic-sine", (1, 0, 0, 1), range(2, 9), {
        "u_err": ((4.25e-1, 2.13e-1, 1.00e-1, 4.83e-2, 2.39e-2, 1.19e-2, 5.96e-3),
                  (0.99, 1.09, 1.05, 1.02, 1.00, 1.00)),
        "superclose": ((2.50e-1, 1.12e-1, 3.89e-2, 1.41e-2, 6.06e-3, 2.88e-3, 1.42e-3),
                       (1.16, 1.53, 1.46, 1.22, 1.07, 1.02)),
        "post_elastic": ((3.45e-1, 1.29e-1, 4.61e-2, 1.84e-2, 8.39e-3, 4.08e-3, 2.03e-3),
                         (1.42, 1.48, 1.33, 1.13, 1.04, 1.01)),
    }, _ELASTIC),
    "table7": _table("table7", "elastic-sine", (2, 1, 1, 2), range(1, 8), {
        "u_err": ((4.74e-1, 1.11e-1, 2.85e-2, 7.22e-3, 1.82e-3, 4.55e-4, 1.14e-4),
                  (2.09, 1.97, 1.98, 1.99, 2.00, 2.00)),
        "superclose": ((3.08e-1, 4.11e-2, 7.20e-3, 1.77e-3, 4.56e-4, 1.16e-4, 2.91e-5),
                       (2.90, 2.51, 2.02, 1.96, 1.98, 1.99)),
        "post_elastic": ((4.00e-1, 5.27e-2, 8.57e-3, 1.89e-3, 4.64e-4, 1.16e-4, 2.91e-5),
                         (2.92, 2.62, 2.18, 2.03, 2.00, 2.00)),
    }, _ELASTIC),
}


def get_table(name: str) -> ReferenceTable:
    try:
        return TABLES[name]
    except KeyError:
        from .errors import ConfigError
        raise ConfigError(f"unknown reference table {name!r}; known: {', '.join(TABLES)}") from None
