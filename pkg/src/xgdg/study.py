"""Manufactured-solution convergence studies: error norms, rate tables, reports."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import elasticity, scalar
from .assembly import edge_rule, edge_weights, tabulate_volume, div_basis
from .basis import tri_quadrature
from .errors import ConfigError, SolverFailure
from .forms import PenaltyParams, Traces
from .mesh import NEUMANN, build_unit_square
from .postprocess import PostprocessConfig, Postprocessed, Scheme, postprocess
from .reference import ReferenceTable
from .spaces import VOIGT_METRIC, DegreeTuple

# --------------------------------------------------------------------------
# manufactured cases
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    """Named exact solution; ``build(**material)`` returns the solver-facing case object."""

    name: str
    kind: str                     # "scalar" or "elastic"
    description: str
    build: Callable

    @property
    def elastic(self) -> bool:
        return self.kind == "elastic"


def variable_coefficient_case() -> scalar.ScalarCase:
    """``u = sin(pi x) sin(pi y)`` with ``c = I / a``, ``a = 1 + x^2 + y^2``."""
    base = scalar.sine_case()

    def a(X):
        return 1.0 + X[..., 0] ** 2 + X[..., 1] ** 2

    def c(X):
        return np.eye(2) / a(X)[..., None, None]

    def p(X):
        return a(X)[..., None] * base.grad_u(X)

    def f(X):
        # div(a grad u) = grad a . grad u + a lap u
        G = base.grad_u(X)
        H = base.hessian_u(X)
        return 2.0 * np.einsum("...i,...i->...", X, G) + a(X) * (H[..., 0, 0] + H[..., 1, 1])

    return scalar.ScalarCase(f=f, c=c, u_exact=base.u_exact, p_exact=p, grad_u=base.grad_u,
                             hessian_u=base.hessian_u, name="sine-varcoef")


CASES = {
    "sine": ManufacturedCase("sine", "scalar", "u = sin(pi x) sin(pi y), c = I",
                             lambda **kw: scalar.sine_case()),
    "sine-varcoef": ManufacturedCase("sine-varcoef", "scalar",
                                     "u = sin(pi x) sin(pi y), c = I / (1 + x^2 + y^2)",
                                     lambda **kw: variable_coefficient_case()),
    "elastic-sine": ManufacturedCase("elastic-sine", "elastic",
                                     "u = (s, s), s = sin(pi x) sin(pi y)",
                                     lambda E=1.0, nu=0.4, **kw: elasticity.sine_elastic_case(E, nu)),
}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name]
    except KeyError:
        raise ConfigError(f"unknown case {name!r}; known: {', '.join(CASES)}") from None


def flux_of(case, X):
    return case.sigma_exact(X) if isinstance(case, elasticity.ElasticCase) else case.p_exact(X)


def check_source(case, points: np.ndarray, step: float = 1e-5) -> float:
    """Largest relative gap between ``f`` and a central-difference divergence of the exact flux."""
    X = np.asarray(points, float)
    div = 0.0
    for d in range(2):
        e = np.zeros(2)
        e[d] = step
        Fp, Fm = flux_of(case, X + e), flux_of(case, X - e)
        dF = (Fp - Fm) / (2 * step)
        if isinstance(case, elasticity.ElasticCase):
            # Voigt (s11, s12, s22): row d of the divergence
            rows = {0: (0, 1), 1: (1, 2)}[d]
            div = div + np.stack([dF[..., rows[0]], dF[..., rows[1]]], -1)
        else:
            div = div + dF[..., d]
    f = np.asarray(case.f(X), float)
    return float(np.max(np.abs(f - div)) / max(np.max(np.abs(f)), 1e-300))


# --------------------------------------------------------------------------
# errors
# --------------------------------------------------------------------------

def _l2_error(mesh, space, coeffs, exact, exactness: int) -> float:
    q = tri_quadrature(exactness)
    X = mesh.to_physical(q.points)
    vh = space.evaluate(coeffs, q.points)
    v = np.asarray(exact(X), float)
    if v.ndim == vh.ndim - 1:
        v = v[..., None]
    return float(np.sqrt(np.einsum("q,e,eqc->", q.weights, mesh.dets, (vh - v) ** 2)))


def _error_exactness(sol) -> int:
    return min(2 * (sol.degrees.disp + 3) + 4, 20)


def flux_errors(sol, case=None, exactness: int | None = None) -> dict:
    """``||p - p_h||_0`` and the broken ``div,h`` norm of the flux (or stress) error."""
    case = sol.case if case is None else case
    mesh = sol.mesh
    elastic = isinstance(case, elasticity.ElasticCase)
    ex = _error_exactness(sol) if exactness is None else exactness
    space = sol.spaces.stress if elastic else sol.spaces.flux
    coeffs = sol.sigma if elastic else sol.p
    tab = tabulate_volume(space, ex)
    q = tri_quadrature(ex)
    E = flux_of(case, tab.points) - space.evaluate(coeffs, q.points)           # (nel, nq, m)
    if elastic:
        metric_err = np.einsum("eq,eqs,s->", tab.weights, E * E, VOIGT_METRIC)
        energy = np.einsum("eq,eqs,s->", tab.weights, case.compliance.apply(E) * E, VOIGT_METRIC)
    else:
        metric_err = np.einsum("eq,eqa->", tab.weights, E * E)
        C = case.coefficient(tab.points)
        energy = np.einsum("eq,eqa,eqab,eqb->", tab.weights, E, C, E)
    # div of the error: f - div_h(flux_h)
    D = div_basis(space, tab)                                             # (nel, nq, out, nd)
    divh = np.einsum("eqai,ei->eqa", D, space.reshape(coeffs).reshape(mesh.n_elements, -1))
    F = np.asarray(case.f(tab.points), float)
    if F.ndim == 2:
        F = F[..., None]
    div_err = np.einsum("eq,eqa->", tab.weights, (F - divh) ** 2)
    # jump of the error: exact flux has no interior normal jump
    s, wq = edge_rule(min(2 * space.degree + 2, 25))
    J = Traces(space, s).jump() if elastic else Traces(space, s).normal_jump()
    jh = J.apply(coeffs)                                                  # (nE, nq, m)
    neu = mesh.tags == NEUMANN
    if neu.any():
        X = mesh.edge_points(s)[neu]
        Fx = flux_of(case, X)
        if elastic:
            from .forms import traction_matrix
            ex_n = np.einsum("eas,eqs->eqa", traction_matrix(mesh.normals[neu]), Fx)
        else:
            ex_n = np.einsum("eqa,ea->eq", Fx, mesh.normals[neu])[..., None]
        jh[neu] -= ex_n
    eta = sol.params.eta(mesh)
    jump_err = np.einsum("eq,eqm->", edge_weights(mesh, wq, eta), jh ** 2)
    return {"flux_err": float(np.sqrt(metric_err)),
            "flux_divh": float(np.sqrt(energy + div_err + jump_err))}


def compute_errors(sol, case=None, post: dict | None = None, exactness: int | None = None,
                   include_flux: bool = True) -> dict:
    """Named errors: ``u_err``, ``superclose``, ``post_<scheme>`` and the flux norms."""
    case = sol.case if case is None else case
    if case.u_exact is None:
        raise ConfigError("error norms need a manufactured case with an exact solution")
    mesh = sol.mesh
    ex = _error_exactness(sol) if exactness is None else exactness
    V = sol.spaces.disp
    out = {"u_err": _l2_error(mesh, V, sol.u, case.u_exact, ex)}
    Pu = V.l2_project(case.u_exact, exactness=ex)
    out["superclose"] = V.l2_norm(sol.u - Pu)
    for name, pp in (post or {}).items():
        out[f"post_{name}"] = _l2_error(mesh, pp.space, pp.coeffs, case.u_exact, ex)
    if include_flux:
        out.update(flux_errors(sol, case, ex))
    return out


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

SOLVERS = ("monolithic", "hybrid")
FORMATS = ("csv", "json", "table")


def _parse_levels(value) -> tuple:
    if isinstance(value, (tuple, list)):
        lv = tuple(int(v) for v in value)
    else:
        text = str(value).strip()
        try:
            if ".." in text:
                a, b = text.split("..")
                lv = (int(a), int(b))
            else:
                lv = (int(text), int(text))
        except ValueError as exc:
            raise ConfigError(f"bad level range {value!r}; expected L0..L1") from exc
    if len(lv) != 2:
        raise ConfigError(f"bad level range {value!r}")
    return lv


def _parse_list(value) -> tuple:
    if isinstance(value, str):
        return tuple(v.strip().lower() for v in value.split(",") if v.strip())
    return tuple(str(v).lower() for v in value)


@dataclass(frozen=True)
class StudyConfig:
    case: str = "sine"
    alpha: DegreeTuple = DegreeTuple(2, 1, 1, 2)
    levels: tuple = (3, 5)
    rho: float = 1.0
    rho2: float | None = None
    gamma: float = 1.0
    schemes: tuple = ("s1", "s2")
    solver: str = "monolithic"
    h_rule: str = "edge"
    projection: str = "P0"
    E: float = 1.0
    nu: float = 0.4
    eliminate_checks: bool = True
    reference: str | None = None
    formats: tuple = ("table",)
    out: str | None = None

    KEYS = ("case", "alpha", "levels", "rho", "rho2", "gamma", "schemes", "solver", "h_rule",
            "projection", "E", "nu", "eliminate_checks", "reference", "formats", "out")

    @classmethod
    def from_mapping(cls, values: dict, base: "StudyConfig | None" = None) -> "StudyConfig":
        """Build from string or typed values, validating every key."""
        base = cls() if base is None else base
        kw = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in cls.KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                if key == "alpha":
                    kw[key] = DegreeTuple.parse(raw)
                elif key == "levels":
                    kw[key] = _parse_levels(raw)
                elif key in ("rho", "gamma", "E", "nu"):
                    kw[key] = float(raw)
                elif key == "rho2":
                    kw[key] = None if str(raw).lower() in ("", "none") else float(raw)
                elif key in ("schemes", "formats"):
                    kw[key] = _parse_list(raw)
                elif key == "eliminate_checks":
                    kw[key] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
                elif key == "reference":
                    kw[key] = None if str(raw).lower() in ("", "none") else str(raw)
                else:
                    kw[key] = str(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        cfg = replace(base, **kw)
        cfg.validate()
        return cfg

    @property
    def manufactured(self) -> ManufacturedCase:
        return get_case(self.case)

    def level_list(self) -> list:
        return list(range(self.levels[0], self.levels[1] + 1))

    def validate(self) -> None:
        mc = self.manufactured
        if self.levels[0] < 1 or self.levels[1] < self.levels[0]:
            raise ConfigError(f"empty or invalid level range {self.levels[0]}..{self.levels[1]}")
        if self.rho <= 0 or (self.rho2 is not None and self.rho2 <= 0):
            raise ConfigError("rho and rho2 must be positive")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        if self.h_rule not in ("edge", "mesh"):
            raise ConfigError("h_rule must be 'edge' or 'mesh'")
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise ConfigError(f"unknown output format {fmt!r}")
        schemes = [Scheme.parse(s) for s in self.schemes]
        for s in schemes:
            if s.scalar == mc.elastic:
                raise ConfigError(f"scheme {s.value} does not apply to the {mc.kind} case {self.case}")
        if self.solver == "hybrid":
            if not mc.elastic:
                raise ConfigError("the hybrid solver is only available for elasticity")
            if self.gamma != 0.0:
                raise ConfigError("the hybrid solver requires gamma = 0")
        if min(self.alpha) < 0:
            raise ConfigError("degrees must be nonnegative")
        PostprocessConfig(Scheme.S1, self.projection)

    def penalty(self) -> PenaltyParams:
        return PenaltyParams(self.rho, self.rho2, self.gamma, h_rule=self.h_rule)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        d["levels"] = list(self.levels)
        d["schemes"] = list(self.schemes)
        d["formats"] = list(self.formats)
        return d


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; blank lines are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: missing key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


# --------------------------------------------------------------------------
# rate tables
# --------------------------------------------------------------------------

def pairwise_rates(errors) -> list:
    """``log2(e_{L-1} / e_L)``, ``None`` at the first level or where undefined."""
    if len(errors) == 0:
        return []
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(float(np.log2(a / b)) if a > 0 and b > 0 else None)
    return out


def lsq_slope(levels, errors, last: int = 3):
    """Least-squares slope of ``-log2(e)`` against level over the last ``last`` levels."""
    lv = np.asarray(levels[-last:], float)
    e = np.asarray(errors[-last:], float)
    if len(lv) < 2 or np.any(e <= 0):
        return None
    return float(-np.polyfit(lv, np.log2(e), 1)[0])


DERIVED_COLUMNS = ("flux_err", "flux_divh")


@dataclass
class RateTable:
    columns: list
    levels: list = field(default_factory=list)
    h: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    def add(self, level: int, h: float, errs: dict) -> None:
        if self.levels and level != self.levels[-1] + 1:
            raise ValueError("rate tables need consecutive levels")
        if any(v < 0 for v in errs.values()):
            raise ValueError("errors must be nonnegative")
        self.levels.append(level)
        self.h.append(h)
        for c in self.columns:
            self.errors.setdefault(c, []).append(float(errs[c]))

    def rates(self, column: str) -> list:
        return pairwise_rates(self.errors.get(column, []))

    def final_rate(self, column: str):
        return self.rates(column)[-1]

    def slope(self, column: str, last: int = 3):
        return lsq_slope(self.levels, self.errors.get(column, []), last)

    def error(self, column: str, level: int) -> float:
        return self.errors[column][self.levels.index(level)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["level", "h"]
        for c in self.columns:
            header += [c, f"{c}_rate"]
        w.writerow(header)
        rates = {c: self.rates(c) for c in self.columns}
        for i, lv in enumerate(self.levels):
            row = [lv, f"{self.h[i]:.10e}"]
            for c in self.columns:
                r = rates[c][i]
                row += [f"{self.errors[c][i]:.10e}", "" if r is None else f"{r:.6f}"]
            w.writerow(row)
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'level':>5} {'h':>10}" + "".join(f" {c:>13} {'rate':>6}" for c in self.columns)
        lines = [head, "-" * len(head)]
        rates = {c: self.rates(c) for c in self.columns}
        for i, lv in enumerate(self.levels):
            line = f"{lv:>5} {self.h[i]:>10.3e}"
            for c in self.columns:
                r = rates[c][i]
                line += f" {self.errors[c][i]:>13.3e} {'-' if r is None else f'{r:.2f}':>6}"
            lines.append(line)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "levels": list(self.levels), "h": list(self.h),
                "errors": {c: list(v) for c, v in self.errors.items()},
                "rates": {c: self.rates(c) for c in self.columns},
                "lsq_slope_last3": {c: self.slope(c) for c in self.columns},
                "derived_columns": [c for c in self.columns if c in DERIVED_COLUMNS]}


# --------------------------------------------------------------------------
# study driver
# --------------------------------------------------------------------------

@dataclass
class StudyReport:
    config: StudyConfig
    table: RateTable
    timings: list = field(default_factory=list)
    unknowns: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    comparison: "Comparison | None" = None

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> str:
        d = {"config": self.config.to_dict(), "table": self.table.to_dict(),
             "timings_s": self.timings, "unknowns": self.unknowns, "failures": self.failures}
        if self.comparison is not None:
            d["comparison"] = self.comparison.to_dict()
        return json.dumps(d, indent=2)


def solve_level(config: StudyConfig, level: int, case=None):
    """Solve one level; returns ``(solution, postprocessed dict)``."""
    mc = config.manufactured
    if case is None:
        case = mc.build(E=config.E, nu=config.nu)
    mesh = build_unit_square(level)
    params = config.penalty()
    if mc.elastic:
        if config.solver == "hybrid":
            eta_l = elasticity.hybrid_local_eta(mesh, params)
            sol = elasticity.solve_hybrid(mesh, config.alpha, params, case, eta_local=eta_l)
        else:
            sol = elasticity.solve_elastic(mesh, config.alpha, params, case,
                                           monolithic=not config.eliminate_checks)
    else:
        sol = scalar.solve_scalar(mesh, config.alpha, params, case,
                                  monolithic=not config.eliminate_checks)
    post = {}
    for s in config.schemes:
        post[s] = postprocess(sol, PostprocessConfig(s, config.projection), case)
    return sol, post


def study_columns(config: StudyConfig) -> list:
    return ["u_err", "superclose"] + [f"post_{s}" for s in config.schemes] + list(DERIVED_COLUMNS)


def run_study(config: StudyConfig, progress: Callable | None = None) -> StudyReport:
    config.validate()
    case = config.manufactured.build(E=config.E, nu=config.nu)
    table = RateTable(study_columns(config))
    report = StudyReport(config, table)
    for level in config.level_list():
        t0 = time.perf_counter()
        try:
            sol, post = solve_level(config, level, case)
            errs = compute_errors(sol, case, post)
        except SolverFailure as exc:
            report.failures.append({"level": level, "error": str(exc), "min_pivot": exc.min_pivot,
                                    "equation": exc.equation, "element": exc.element})
            break
        dt = time.perf_counter() - t0
        table.add(level, sol.mesh.h, errs)
        report.timings.append(dt)
        report.unknowns.append(int(sol.n_unknowns))
        if progress is not None:
            progress(level, errs, dt)
    return report


# --------------------------------------------------------------------------
# reference comparison
# --------------------------------------------------------------------------

@dataclass
class Cell:
    level: int
    column: str
    kind: str          # "error" or "rate"
    expected: float
    got: float | None
    ok: bool


@dataclass
class Comparison:
    reference: str
    cells: list
    rate_tol: float
    factor: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.cells)

    def failed(self) -> list:
        return [c for c in self.cells if not c.ok]

    def summary(self) -> str:
        bad = self.failed()
        head = f"{self.reference}: {len(self.cells) - len(bad)}/{len(self.cells)} cells within tolerance"
        return "\n".join([head] + [f"  FAIL level {c.level} {c.column} {c.kind}: expected "
                                   f"{c.expected:.3g}, got {'-' if c.got is None else f'{c.got:.3g}'}"
                                   for c in bad])

    def to_dict(self) -> dict:
        return {"reference": self.reference, "passed": self.passed, "rate_tol": self.rate_tol,
                "factor": self.factor, "cells": [asdict(c) for c in self.cells]}


def compare_to_reference(table: RateTable, ref: ReferenceTable, rate_tol: float = 0.2,
                         factor: float = 3.0) -> Comparison:
    """Cellwise check: rates within ``rate_tol``, errors within a factor ``factor``."""
    missing = [c for c in ref.columns if c not in table.columns]
    if missing:
        raise ConfigError(f"report lacks reference columns {missing}")
    common = [lv for lv in table.levels if lv in ref.levels]
    if not common:
        raise ConfigError(f"report levels {table.levels} do not overlap reference levels {list(ref.levels)}")
    cells = []
    for col in ref.columns:
        rates = table.rates(col)
        for lv in common:
            got = table.error(col, lv)
            exp = ref.error(col, lv)
            ok = exp / factor <= got <= exp * factor
            cells.append(Cell(lv, col, "error", exp, got, bool(ok)))
            r_exp = ref.rate(col, lv)
            r_got = rates[table.levels.index(lv)]
            if r_exp is None or r_got is None:
                continue
            cells.append(Cell(lv, col, "rate", r_exp, r_got, bool(abs(r_got - r_exp) <= rate_tol)))
    return Comparison(ref.name, cells, rate_tol, factor)


def table_from_reference(ref: ReferenceTable) -> RateTable:
    """Rate table holding the reference values themselves (for self-comparison)."""
    t = RateTable(list(ref.columns))
    for i, lv in enumerate(ref.levels):
        t.add(lv, 2.0 ** (0.5 - (lv - 1)), {c: ref.errors[c][i] for c in ref.columns})
    return t
