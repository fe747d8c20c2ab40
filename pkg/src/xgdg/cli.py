"""``study`` command: run a convergence study and write table / CSV / JSON reports.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 reference-comparison failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import ConfigError, SolverFailure
from .reference import TABLES, get_table
from .study import CASES, StudyConfig, compare_to_reference, load_config, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REFERENCE = 4

log = logging.getLogger("xgdg")


class _Parser(argparse.ArgumentParser):
    """Argument errors become configuration errors (exit code 2)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="study", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value file; flags override its entries")
    p.add_argument("--case", help=f"manufactured case ({', '.join(CASES)})")
    p.add_argument("--alpha", help="degree tuple a1,a2,a3,a4, e.g. 2,1,1,2")
    p.add_argument("--levels", help="level range L0..L1")
    p.add_argument("--rho", help="penalty scaling (tau = rho h, eta = 1/(rho h))")
    p.add_argument("--rho2", help="separate scaling for eta in elasticity")
    p.add_argument("--gamma", help="switch parameter; a number g means the vector (g, g)")
    p.add_argument("--schemes", help="comma list from s1,s2,s3,taylor (scalar) or elastic")
    p.add_argument("--solver", help="monolithic or hybrid (elasticity, gamma = 0)")
    p.add_argument("--h-rule", dest="h_rule", help="edge (h_e per edge) or mesh (largest edge)")
    p.add_argument("--projection", help="constraint projection of s1/s2: P0 or Pk")
    p.add_argument("--E", dest="E", help="Young's modulus")
    p.add_argument("--nu", help="Poisson ratio")
    p.add_argument("--full-system", dest="eliminate_checks", action="store_const", const="false",
                   help="keep the edge unknowns in the global solve")
    p.add_argument("--reference", help=f"compare against a stored table ({', '.join(TABLES)})")
    p.add_argument("--out", help="directory for study.csv / study.json / study.txt")
    p.add_argument("--format", dest="formats", help="comma list from csv,json,table")
    p.add_argument("-q", "--quiet", action="store_true", help="no per-level progress on stderr")
    return p


def config_from_args(args) -> StudyConfig:
    values = load_config(args.config) if args.config else {}
    for key in StudyConfig.KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return StudyConfig.from_mapping(values)


def _write(report, cfg: StudyConfig, stdout) -> None:
    table = report.table
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        for fmt in cfg.formats:
            name, text = {"csv": ("study.csv", table.to_csv()),
                          "json": ("study.json", report.to_json()),
                          "table": ("study.txt", table.to_text() + "\n")}[fmt]
            with open(os.path.join(cfg.out, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    if "table" in cfg.formats:
        print(table.to_text(), file=stdout)
    if not cfg.out:
        if "csv" in cfg.formats:
            print(table.to_csv(), end="", file=stdout)
        if "json" in cfg.formats:
            print(report.to_json(), file=stdout)


def main(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        ref = get_table(cfg.reference) if cfg.reference else None
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(level, errs, dt):
        if not args.quiet:
            log.info("level %d done in %.2fs: u_err=%.3e superclose=%.3e", level, dt,
                     errs["u_err"], errs["superclose"])

    try:
        report = run_study(cfg, progress=progress)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    code = EXIT_OK
    if ref is not None and report.table.levels:
        try:
            report.comparison = compare_to_reference(report.table, ref)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(report.comparison.summary(), file=sys.stderr)
        if not report.comparison.passed:
            code = EXIT_REFERENCE
    _write(report, cfg, stdout)
    if report.failures:
        for f in report.failures:
            print(f"solver failure at level {f['level']}: {f['error']}", file=sys.stderr)
        return EXIT_SOLVER
    return code


if __name__ == "__main__":
    sys.exit(main())
