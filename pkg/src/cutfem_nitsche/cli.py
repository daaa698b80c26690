"""Command line driver.

Exit status: 0 on success, 1 for configuration problems, 2 for numerical
failures (a level that could not be solved, a singular system, ...).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exceptions import ConfigError, CutFEMError
from .study import config as config_mod
from .study.norms import compute_errors
from .study.runner import condition_sweep, run_study, solve_level, write_solution

log = logging.getLogger("cutfem_nitsche")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _build_parser():
    parser = argparse.ArgumentParser(prog="cutfem-nitsche", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve on the finest configured level and dump the solution"),
        ("convergence", "refinement study -> CSV, SVG plot and gnuplot script"),
        ("condition", "condition estimates while shifting the geometry across the mesh"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value experiment file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    p = sub.add_parser("demo", help="print the configurations of the two reference experiments")
    p.add_argument("--out", default=None, help="also write the demo configs into this directory")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return parser


def _cmd_solve(cfg, out):
    n = cfg.levels[-1]
    active, system, rep = solve_level(cfg, n)
    errs = compute_errors(system, rep.solution, active, cfg.order, exact_domain=cfg.exact_domain_error)
    write_solution(out / f"solution_{n}.txt", system, rep.solution)
    lines = [
        f"level = {n}", f"h = {active.h:.10e}", f"ndof = {system.ndof}",
        f"l2_err = {errs.l2:.10e}", f"h1_err = {errs.h1:.10e}", f"energy_err = {errs.energy:.10e}",
        f"max_rho_h = {system.boundary.delta_h:.10e}", f"solver = {rep.method}",
        f"iters = {rep.iterations}", f"residual = {rep.residual:.3e}",
    ]
    if errs.l2_exact_domain is not None:
        lines.insert(6, f"l2_err_exact_domain = {errs.l2_exact_domain:.10e}")
    (out / f"report_{n}.txt").write_text("\n".join(lines) + "\n")
    log.info("\n".join(lines))
    return EXIT_OK


def _cmd_convergence(cfg, out):
    report = run_study(cfg, out_dir=out)
    for lv, rate in zip(report.levels, [float("nan")] + report.eoc("l2")):
        log.info("n=%4d  h=%.4e  ndof=%7d  l2=%s  eoc=%.2f", lv.n, lv.h, lv.ndof, lv.l2, rate)
    if report.failed:
        for lv in report.failed:
            print(f"level {lv.n} failed: {lv.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_condition(cfg, out):
    sweep = condition_sweep(cfg)
    sweep.write_csv(out / "condition.csv")
    for t, k in zip(sweep.offsets, sweep.kappas):
        log.info("shift=%.4e  kappa=%.4e", t, k)
    log.info("max/min kappa = %.3f", sweep.spread)
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "demo":
            for name, text in config_mod.DEMOS.items():
                print(f"## {name}.cfg\n{text}")
                if args.out:
                    Path(args.out).mkdir(parents=True, exist_ok=True)
                    (Path(args.out) / f"{name}.cfg").write_text(text)
            return EXIT_OK
        cfg = config_mod.load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"solve": _cmd_solve, "convergence": _cmd_convergence,
                   "condition": _cmd_condition}[args.command]
        return handler(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CutFEMError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def cli_main(argv=None):
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
