"""Refinement studies and cut-position condition sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import linsolve
from ..assembly import assemble_system, write_matrix_dump
from ..exceptions import CutFEMError
from ..mesh import build_active_mesh, build_background, write_mesh_dump
from .norms import compute_errors, eoc
from .plotting import write_gnuplot, write_svg

log = logging.getLogger(__name__)

CSV_COLUMNS = ("level", "h", "ndof", "l2_err", "h1_err", "energy_err", "l2_err_exact_domain",
               "eoc_l2", "max_rho_h", "cond_est", "iters", "seconds")


@dataclass
class LevelResult:
    n: int
    h: float
    ndof: int = 0
    l2: Optional[float] = None
    h1: Optional[float] = None
    energy: Optional[float] = None
    l2_exact_domain: Optional[float] = None
    max_rho: Optional[float] = None
    condition: Optional[float] = None
    iterations: int = 0
    seconds: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class StudyReport:
    levels: list = field(default_factory=list)

    @property
    def hs(self):
        return [lv.h for lv in self.levels]

    def column(self, name):
        return [getattr(lv, name) for lv in self.levels]

    def eoc(self, name="l2"):
        return eoc(self.column(name), self.hs)

    @property
    def failed(self):
        return [lv for lv in self.levels if not lv.ok]

    def rows(self):
        rates = [float("nan")] + self.eoc("l2")
        for lv, rate in zip(self.levels, rates):
            yield {
                "level": lv.n, "h": _num(lv.h), "ndof": lv.ndof, "l2_err": _num(lv.l2),
                "h1_err": _num(lv.h1), "energy_err": _num(lv.energy),
                "l2_err_exact_domain": _num(lv.l2_exact_domain), "eoc_l2": _num(rate, ".4f"),
                "max_rho_h": _num(lv.max_rho), "cond_est": _num(lv.condition),
                "iters": lv.iterations, "seconds": _num(lv.seconds, ".3f"),
            }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)


def _num(v, fmt=".10e"):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(v, fmt)


def _output_path(out_dir, name):
    p = Path(name)
    return p if p.is_absolute() or out_dir is None else Path(out_dir) / p


def solve_level(cfg, n, ls=None):
    """Mesh, assemble and solve one level; returns ``(active, system, report)``."""
    ls = ls if ls is not None else cfg.levelset()
    active = build_active_mesh(ls, cfg.box, n)
    system = assemble_system(active, cfg.order, cfg.form_config())
    report = linsolve.solve(system.A, system.b, tol=cfg.solver_tol, method=cfg.solver)
    return active, system, report


def run_level(cfg, n, out_dir=None):
    start = time.perf_counter()
    result = LevelResult(n=n, h=float("nan"))
    try:
        active, system, rep = solve_level(cfg, n)
        result.h = active.h
        result.ndof = system.ndof
        result.iterations = rep.iterations
        result.max_rho = system.boundary.delta_h
        errs = compute_errors(system, rep.solution, active, cfg.order, exact_domain=cfg.exact_domain_error)
        result.l2, result.h1, result.energy = float(errs.l2), float(errs.h1), float(errs.energy)
        result.l2_exact_domain = errs.l2_exact_domain
        if cfg.condition:
            result.condition = linsolve.estimate_condition(system.A).kappa
        if cfg.mesh_dump and out_dir is not None:
            write_mesh_dump(_output_path(out_dir, f"mesh_{n}.txt"), active)
        if cfg.matrix_dump and out_dir is not None:
            write_matrix_dump(_output_path(out_dir, f"matrix_{n}.txt"), system.A)
    except CutFEMError as exc:
        log.error("level n=%d failed: %s", n, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    if cfg.record_time:
        result.seconds = time.perf_counter() - start
    return result


def run_study(cfg, out_dir=None, write=True):
    """Run every refinement level; failures are recorded per level and the study continues."""
    report = StudyReport()
    for n in cfg.levels:
        lv = run_level(cfg, n, out_dir)
        log.debug("n=%d ndof=%d l2=%s energy=%s", n, lv.ndof, lv.l2, lv.energy)
        report.levels.append(lv)
    if write and out_dir is not None:
        report.write_csv(_output_path(out_dir, cfg.csv))
        write_svg(report, _output_path(out_dir, cfg.plot + ".svg"), title=cfg.name)
        write_gnuplot(report, _output_path(out_dir, cfg.plot + ".gp"), title=cfg.name)
    return report


@dataclass
class ConditionSweep:
    offsets: list
    kappas: list

    @property
    def spread(self):
        return max(self.kappas) / min(self.kappas)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("shift,kappa\n")
            for t, k in zip(self.offsets, self.kappas):
                fh.write(f"{t:.10e},{k:.10e}\n")


def condition_sweep(cfg, n=None, steps=None):
    """Condition estimates with the geometry shifted by ``t h / steps`` along the diagonal."""
    n = n or cfg.condition_level
    steps = steps or cfg.condition_offsets
    base = cfg.levelset()
    h = build_background(cfg.box, n).h
    offsets, kappas = [], []
    for t in range(steps):
        shift = t * h / steps
        ls = base.translated((shift / np.sqrt(2.0), shift / np.sqrt(2.0)))
        active = build_active_mesh(ls, cfg.box, n)
        system = assemble_system(active, cfg.order, cfg.form_config(), with_load=False)
        offsets.append(shift)
        kappas.append(linsolve.estimate_condition(system.A).kappa)
    return ConditionSweep(offsets, kappas)


def write_solution(path, system, u):
    """One ``x y value`` line per degree of freedom."""
    with open(path, "w") as fh:
        for (x, y), v in zip(system.dofmap.coords, u):
            fh.write(f"{x:.12e} {y:.12e} {v:.12e}\n")
