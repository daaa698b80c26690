"""Sparse solves and rough 2-norm condition estimates."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import NoConvergence, SingularMatrix

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-10
RESTART = 100
DENSE_LIMIT = 2000


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float
    method: str
    condition: Optional[float] = None


def relative_residual(A, u, b):
    bnorm = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ u)
    return r / bnorm if bnorm > 0 else r


def _dense_solve(A, b):
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    scale = max(np.max(np.abs(M)), 1.0)
    if np.min(np.abs(np.diag(lu))) < 1e-14 * scale:
        raise SingularMatrix(f"pivot {np.min(np.abs(np.diag(lu))):.3e} below 1e-14 (relative)")
    return sla.lu_solve((lu, piv), b, check_finite=False)


def _gmres(A, b, tol, max_iter):
    """Restarted GMRES on the column-scaled matrix ``A D^-1``; returns ``(u, iterations)``."""
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    Dinv = sp.diags(1.0 / d)
    As = (A @ Dinv).tocsr()
    count = [0]

    def cb(_):
        count[0] += 1

    y, info = spla.gmres(As, b, rtol=tol, atol=0.0, restart=RESTART,
                         maxiter=max(1, -(-max_iter // RESTART)),
                         callback=cb, callback_type="pr_norm")
    return Dinv @ y, count[0], info


def solve(A, b, tol=SOLVER_TOL, max_iter=None, method="gmres"):
    """Solve ``A u = b``.

    ``method="gmres"``: Jacobi-scaled GMRES(100), with a dense LU fallback for
    ``N <= 2000`` when the iteration stalls.  ``method="direct"``: sparse LU.
    The relative residual is checked against ``tol`` in every case.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or len(b) != n:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    max_iter = max_iter or 10 * n

    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        u = lu.solve(b)
        res = relative_residual(A, u, b)
        if not np.isfinite(res) or res > tol:
            # one step of iterative refinement before giving up
            u = u + lu.solve(b - A @ u)
            res = relative_residual(A, u, b)
        if not np.isfinite(res) or res > tol:
            raise SingularMatrix(f"direct solve residual {res:.3e} exceeds {tol:.1e}")
        return SolveReport(u, 1, res, "direct")

    if method != "gmres":
        raise ValueError(f"unknown method {method!r}")
    u, its, info = _gmres(A, b, tol, max_iter)
    res = relative_residual(A, u, b)
    if res <= tol:
        return SolveReport(u, its, res, "gmres")
    if n <= DENSE_LIMIT:
        log.info("gmres stalled at residual %.3e after %d iterations; dense fallback", res, its)
        u = _dense_solve(A, b)
        res = relative_residual(A, u, b)
        if res <= tol:
            return SolveReport(u, its, res, "dense-lu")
    raise NoConvergence(max_iter, best=u, residual=res)


@dataclass
class ConditionEstimate:
    kappa: float
    sigma_max: float
    sigma_min: float
    residuals: dict = field(default_factory=dict)


def estimate_condition(A, iterations=50):
    """``kappa_2 ~ sigma_max / sigma_min`` from power and inverse iteration on ``A^T A``.

    The start vector is the normalized all-ones vector so estimates are
    reproducible.  Inverse iteration reuses one sparse LU factorization.
    """
    A = sp.csc_matrix(A)
    n = A.shape[0]
    start = np.ones(n) / np.sqrt(n)
    AT = A.T.tocsr()

    v = start.copy()
    lam_max = 0.0
    for _ in range(iterations):
        w = AT @ (A @ v)
        lam_max = float(v @ w)
        v = w / np.linalg.norm(w)
    res_max = float(np.linalg.norm(AT @ (A @ v) - (v @ (AT @ (A @ v))) * v))

    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    v = start.copy()
    mu = 0.0
    for _ in range(iterations):
        w = lu.solve(lu.solve(v, trans="T"))
        mu = float(v @ w)
        v = w / np.linalg.norm(w)
    lam_min = 1.0 / mu
    res_min = float(np.linalg.norm(AT @ (A @ v) - lam_min * v))
    smax, smin = np.sqrt(lam_max), np.sqrt(lam_min)
    return ConditionEstimate(smax / smin, smax, smin, {"power": res_max, "inverse": res_min})
