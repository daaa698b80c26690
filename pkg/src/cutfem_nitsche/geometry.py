"""Implicit geometry: level sets, exact normals and the boundary map.

All level-set callables accept arrays of shape ``(..., 2)`` and are
vectorized over the leading axes.  The sign convention is fixed: the
physical domain is ``{phi < 0}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import DegenerateGradient, NoRoot

TOL_NEWTON = 1e-12
MAX_NEWTON = 30
EPS_GRAD = 1e-10
SCAN_STEPS = 32


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form exact solution with its source and Dirichlet data.

    ``u``, ``f`` and ``g`` map ``(..., 2)`` arrays to ``(...)``; ``grad_u``
    maps to ``(..., 2)``.  Coordinates are the level set's own (untranslated)
    coordinates.
    """

    u: Callable[[np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LevelSet:
    """Base class for closed-form level sets.

    Subclasses implement ``_value`` and ``_gradient`` in local coordinates.
    ``translation`` shifts the whole configuration (geometry and attached
    solution) so cut positions can be swept against a fixed mesh.
    """

    translation: tuple = (0.0, 0.0)
    solution: Optional[ManufacturedSolution] = field(default=None, compare=False)

    kind = "abstract"

    def _local(self, x):
        return np.asarray(x, dtype=float) - np.asarray(self.translation, dtype=float)

    def value(self, x):
        return self._value(self._local(x))

    def gradient(self, x):
        return self._gradient(self._local(x))

    def translated(self, offset):
        t = np.asarray(self.translation, dtype=float) + np.asarray(offset, dtype=float)
        return replace(self, translation=(float(t[0]), float(t[1])))

    def with_solution(self, solution):
        return replace(self, solution=solution)

    # manufactured data, evaluated in physical coordinates
    def _require_solution(self):
        if self.solution is None:
            raise ValueError(f"no exact solution attached to {self.kind} level set")
        return self.solution

    def u(self, x):
        return self._require_solution().u(self._local(x))

    def grad_u(self, x):
        return self._require_solution().grad_u(self._local(x))

    def f(self, x):
        return self._require_solution().f(self._local(x))

    def g(self, x):
        return self._require_solution().g(self._local(x))

    @property
    def has_solution(self):
        return self.solution is not None

    def boundary_samples(self, n=256):
        """Points on the zero level set, used for containment checks."""
        raise NotImplementedError

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(LevelSet):
    """``phi = |x - c|^2 - r^2``."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    kind = "circle"

    def _value(self, x):
        d = x - np.asarray(self.center)
        return d[..., 0] ** 2 + d[..., 1] ** 2 - self.radius**2

    def _gradient(self, x):
        return 2.0 * (x - np.asarray(self.center))

    def boundary_samples(self, n=256):
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        pts = np.stack([np.cos(t), np.sin(t)], axis=-1) * self.radius + np.asarray(self.center)
        return pts + np.asarray(self.translation)


@dataclass(frozen=True)
class Ring(LevelSet):
    """``phi = (R - r_inner)(R - r_outer)`` with ``R = |x|``."""

    r_inner: float = 0.25
    r_outer: float = 0.75

    kind = "ring"

    def _value(self, x):
        r = np.hypot(x[..., 0], x[..., 1])
        return (r - self.r_inner) * (r - self.r_outer)

    def _gradient(self, x):
        r = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(r > 0.0, r, 1.0)
        scale = np.where(r > 0.0, (2.0 * r - self.r_inner - self.r_outer) / safe, 0.0)
        return x * scale[..., None]

    def boundary_samples(self, n=256):
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        unit = np.stack([np.cos(t), np.sin(t)], axis=-1)
        pts = np.concatenate([unit * self.r_inner, unit * self.r_outer])
        return pts + np.asarray(self.translation)


@dataclass(frozen=True)
class Ellipse(LevelSet):
    """``phi = x^2/a^2 + y^2/b^2 - 1``."""

    semi_axes: tuple = (0.75, 0.5)

    kind = "ellipse"

    def _value(self, x):
        a, b = self.semi_axes
        return x[..., 0] ** 2 / a**2 + x[..., 1] ** 2 / b**2 - 1.0

    def _gradient(self, x):
        a, b = self.semi_axes
        return np.stack([2.0 * x[..., 0] / a**2, 2.0 * x[..., 1] / b**2], axis=-1)

    def boundary_samples(self, n=256):
        a, b = self.semi_axes
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        pts = np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)
        return pts + np.asarray(self.translation)


@dataclass(frozen=True)
class Affine(LevelSet):
    """Half plane ``phi = normal . x - offset``."""

    normal: tuple = (0.0, 1.0)
    offset: float = 0.0

    kind = "affine"

    def _value(self, x):
        n = np.asarray(self.normal, dtype=float)
        return x[..., 0] * n[0] + x[..., 1] * n[1] - self.offset

    def _gradient(self, x):
        n = np.asarray(self.normal, dtype=float)
        return np.broadcast_to(n, np.shape(x)).copy()

    def boundary_samples(self, n=256):
        nrm = np.asarray(self.normal, dtype=float)
        nrm = nrm / np.linalg.norm(nrm)
        tangent = np.array([-nrm[1], nrm[0]])
        s = np.linspace(-1.0, 1.0, n)
        base = nrm * self.offset / np.linalg.norm(self.normal)
        return base + s[:, None] * tangent + np.asarray(self.translation)


# -- built-in manufactured solutions -----------------------------------------

def ring_solution(r_inner=0.25, r_outer=0.75, amplitude=20.0):
    """``u = A (r_outer - R)(R - r_inner)``, source extended by zero off the ring."""
    a, b, amp = r_inner, r_outer, amplitude

    def u(x):
        r = np.hypot(x[..., 0], x[..., 1])
        return amp * (b - r) * (r - a)

    def grad_u(x):
        r = np.hypot(x[..., 0], x[..., 1])
        safe = np.where(r > 0.0, r, 1.0)
        scale = np.where(r > 0.0, amp * (a + b - 2.0 * r) / safe, 0.0)
        return x * scale[..., None]

    def f(x):
        r = np.hypot(x[..., 0], x[..., 1])
        inside = (r - a) * (r - b) < 0.0
        safe = np.where(inside, r, 1.0)
        return np.where(inside, amp * (4.0 - (a + b) / safe), 0.0)

    def g(x):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedSolution(u, grad_u, f, g)


def cosine_solution():
    """``u = cos(pi x/2) cos(pi y/2)`` with ``f = -lap u = (pi^2/2) u`` and ``g = u``."""
    k = np.pi / 2.0

    def u(x):
        return np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])

    def grad_u(x):
        cx, cy = np.cos(k * x[..., 0]), np.cos(k * x[..., 1])
        sx, sy = np.sin(k * x[..., 0]), np.sin(k * x[..., 1])
        return np.stack([-k * sx * cy, -k * cx * sy], axis=-1)

    def f(x):
        return 2.0 * k * k * u(x)

    return ManufacturedSolution(u, grad_u, f, u)


def affine_solution(coeffs):
    """``u = c0 + c1 x + c2 y`` (harmonic, so ``f = 0``); ``g`` extends off the boundary."""
    c0, c1, c2 = (float(c) for c in coeffs)

    def u(x):
        return c0 + c1 * x[..., 0] + c2 * x[..., 1]

    def grad_u(x):
        out = np.empty(np.shape(x))
        out[..., 0] = c1
        out[..., 1] = c2
        return out

    def f(x):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedSolution(u, grad_u, f, u)


def ring(r_inner=0.25, r_outer=0.75, translation=(0.0, 0.0)):
    return Ring(translation=tuple(translation), solution=ring_solution(r_inner, r_outer),
                r_inner=r_inner, r_outer=r_outer)


def ellipse(semi_axes=(0.75, 0.5), translation=(0.0, 0.0)):
    return Ellipse(translation=tuple(translation), solution=cosine_solution(),
                   semi_axes=tuple(semi_axes))


# -- point operations ---------------------------------------------------------

def level_value(ls, x):
    return ls.value(x)


def level_gradient(ls, x):
    return ls.gradient(x)


def exact_normal(ls, x, eps_grad=EPS_GRAD):
    """Unit normal ``grad phi / |grad phi|`` pointing toward increasing phi."""
    grad = np.asarray(ls.gradient(x), dtype=float)
    norm = np.linalg.norm(grad, axis=-1)
    if np.any(norm <= eps_grad):
        raise DegenerateGradient(f"|grad phi| = {np.min(norm):.3e} at {x}")
    return grad / norm[..., None]


@dataclass(frozen=True)
class BoundaryProjection:
    varsigma: float
    point: np.ndarray
    iterations: int
    converged: bool


def _newton_1d(ls, x, nu, search_radius, tol):
    s = 0.0
    for it in range(MAX_NEWTON + 1):
        p = x + s * nu
        val = float(ls.value(p))
        if abs(val) <= tol:
            return s, it, True
        if it == MAX_NEWTON:
            break
        slope = float(np.dot(ls.gradient(p), nu))
        if abs(slope) <= EPS_GRAD:
            break
        s = s - val / slope
        if abs(s) > search_radius:
            break
    return None, it, False


def _scan_roots(ls, x, nu, search_radius, tol):
    """All sign changes of phi along the segment, refined by bisection."""
    grid = np.linspace(-search_radius, search_radius, 2 * SCAN_STEPS + 1)
    vals = ls.value(x[None, :] + grid[:, None] * nu[None, :])
    roots = [float(s) for s, v in zip(grid, vals) if v == 0.0]
    iterations = 0
    for i in range(len(grid) - 1):
        va, vb = vals[i], vals[i + 1]
        if va == 0.0 or vb == 0.0 or (va > 0) == (vb > 0):
            continue
        a, b = grid[i], grid[i + 1]
        fa = va
        for _ in range(200):
            iterations += 1
            m = 0.5 * (a + b)
            fm = float(ls.value(x + m * nu))
            if abs(fm) <= tol or b - a < 1e-16:
                break
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        roots.append(m)
    return roots, iterations


def _pick_root(roots):
    # smallest magnitude, ties toward positive varsigma
    return min(roots, key=lambda s: (abs(s), -s))


def project_to_boundary(ls, x, nu, search_radius, tol=TOL_NEWTON):
    """Find the zero of ``phi(x + s nu)`` of smallest magnitude in ``|s| <= search_radius``.

    Newton from ``s = 0`` first; if it stalls or leaves the search interval
    the interval is scanned in steps of ``search_radius / 32`` and each
    bracketed root is bisected.
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    s, its, ok = _newton_1d(ls, x, nu, search_radius, tol)
    if ok:
        return BoundaryProjection(s, x + s * nu, its, True)
    roots, scan_its = _scan_roots(ls, x, nu, search_radius, tol)
    if not roots:
        raise NoRoot(f"no zero of the level set within {search_radius:.3e} of {x} along {nu}")
    s = _pick_root(roots)
    p = x + s * nu
    return BoundaryProjection(s, p, its + scan_its, bool(abs(ls.value(p)) <= tol))


def project_points(ls, x, nu, search_radius, tol=TOL_NEWTON):
    """Vectorized :func:`project_to_boundary` for ``x, nu`` of shape ``(m, 2)``.

    Returns ``(varsigma, points)``.  Points where the batched Newton iteration
    does not settle are redone one at a time with the scan fallback.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    nu = np.asarray(nu, dtype=float).reshape(-1, 2)
    s = np.zeros(len(x))
    active = np.ones(len(x), dtype=bool)
    failed = np.zeros(len(x), dtype=bool)
    for _ in range(MAX_NEWTON + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p = x[idx] + s[idx, None] * nu[idx]
        val = ls.value(p)
        done = np.abs(val) <= tol
        active[idx[done]] = False
        idx, val, p = idx[~done], val[~done], p[~done]
        slope = np.einsum("ij,ij->i", ls.gradient(p), nu[idx])
        flat = np.abs(slope) <= EPS_GRAD
        failed[idx[flat]] = True
        active[idx[flat]] = False
        idx, val, slope = idx[~flat], val[~flat], slope[~flat]
        s[idx] -= val / slope
        out = np.abs(s[idx]) > search_radius
        failed[idx[out]] = True
        active[idx[out]] = False
    failed |= active
    for i in np.flatnonzero(failed):
        s[i] = project_to_boundary(ls, x[i], nu[i], search_radius, tol).varsigma
    return s, x + s[:, None] * nu
