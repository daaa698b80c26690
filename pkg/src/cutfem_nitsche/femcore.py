"""Lagrange P1-P3 triangles, quadrature rules, affine maps and dof numbering.

Basis functions are stored as monomial coefficients on the reference
triangle ``{x, y >= 0, x + y <= 1}`` so partial derivatives of any order
are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi

from .exceptions import DegenerateElement

# local edges, oriented start -> end
EDGES = ((0, 1), (1, 2), (2, 0))


def monomial_exponents(degree):
    """Exponent pairs ``(a, b)`` with ``a + b <= degree``, graded order."""
    return [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]


def lattice_nodes(p):
    """Reference nodes: vertices, then edge nodes walked from each edge's start, then interior."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = list(verts)
    for a, b in EDGES:
        for t in range(1, p):
            nodes.append(verts[a] + t / p * (verts[b] - verts[a]))
    for j in range(1, p):
        for i in range(1, p - j):
            nodes.append(np.array([i / p, j / p]))
    return np.array(nodes)


class ReferenceElement:
    """Lagrange element of order ``p`` in monomial-coefficient form."""

    def __init__(self, p):
        if p not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {p}")
        self.p = p
        self.nodes = lattice_nodes(p)
        self.exponents = monomial_exponents(p)
        self.nbasis = len(self.nodes)
        vander = self._monomials(self.nodes, (0, 0))
        # basis_i = sum_m coeffs[i, m] * monomial_m
        self.coeffs = np.linalg.inv(vander).T

    def _monomials(self, x, multi_index):
        x = np.asarray(x, dtype=float)
        da, db = multi_index
        cols = []
        for a, b in self.exponents:
            if a < da or b < db:
                cols.append(np.zeros(x.shape[:-1]))
                continue
            c = factorial(a) // factorial(a - da) * factorial(b) // factorial(b - db)
            cols.append(c * x[..., 0] ** (a - da) * x[..., 1] ** (b - db))
        return np.stack(cols, axis=-1)

    def eval_basis_derivative(self, multi_index, x_ref):
        """``d^(a+b) / dx^a dy^b`` of every basis function at ``x_ref`` -> ``(..., nbasis)``."""
        return self._monomials(x_ref, multi_index) @ self.coeffs.T

    def eval_basis(self, x_ref):
        return self.eval_basis_derivative((0, 0), x_ref)

    def partials(self, x_ref, order):
        """All partials of total ``order``, stacked as ``(..., order + 1, nbasis)``.

        Slot ``a`` holds ``d^order / dx^a dy^(order - a)``.
        """
        return np.stack(
            [self.eval_basis_derivative((a, order - a), x_ref) for a in range(order + 1)], axis=-2
        )

    def directional(self, x_ref, direction, order):
        """Directional derivative of ``order`` along (not necessarily unit) ``direction``.

        ``direction`` broadcasts against the point axes of ``x_ref``.
        """
        if order == 0:
            return self.eval_basis(x_ref)
        return directional_derivative(self.partials(x_ref, order), direction, order)


def directional_derivative(partials, direction, order):
    """Combine partials of one total ``order`` into ``D_nu^order``.

    ``partials`` has shape ``(..., order + 1, nbasis)`` with slot ``a`` the
    ``(a, order - a)`` partial; ``direction`` has shape ``(..., 2)``.
    """
    direction = np.asarray(direction, dtype=float)
    if order == 0:
        return partials[..., 0, :]
    dx, dy = direction[..., 0], direction[..., 1]
    out = 0.0
    for a in range(order + 1):
        w = comb(order, a) * dx**a * dy ** (order - a)
        out = out + np.asarray(w)[..., None] * partials[..., a, :]
    return out


@lru_cache(maxsize=None)
def reference_element(p):
    return ReferenceElement(p)


# -- quadrature ----------------------------------------------------------------

@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss-Jacobi product rule on the reference triangle, exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (1.0 + t)
    wu = wj / 4.0
    s, ws = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (1.0 + s)
    wv = ws / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([U.ravel(), ((1.0 - U) * V).ravel()], axis=-1)
    w = np.outer(wu, wv).ravel()
    return QuadRule(pts, w, degree)


@lru_cache(maxsize=None)
def segment_rule(npoints):
    """Gauss-Legendre on ``[0, 1]``; exact to degree ``2 * npoints - 1``."""
    s, w = np.polynomial.legendre.leggauss(npoints)
    return QuadRule(0.5 * (1.0 + s), 0.5 * w, 2 * npoints - 1)


# -- affine element maps ---------------------------------------------------------

def affine_maps(tri_coords):
    """Jacobians ``B``, inverses and determinants for triangles ``(E, 3, 2)``."""
    tri_coords = np.asarray(tri_coords, dtype=float)
    B = np.stack([tri_coords[:, 1] - tri_coords[:, 0], tri_coords[:, 2] - tri_coords[:, 0]], axis=-1)
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    if np.any(np.abs(det) < 1e-14):
        raise DegenerateElement(f"|det B| = {np.min(np.abs(det)):.3e}")
    Binv = np.empty_like(B)
    Binv[:, 0, 0] = B[:, 1, 1] / det
    Binv[:, 1, 1] = B[:, 0, 0] / det
    Binv[:, 0, 1] = -B[:, 0, 1] / det
    Binv[:, 1, 0] = -B[:, 1, 0] / det
    return B, Binv, det


def physical_map(tri, x_ref):
    """Map reference points into triangle ``tri`` (3 x 2)."""
    tri = np.asarray(tri, dtype=float)
    B = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    return np.asarray(x_ref) @ B.T + tri[0]


def to_reference(tri_coords, Binv, x):
    """Inverse affine map; ``x`` is ``(E, ..., 2)`` with one triangle per leading index."""
    shift = x - tri_coords[:, None, 0, :] if x.ndim == 3 else x - tri_coords[:, 0, :]
    if x.ndim == 3:
        return np.einsum("eij,eqj->eqi", Binv, shift)
    return np.einsum("eij,ej->ei", Binv, shift)


def pullback_partials(ref_partials, Binv, order):
    """Physical partials of one total ``order`` from reference ones.

    ``ref_partials`` has shape ``(..., order + 1, nbasis)`` (slot ``a`` is the
    ``(a, order - a)`` partial); ``Binv`` is a single ``2 x 2`` inverse
    Jacobian.  Uses ``d/dx_k = sum_m Binv[m, k] d/dxhat_m``.
    """
    Binv = np.asarray(Binv, dtype=float)
    out = np.zeros_like(ref_partials)
    for a in range(order + 1):
        b = order - a
        # polynomial in (d0, d1); index r = power of d0
        poly = np.array([1.0])
        for _ in range(a):
            poly = _mul_linear(poly, Binv[0, 0], Binv[1, 0])
        for _ in range(b):
            poly = _mul_linear(poly, Binv[0, 1], Binv[1, 1])
        for r, c in enumerate(poly):
            if c != 0.0:
                out[..., a, :] += c * ref_partials[..., r, :]
    return out


def _mul_linear(poly, c0, c1):
    """Multiply ``sum_r poly[r] d0^r d1^(n-r)`` by ``c0 d0 + c1 d1``."""
    res = np.zeros(len(poly) + 1)
    res[1:] += c0 * poly
    res[:-1] += c1 * poly
    return res


# -- degrees of freedom -------------------------------------------------------------

@dataclass
class DofMap:
    cell_dofs: np.ndarray  # (E, nbasis)
    ndof: int
    coords: np.ndarray  # (ndof, 2)
    p: int


def build_dof_map(vertices, triangles, p):
    """Conforming numbering over the given triangles only.

    Vertex dofs come first, then edge dofs (ordered from the lower global
    vertex id), then element-interior dofs.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    ref = reference_element(p)
    E = len(triangles)
    cell = np.empty((E, ref.nbasis), dtype=np.int64)

    used, vinv = np.unique(triangles.ravel(), return_inverse=True)
    cell[:, :3] = vinv.reshape(E, 3)
    nv = len(used)
    coords = [vertices[used]]
    ndof = nv

    if p > 1:
        m = p - 1
        edge_pairs = np.stack([triangles[:, list(e)] for e in EDGES], axis=1)  # (E, 3, 2)
        lo = np.minimum(edge_pairs[..., 0], edge_pairs[..., 1])
        hi = np.maximum(edge_pairs[..., 0], edge_pairs[..., 1])
        keys = np.stack([lo, hi], axis=-1).reshape(-1, 2)
        uniq, einv = np.unique(keys, axis=0, return_inverse=True)
        einv = einv.reshape(E, 3)
        forward = (edge_pairs[..., 0] < edge_pairs[..., 1])
        for le in range(3):
            for t in range(m):
                slot = 3 + le * m + t
                pos = np.where(forward[:, le], t, m - 1 - t)
                cell[:, slot] = ndof + einv[:, le] * m + pos
        tpos = np.arange(1, p) / p
        ecoords = vertices[uniq[:, 0]][:, None, :] + tpos[None, :, None] * (
            vertices[uniq[:, 1]] - vertices[uniq[:, 0]]
        )[:, None, :]
        coords.append(ecoords.reshape(-1, 2))
        ndof += len(uniq) * m

    n_int = ref.nbasis - 3 - 3 * (p - 1)
    if n_int:
        cell[:, ref.nbasis - n_int:] = ndof + np.arange(E * n_int).reshape(E, n_int)
        tri = vertices[triangles]
        B = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)
        ipts = ref.nodes[ref.nbasis - n_int:]
        coords.append((np.einsum("eij,qj->eqi", B, ipts) + tri[:, None, 0]).reshape(-1, 2))
        ndof += E * n_int

    return DofMap(cell, ndof, np.concatenate(coords), p)
