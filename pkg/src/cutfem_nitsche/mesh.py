"""Background triangulation, discrete domain and cut-cell geometry.

The discrete domain is ``{phi_h < 0}`` where ``phi_h`` is the piecewise
linear nodal interpolant of the level set.  Nodal zeros count as positive,
so a cut element always has exactly two sign-change edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .exceptions import DegenerateCut
from .femcore import EDGES, affine_maps, segment_rule, triangle_rule


class ElementClass(IntEnum):
    INSIDE = 0
    CUT = 1
    OUTSIDE_ACTIVE = 2
    EXCLUDED = 3


@dataclass
class BackgroundMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    h: float
    box: tuple
    n: int

    @property
    def n_elements(self):
        return len(self.triangles)

    def coords(self, elems=None):
        tri = self.triangles if elems is None else self.triangles[elems]
        return self.vertices[tri]

    def edge_neighbors(self):
        """Unique edges ``(nedges, 2)`` and their adjacent elements (``-1`` on the hull)."""
        E = len(self.triangles)
        pairs = np.stack([self.triangles[:, list(e)] for e in EDGES], axis=1).reshape(-1, 2)
        keys = np.sort(pairs, axis=1)
        edges, inv = np.unique(keys, axis=0, return_inverse=True)
        owner = np.repeat(np.arange(E), 3)
        nbr = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        inv_sorted, own_sorted = inv[order], owner[order]
        first = np.ones(len(inv_sorted), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        nbr[inv_sorted[first], 0] = own_sorted[first]
        nbr[inv_sorted[~first], 1] = own_sorted[~first]
        return edges, nbr


def build_background(box, n_subdiv):
    """Uniform ``n x n`` grid of rectangles, each cut along the same diagonal.

    ``box = (xmin, xmax, ymin, ymax)``; ``h`` is the rectangle diagonal.
    """
    if n_subdiv < 1:
        raise ValueError("n_subdiv must be positive")
    xmin, xmax, ymin, ymax = (float(v) for v in box)
    n = int(n_subdiv)
    xs = np.linspace(xmin, xmax, n + 1)
    ys = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=-1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=-1)
    upper = np.stack([v00, v11, v01], axis=-1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    h = float(np.hypot((xmax - xmin) / n, (ymax - ymin) / n))
    return BackgroundMesh(vertices, triangles, h, (xmin, xmax, ymin, ymax), n)


def interpolate_levelset(ls, mesh):
    return np.asarray(ls.value(mesh.vertices), dtype=float)


# barycentric sample points: 3 vertices, 3 edge midpoints, barycenter
_SAMPLES = np.array([
    [1, 0, 0], [0, 1, 0], [0, 0, 1],
    [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5],
    [1 / 3, 1 / 3, 1 / 3],
])


def classify_elements(ls, mesh, phi_h):
    vals = phi_h[mesh.triangles]
    neg = vals < 0.0
    n_neg = neg.sum(axis=1)
    classes = np.full(len(vals), ElementClass.EXCLUDED, dtype=np.int8)
    classes[n_neg == 3] = ElementClass.INSIDE
    classes[(n_neg > 0) & (n_neg < 3)] = ElementClass.CUT
    rest = np.flatnonzero(n_neg == 0)
    if rest.size:
        pts = np.einsum("sk,ekd->esd", _SAMPLES, mesh.vertices[mesh.triangles[rest]])
        touches = (ls.value(pts) < 0.0).any(axis=1)
        classes[rest[touches]] = ElementClass.OUTSIDE_ACTIVE
    return classes


def _canonical_crossing(xa, xb, fa, fb):
    """Zero of the linear interpolant on edge ``a-b``, computed from the endpoint listed first."""
    t = fa / (fa - fb)
    return xa + t[..., None] * (xb - xa)


def cut_geometry(mesh, phi_h, elems, vertex_ids=None):
    """Sub-triangles of ``{phi_h < 0}`` and the boundary segment for cut elements.

    Returns ``(subtris, nsub, seg_a, seg_b)``: ``subtris`` has shape
    ``(E, 2, 3, 2)`` in physical coordinates (second slot unused when
    ``nsub == 1``); ``seg_a -> seg_b`` is the piece of the discrete boundary.
    """
    tri = mesh.triangles[elems]
    X = mesh.vertices[tri]
    F = phi_h[tri]
    neg = F < 0.0
    n_neg = neg.sum(axis=1)
    if np.any((n_neg == 0) | (n_neg == 3)):
        raise DegenerateCut("element passed as cut has no sign change")
    # lone vertex: the single negative one (n_neg == 1) or single non-negative one
    lone = np.where(n_neg == 1, np.argmax(neg, axis=1), np.argmin(neg, axis=1))
    E = len(elems)
    r = np.arange(E)
    i0, i1, i2 = lone, (lone + 1) % 3, (lone + 2) % 3
    g0, g1, g2 = tri[r, i0], tri[r, i1], tri[r, i2]
    x0, x1, x2 = X[r, i0], X[r, i1], X[r, i2]
    f0, f1, f2 = F[r, i0], F[r, i1], F[r, i2]

    def crossing(ga, gb, xa, xb, fa, fb):
        swap = ga > gb
        xs = np.where(swap[:, None], xb, xa)
        xe = np.where(swap[:, None], xa, xb)
        fs = np.where(swap, fb, fa)
        fe = np.where(swap, fa, fb)
        return _canonical_crossing(xs, xe, fs, fe)

    p01 = crossing(g0, g1, x0, x1, f0, f1)
    p02 = crossing(g0, g2, x0, x2, f0, f2)
    if not (np.all(np.isfinite(p01)) and np.all(np.isfinite(p02))):
        raise DegenerateCut("non-finite boundary crossing")

    single = n_neg == 1
    sub = np.zeros((E, 2, 3, 2))
    # one negative vertex: triangle (x0, p01, p02)
    sub[single, 0] = np.stack([x0, p01, p02], axis=1)[single]
    # two negative vertices: quadrilateral (p01, x1, x2, p02)
    quad = ~single
    sub[quad, 0] = np.stack([p01, x1, x2], axis=1)[quad]
    sub[quad, 1] = np.stack([p01, x2, p02], axis=1)[quad]
    nsub = np.where(single, 1, 2)
    return sub, nsub, p01, p02


def facet_normals(mesh, phi_h, elems):
    """Unit ``grad phi_h`` per element (outward from the discrete domain)."""
    X = mesh.vertices[mesh.triangles[elems]]
    F = phi_h[mesh.triangles[elems]]
    _, Binv, _ = affine_maps(X)
    ref_grad = np.stack([F[:, 1] - F[:, 0], F[:, 2] - F[:, 0]], axis=-1)
    grad = np.einsum("eji,ej->ei", Binv, ref_grad)
    norm = np.linalg.norm(grad, axis=1)
    if np.any(norm == 0.0):
        raise DegenerateCut("flat interpolant on a cut element")
    return grad / norm[:, None]


@dataclass
class VolumeQuadrature:
    """Physical quadrature for ``K cap Omega_h``, padded to a common point count."""

    elems: np.ndarray  # (E,) background element ids
    points: np.ndarray  # (E, Q, 2) physical
    weights: np.ndarray  # (E, Q)

    @property
    def total_weight(self):
        return float(self.weights.sum())


@dataclass
class BoundaryQuadrature:
    elems: np.ndarray  # (S,) cut elements
    seg_a: np.ndarray  # (S, 2)
    seg_b: np.ndarray
    normals: np.ndarray  # (S, 2) unit n_h
    points: np.ndarray  # (S, G, 2)
    weights: np.ndarray  # (S, G)

    @property
    def lengths(self):
        return np.linalg.norm(self.seg_b - self.seg_a, axis=1)


def _map_rule(subtri, rule):
    """Map a reference rule into triangles ``(..., 3, 2)``: points ``(..., q, 2)``, weights ``(..., q)``."""
    a, b, c = subtri[..., 0, :], subtri[..., 1, :], subtri[..., 2, :]
    e1, e2 = b - a, c - a
    det = np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    pts = (a[..., None, :] + rule.points[:, 0, None] * e1[..., None, :]
           + rule.points[:, 1, None] * e2[..., None, :])
    return pts, det[..., None] * rule.weights


def cut_cell_quadrature(mesh, phi_h, classes, degree):
    """Volume quadrature on ``K cap Omega_h`` for every inside and cut element."""
    rule = triangle_rule(degree)
    q = len(rule.weights)
    inside = np.flatnonzero(classes == ElementClass.INSIDE)
    cut = np.flatnonzero(classes == ElementClass.CUT)
    elems = np.concatenate([inside, cut])
    pts = np.zeros((len(elems), 2 * q, 2))
    wts = np.zeros((len(elems), 2 * q))
    p_in, w_in = _map_rule(mesh.coords(inside), rule)
    pts[: len(inside), :q] = p_in
    wts[: len(inside), :q] = w_in
    # padded slots sit on a real point with zero weight
    pts[: len(inside), q:] = p_in
    if len(cut):
        sub, nsub, _, _ = cut_geometry(mesh, phi_h, cut)
        p_cut, w_cut = _map_rule(sub, rule)  # (C, 2, q, ...)
        w_cut[nsub == 1, 1] = 0.0
        p_cut[nsub == 1, 1] = p_cut[nsub == 1, 0]
        pts[len(inside):] = p_cut.reshape(len(cut), 2 * q, 2)
        wts[len(inside):] = w_cut.reshape(len(cut), 2 * q)
    return VolumeQuadrature(elems, pts, wts)


def boundary_segments(mesh, phi_h, classes, npoints):
    """Discrete boundary pieces of the cut elements with ``npoints`` Gauss points each."""
    cut = np.flatnonzero(classes == ElementClass.CUT)
    rule = segment_rule(npoints)
    _, _, a, b = cut_geometry(mesh, phi_h, cut)
    normals = facet_normals(mesh, phi_h, cut)
    length = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    wts = length[:, None] * rule.weights[None, :]
    return BoundaryQuadrature(cut, a, b, normals, pts, wts)


@dataclass
class GhostFaceSet:
    elems: np.ndarray  # (F, 2) lower, higher element id
    endpoints: np.ndarray  # (F, 2, 2)
    normals: np.ndarray  # (F, 2) pointing from lower to higher element
    lengths: np.ndarray

    def __len__(self):
        return len(self.elems)


def ghost_faces(mesh, classes, edges=None, neighbors=None):
    """Interior faces of the active mesh touching a cut or outside-but-active element."""
    if edges is None:
        edges, neighbors = mesh.edge_neighbors()
    interior = (neighbors >= 0).all(axis=1)
    edges, nb = edges[interior], neighbors[interior]
    c = classes[nb]
    active = (c != ElementClass.EXCLUDED).all(axis=1)
    near = ((c == ElementClass.CUT) | (c == ElementClass.OUTSIDE_ACTIVE)).any(axis=1)
    keep = active & near
    edges, nb = edges[keep], np.sort(nb[keep], axis=1)
    ends = mesh.vertices[edges]
    tangent = ends[:, 1] - ends[:, 0]
    lengths = np.linalg.norm(tangent, axis=1)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=-1) / lengths[:, None]
    cent = mesh.vertices[mesh.triangles[nb]].mean(axis=2)  # (F, 2, 2)
    flip = np.einsum("fi,fi->f", normal, cent[:, 1] - cent[:, 0]) < 0.0
    normal[flip] *= -1.0
    return GhostFaceSet(nb, ends, normal, lengths)


@dataclass
class ActiveMesh:
    """Background mesh restricted to the elements meeting ``Omega`` or ``Omega_h``."""

    background: BackgroundMesh
    levelset: object
    phi_h: np.ndarray
    classes: np.ndarray
    active: np.ndarray = field(init=False)

    def __post_init__(self):
        self.active = np.flatnonzero(self.classes != ElementClass.EXCLUDED)

    @property
    def h(self):
        return self.background.h

    def count(self, cls):
        return int(np.count_nonzero(self.classes == cls))

    def volume_quadrature(self, degree):
        return cut_cell_quadrature(self.background, self.phi_h, self.classes, degree)

    def boundary_quadrature(self, npoints):
        return boundary_segments(self.background, self.phi_h, self.classes, npoints)

    def ghost_faces(self):
        return ghost_faces(self.background, self.classes)


def build_active_mesh(ls, box, n_subdiv):
    mesh = build_background(box, n_subdiv)
    phi_h = interpolate_levelset(ls, mesh)
    classes = classify_elements(ls, mesh, phi_h)
    return ActiveMesh(mesh, ls, phi_h, classes)


def write_mesh_dump(path, active):
    """Plain-text dump: ``v x y`` per vertex, ``t i j k`` per triangle, ``c elem class`` per element."""
    mesh = active.background
    with open(path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")
        for e, c in enumerate(active.classes):
            fh.write(f"c {e} {ElementClass(c).name}\n")
