"""Assembly of the Nitsche system with boundary value correction and ghost penalty.

Matrix rows are test functions, columns trial functions:
``A[i, j] = a_h(phi_j, phi_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse as sp

from . import geometry
from .exceptions import ConfigError
from .femcore import affine_maps, build_dof_map, reference_element, segment_rule

VARIANTS = ("nonsymmetric", "symmetric", "exact_boundary")
NU_SOURCES = ("facet", "exact")


@dataclass(frozen=True)
class FormConfig:
    """Which bilinear form to assemble.

    ``variant``: ``"nonsymmetric"`` (Taylor order ``k``), ``"symmetric"``
    (``k = 1`` with ``nu_h = n_h``) or ``"exact_boundary"`` (plain Nitsche on
    the discrete boundary with ``g`` evaluated there).
    """

    variant: str = "symmetric"
    k: int = 1
    beta: float = 100.0
    gamma_j: float = 0.1
    nu_source: str = "facet"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.nu_source not in NU_SOURCES:
            raise ConfigError(f"unknown nu source {self.nu_source!r}")
        if self.beta <= 0 or self.gamma_j < 0:
            raise ConfigError("beta must be positive and gamma_j non-negative")
        if self.variant == "symmetric":
            if self.k != 1:
                raise ConfigError("the symmetric variant is defined for k = 1 only")
            if self.nu_source != "facet":
                raise ConfigError("the symmetric variant requires nu_h = n_h")
        if self.variant == "exact_boundary" and self.k != 0:
            object.__setattr__(self, "k", 0)
        if not 0 <= self.k <= 2:
            raise ConfigError(f"Taylor order k must be in 0..2, got {self.k}")

    @property
    def taylor_order(self):
        return 0 if self.variant == "exact_boundary" else self.k

    def check_order(self, p):
        if self.taylor_order >= 1 and self.taylor_order > p - 1:
            raise ConfigError(f"Taylor order k={self.taylor_order} needs p >= {self.taylor_order + 1}, got p={p}")


def taylor_row(derivs, rho, k):
    """Coefficients of ``T_k`` for every basis function.

    ``derivs[j]`` holds ``D_nu^j`` of the basis (``(..., nbasis)``) and
    ``rho`` the signed distance ``(...)``.
    """
    out = np.array(derivs[0], dtype=float, copy=True)
    for j in range(1, k + 1):
        out += derivs[j] * (rho**j / factorial(j))[..., None]
    return out


class ElementEvaluator:
    """Evaluates basis values and physical derivatives on chosen background elements."""

    def __init__(self, mesh, p):
        self.mesh = mesh
        self.ref = reference_element(p)
        self.tri = mesh.coords()
        self.B, self.Binv, self.det = affine_maps(self.tri)

    def reference_points(self, elems, x):
        """``x`` is ``(E, Q, 2)`` physical; one element per leading index."""
        shift = x - self.tri[elems][:, None, 0, :]
        return np.einsum("eij,eqj->eqi", self.Binv[elems], shift)

    def values(self, xref):
        return self.ref.eval_basis(xref)

    def gradients(self, elems, xref):
        """Physical gradients ``(E, Q, 2, nbasis)``."""
        g = self.ref.partials(xref, 1)  # slot 0: d/dy, slot 1: d/dx
        ref_grad = np.stack([g[..., 1, :], g[..., 0, :]], axis=-2)
        return np.einsum("emk,eqmb->eqkb", self.Binv[elems], ref_grad)

    def directional(self, elems, xref, direction, order):
        """``D^order`` along physical ``direction`` (``(E, Q, 2)`` or ``(E, 2)``)."""
        direction = np.asarray(direction, dtype=float)
        Binv = self.Binv[elems]
        if direction.ndim == 2:
            ref_dir = np.einsum("eij,ej->ei", Binv, direction)[:, None, :]
        else:
            ref_dir = np.einsum("eij,eqj->eqi", Binv, direction)
        return self.ref.directional(xref, ref_dir, order)


@dataclass
class BoundaryPoints:
    """Quadrature points on the discrete boundary, flattened to ``(S, G)`` arrays."""

    elems: np.ndarray  # (S,)
    x: np.ndarray  # (S, G, 2)
    weights: np.ndarray  # (S, G)
    n_h: np.ndarray  # (S, 2)
    nu: np.ndarray  # (S, G, 2)
    rho: np.ndarray  # (S, G)
    p_h: np.ndarray  # (S, G, 2)

    @property
    def delta_h(self):
        return float(np.max(np.abs(self.rho))) if self.rho.size else 0.0


def boundary_points(ls, bq, nu_source="facet", search_radius=None, h=None, sweeps=3):
    """Attach ``nu_h``, ``rho_h`` and ``p_h`` to every boundary quadrature point."""
    S, G = bq.weights.shape
    if search_radius is None:
        search_radius = 4.0 * h
    x = bq.points.reshape(-1, 2)
    nu = np.repeat(bq.normals, G, axis=0)
    rho, p = geometry.project_points(ls, x, nu, search_radius)
    if nu_source == "exact":
        for _ in range(sweeps):
            nu = geometry.exact_normal(ls, p)
            rho, p = geometry.project_points(ls, x, nu, search_radius)
    return BoundaryPoints(bq.elems, bq.points, bq.weights, bq.normals,
                          nu.reshape(S, G, 2), rho.reshape(S, G), p.reshape(S, G, 2))


class TripletBuilder:
    """Collects ``(row, col, value)`` blocks and sums duplicates on conversion."""

    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add_blocks(self, dofs, blocks):
        """``dofs`` ``(E, m)``, ``blocks`` ``(E, m, m)`` indexed ``[test, trial]``."""
        m = dofs.shape[1]
        self.rows.append(np.repeat(dofs, m, axis=1).ravel())
        self.cols.append(np.tile(dofs, (1, m)).ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n, self.n),
        ).tocsr()
        A.sum_duplicates()
        return A


def _add_vector(b, dofs, vals):
    np.add.at(b, dofs.ravel(), vals.ravel())


def assemble_volume(ev, vq, dofs, f=None):
    """Stiffness ``(grad v, grad w)`` and load ``(f, w)`` over ``K cap Omega_h``."""
    xref = ev.reference_points(vq.elems, vq.points)
    grads = ev.gradients(vq.elems, xref)
    K = np.einsum("eq,eqkb,eqkc->ebc", vq.weights, grads, grads)
    F = None
    if f is not None:
        vals = ev.values(xref)
        F = np.einsum("eq,eq,eqb->eb", vq.weights, f(vq.points), vals)
    return K, F


@dataclass
class BoundaryTerms:
    """Basis data at boundary points, all ``(S, G, nbasis)``."""

    values: np.ndarray
    normal_deriv: np.ndarray
    taylor: np.ndarray


def boundary_basis(ev, bp, k):
    xref = ev.reference_points(bp.elems, bp.x)
    derivs = [ev.values(xref)]
    for j in range(1, k + 1):
        derivs.append(ev.directional(bp.elems, xref, bp.nu, j))
    normal = ev.directional(bp.elems, xref, bp.n_h, 1)
    return BoundaryTerms(derivs[0], normal, taylor_row(derivs, bp.rho, k))


def assemble_boundary(ev, bp, cfg, h, g=None):
    """Local Nitsche blocks ``(S, nb, nb)`` and loads ``(S, nb)`` for the chosen variant."""
    k = cfg.taylor_order
    bt = boundary_basis(ev, bp, k)
    V, N, T = bt.values, bt.normal_deriv, bt.taylor
    w = bp.weights
    pen = cfg.beta / h
    if cfg.variant == "symmetric":
        # -(n.grad v, w) - (v, n.grad w) - (rho n.grad v, n.grad w) + beta/h (T1 v, T1 w)
        A = (-np.einsum("sg,sgi,sgj->sij", w, V, N)
             - np.einsum("sg,sgi,sgj->sij", w, N, V)
             - np.einsum("sg,sgi,sgj->sij", w * bp.rho, N, N)
             + pen * np.einsum("sg,sgi,sgj->sij", w, T, T))
        test_pen = T
    else:
        # -(n.grad v, w) - (T_k v, n.grad w) + beta/h (T_k v, w)
        A = (-np.einsum("sg,sgi,sgj->sij", w, V, N)
             - np.einsum("sg,sgi,sgj->sij", w, N, T)
             + pen * np.einsum("sg,sgi,sgj->sij", w, V, T))
        test_pen = V
    L = None
    if g is not None:
        gx = g(bp.x) if cfg.variant == "exact_boundary" else g(bp.p_h)
        L = np.einsum("sg,sg,sgi->si", w, gx, pen * test_pen - N)
    return A, L


def assemble_load_boundary(ev, bp, cfg, h, g):
    return assemble_boundary(ev, bp, cfg, h, g)[1]


def assemble_ghost_penalty(ev, faces, p, gamma_j, h, npoints=None):
    """Face blocks ``(F, 2 nb, 2 nb)`` over the concatenated dofs of both neighbours."""
    nb = ev.ref.nbasis
    if len(faces) == 0 or gamma_j == 0.0:
        return np.zeros((len(faces), 2 * nb, 2 * nb))
    rule = segment_rule(npoints or p + 1)
    a, b = faces.endpoints[:, 0], faces.endpoints[:, 1]
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    w = faces.lengths[:, None] * rule.weights[None, :]
    lo, hi = faces.elems[:, 0], faces.elems[:, 1]
    xl = ev.reference_points(lo, x)
    xh = ev.reference_points(hi, x)
    blocks = np.zeros((len(faces), 2 * nb, 2 * nb))
    for order in range(1, p + 1):
        dl = ev.directional(lo, xl, faces.normals, order)
        dh = ev.directional(hi, xh, faces.normals, order)
        jump = np.concatenate([dl, -dh], axis=-1)  # (F, q, 2 nb)
        blocks += gamma_j * h ** (2 * order - 1) * np.einsum("fq,fqi,fqj->fij", w, jump, jump)
    return blocks


def ghost_penalty_energy(ev, faces, p, gamma_j, h, coef_lo, coef_hi, npoints=None):
    """``j_h(v, v)`` from face jumps of ``v`` evaluated pointwise.

    Forming the jumps before squaring avoids the cancellation of ``v^T J v``,
    which loses all digits once the jumps of smooth functions are tiny.
    """
    if len(faces) == 0 or gamma_j == 0.0:
        return 0.0
    rule = segment_rule(npoints or p + 1)
    a, b = faces.endpoints[:, 0], faces.endpoints[:, 1]
    x = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    w = faces.lengths[:, None] * rule.weights[None, :]
    lo, hi = faces.elems[:, 0], faces.elems[:, 1]
    xl = ev.reference_points(lo, x)
    xh = ev.reference_points(hi, x)
    total = 0.0
    for order in range(1, p + 1):
        dl = np.einsum("fqb,fb->fq", ev.directional(lo, xl, faces.normals, order), coef_lo)
        dh = np.einsum("fqb,fb->fq", ev.directional(hi, xh, faces.normals, order), coef_hi)
        total += gamma_j * h ** (2 * order - 1) * float(np.sum(w * (dl - dh) ** 2))
    return total


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    ghost: sp.csr_matrix
    dofmap: object
    elem_to_cell: np.ndarray
    boundary: BoundaryPoints
    evaluator: ElementEvaluator
    config: FormConfig
    h: float
    extras: dict = field(default_factory=dict)

    @property
    def ndof(self):
        return self.dofmap.ndof

    def cell_dofs(self, elems):
        return self.dofmap.cell_dofs[self.elem_to_cell[elems]]

    def jump_energy(self, v):
        """``j_h(v, v)`` for a dof vector ``v``."""
        faces = self.extras["faces"]
        return ghost_penalty_energy(self.evaluator, faces, self.dofmap.p, self.config.gamma_j, self.h,
                                    v[self.cell_dofs(faces.elems[:, 0])],
                                    v[self.cell_dofs(faces.elems[:, 1])])


def assemble_system(active, p, cfg, with_load=True, search_radius=None):
    """Build ``A`` and ``b`` of the discrete problem on an :class:`~cutfem_nitsche.mesh.ActiveMesh`."""
    cfg.check_order(p)
    ls = active.levelset
    mesh = active.background
    h = active.h
    if cfg.variant == "exact_boundary" and not ls.has_solution:
        raise ConfigError("exact_boundary needs closed-form boundary data attached to the level set")
    if with_load and not ls.has_solution:
        raise ConfigError(f"no source or boundary data attached to the {ls.kind} level set")

    dm = build_dof_map(mesh.vertices, mesh.triangles[active.active], p)
    elem_to_cell = -np.ones(mesh.n_elements, dtype=np.int64)
    elem_to_cell[active.active] = np.arange(len(active.active))
    ev = ElementEvaluator(mesh, p)
    N = dm.ndof
    tb = TripletBuilder(N)
    b = np.zeros(N)

    vq = active.volume_quadrature(2 * p)
    Kv, Fv = assemble_volume(ev, vq, None, ls.f if with_load else None)
    vd = dm.cell_dofs[elem_to_cell[vq.elems]]
    tb.add_blocks(vd, Kv)
    if Fv is not None:
        _add_vector(b, vd, Fv)

    bq = active.boundary_quadrature(p + 2)
    bp = boundary_points(ls, bq, cfg.nu_source, search_radius=search_radius, h=h)
    Ab, Lb = assemble_boundary(ev, bp, cfg, h, ls.g if with_load else None)
    bd = dm.cell_dofs[elem_to_cell[bp.elems]]
    tb.add_blocks(bd, Ab)
    if Lb is not None:
        _add_vector(b, bd, Lb)

    faces = active.ghost_faces()
    Gf = assemble_ghost_penalty(ev, faces, p, cfg.gamma_j, h)
    fd = np.concatenate([dm.cell_dofs[elem_to_cell[faces.elems[:, 0]]],
                         dm.cell_dofs[elem_to_cell[faces.elems[:, 1]]]], axis=1)
    gb = TripletBuilder(N)
    gb.add_blocks(fd, Gf)
    ghost = gb.tocsr()
    A = (tb.tocsr() + ghost).tocsr()
    A.sum_duplicates()
    return LinearSystem(A, b, ghost, dm, elem_to_cell, bp, ev, cfg, h,
                        extras={"volume": vq, "faces": faces})


def write_matrix_dump(path, A):
    """Coordinate text dump, one ``i j value`` line per stored entry (0-based)."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
