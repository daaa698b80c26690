"""Error norms of a discrete solution against a closed-form exact solution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..femcore import triangle_rule
from ..mesh import ElementClass

SUBDIV_LEVELS = 4
SUBCELL_DEGREE = 4


@dataclass
class ErrorNorms:
    l2: float
    h1: float
    energy: float
    l2_exact_domain: Optional[float] = None


def fe_values(system, u_h, elems, points):
    """Discrete solution and its gradient at physical ``points`` ``(E, Q, 2)``."""
    ev = system.evaluator
    xref = ev.reference_points(elems, points)
    coef = u_h[system.cell_dofs(elems)]  # (E, nb)
    vals = np.einsum("eqb,eb->eq", ev.values(xref), coef)
    grads = np.einsum("eqkb,eb->eqk", ev.gradients(elems, xref), coef)
    return vals, grads


def _subdivide_reference(levels):
    """Uniform red refinement of the reference triangle, ``4**levels`` cells ``(n, 3, 2)``."""
    tris = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
        ])
    return tris


def exact_domain_l2(system, u_h, active, degree, chunk=512):
    """``||u - u_h||`` over the exact domain ``{phi < 0}``.

    Elements far from the boundary are integrated whole; elements within
    about one mesh size of it are split into ``4**4`` sub-cells that are kept
    or dropped by the sign of the exact level set at their centroid.  This is
    an approximation of the curved domain, accurate to the sub-cell size.
    """
    ls = active.levelset
    mesh = active.background
    rule = triangle_rule(degree)
    sub_rule = triangle_rule(min(degree, SUBCELL_DEGREE))
    elems = active.active
    tri = mesh.coords(elems)
    samples = np.concatenate([tri, tri.mean(axis=1, keepdims=True),
                              0.5 * (tri + np.roll(tri, -1, axis=1))], axis=1)
    phi = ls.value(samples)
    grad = np.linalg.norm(ls.gradient(samples), axis=-1)
    dist = np.abs(phi) / np.maximum(grad, 1e-12)
    band = (dist.min(axis=1) < 0.3 * active.h) | (
        (phi < 0).any(axis=1) & (phi >= 0).any(axis=1))
    whole = elems[~band & (phi < 0).all(axis=1)]
    total = 0.0

    if len(whole):
        B = system.evaluator.B[whole]
        pts = np.einsum("eij,qj->eqi", B, rule.points) + mesh.vertices[mesh.triangles[whole, 0]][:, None]
        w = np.abs(system.evaluator.det[whole])[:, None] * rule.weights[None]
        vals, _ = fe_values(system, u_h, whole, pts)
        total += float(np.sum(w * (ls.u(pts) - vals) ** 2))

    near = elems[band]
    sub = _subdivide_reference(SUBDIV_LEVELS)  # (s, 3, 2) reference
    sub_area = 0.5 / len(sub)
    sub_pts = (sub[:, None, 0] + sub_rule.points[None, :, 0, None] * (sub[:, None, 1] - sub[:, None, 0])
               + sub_rule.points[None, :, 1, None] * (sub[:, None, 2] - sub[:, None, 0]))  # (s, q, 2)
    sub_w = (2.0 * sub_area) * sub_rule.weights  # (q,)
    cent = sub.mean(axis=1)  # (s, 2)
    for start in range(0, len(near), chunk):
        es = near[start:start + chunk]
        B = system.evaluator.B[es]
        x0 = mesh.vertices[mesh.triangles[es, 0]]
        keep = ls.value(np.einsum("eij,sj->esi", B, cent) + x0[:, None]) < 0.0  # (e, s)
        pts = np.einsum("eij,sqj->esqi", B, sub_pts) + x0[:, None, None]
        E, S, Q = pts.shape[:3]
        vals, _ = fe_values(system, u_h, es, pts.reshape(E, S * Q, 2))
        err2 = (ls.u(pts).reshape(E, S * Q) - vals) ** 2
        w = np.abs(system.evaluator.det[es])[:, None, None] * sub_w[None, None, :] * keep[..., None]
        total += float(np.sum(w.reshape(E, S * Q) * err2))
    return float(np.sqrt(total))


def compute_errors(system, u_h, active, p, exact_domain=True):
    """L2 and H1-seminorm on the discrete domain, energy norm, optional exact-domain L2."""
    ls = active.levelset
    h = active.h
    vq = active.volume_quadrature(2 * p + 2)
    vals, grads = fe_values(system, u_h, vq.elems, vq.points)
    e = ls.u(vq.points) - vals
    ge = ls.grad_u(vq.points) - grads
    l2sq = float(np.sum(vq.weights * e**2))
    h1sq = float(np.sum(vq.weights * np.sum(ge**2, axis=-1)))

    bq = active.boundary_quadrature(p + 3)
    bvals, bgrads = fe_values(system, u_h, bq.elems, bq.points)
    be = ls.u(bq.points) - bvals
    bge = ls.grad_u(bq.points) - bgrads
    dn = np.einsum("sgk,sk->sg", bge, bq.normals)
    flux = float(np.sum(bq.weights * dn**2))
    trace = float(np.sum(bq.weights * be**2))
    # the exact solution is smooth, so only u_h contributes face jumps
    jump = system.jump_energy(u_h)
    energy = np.sqrt(h1sq + jump + h * flux + trace / h)

    l2x = exact_domain_l2(system, u_h, active, 2 * p + 2) if exact_domain else None
    return ErrorNorms(float(np.sqrt(l2sq)), float(np.sqrt(h1sq)), float(energy), l2x)


def energy_norm(system, v, active):
    """``|||v|||_h`` of a discrete function given by its dof vector."""
    h = active.h
    p = system.dofmap.p
    vq = active.volume_quadrature(2 * p)
    _, grads = fe_values(system, v, vq.elems, vq.points)
    bq = active.boundary_quadrature(p + 2)
    bvals, bgrads = fe_values(system, v, bq.elems, bq.points)
    dn = np.einsum("sgk,sk->sg", bgrads, bq.normals)
    total = (np.sum(vq.weights * np.sum(grads**2, axis=-1)) + system.jump_energy(v)
             + h * np.sum(bq.weights * dn**2) + np.sum(bq.weights * bvals**2) / h)
    return float(np.sqrt(total))


def eoc(errors, hs):
    """Empirical orders between consecutive levels; ``nan`` where an error is ~0."""
    out = []
    for (e0, e1), (h0, h1) in zip(zip(errors[:-1], errors[1:]), zip(hs[:-1], hs[1:])):
        if e0 is None or e1 is None or e0 <= 1e-14 or e1 <= 1e-14:
            out.append(float("nan"))
        else:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return out
