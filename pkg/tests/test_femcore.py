from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfem_nitsche.exceptions import DegenerateElement
from cutfem_nitsche.femcore import (build_dof_map, directional_derivative, physical_map, pullback_partials,
                                    reference_element, segment_rule, triangle_rule, affine_maps)
from cutfem_nitsche.mesh import build_background


@pytest.mark.parametrize("degree", range(0, 11))
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    assert np.all(rule.weights > 0)
    x, y = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert abs(np.sum(rule.weights * x**a * y**b) - exact) <= 1e-13


@pytest.mark.parametrize("npoints", range(1, 7))
def test_segment_rule_exactness(npoints):
    rule = segment_rule(npoints)
    for d in range(2 * npoints):
        assert np.sum(rule.weights * rule.points**d) == pytest.approx(1 / (d + 1), abs=1e-14)


@pytest.mark.parametrize("p, nb", [(1, 3), (2, 6), (3, 10)])
def test_kronecker_and_partition_of_unity(p, nb):
    ref = reference_element(p)
    assert ref.nbasis == nb
    np.testing.assert_allclose(ref.eval_basis(ref.nodes), np.eye(nb), atol=1e-12)
    total = ref.coeffs.sum(axis=0)
    assert abs(total[0] - 1.0) <= 1e-12
    assert np.max(np.abs(total[1:])) <= 1e-12


def test_p1_gradients():
    ref = reference_element(1)
    pts = np.array([[0.2, 0.3], [0.9, 0.05]])
    np.testing.assert_allclose(ref.eval_basis_derivative((1, 0), pts), [[-1, 1, 0]] * 2, atol=1e-14)
    np.testing.assert_allclose(ref.eval_basis_derivative((0, 1), pts), [[-1, 0, 1]] * 2, atol=1e-14)


def test_p2_vertex_basis_second_derivative():
    ref = reference_element(2)
    # node 1 sits at (1, 0): basis 2x^2 - x
    pts = np.random.default_rng(0).uniform(0, 0.5, (5, 2))
    np.testing.assert_allclose(ref.eval_basis(pts)[:, 1], 2 * pts[:, 0] ** 2 - pts[:, 0], atol=1e-13)
    d2 = ref.eval_basis_derivative((2, 0), pts)[:, 1]
    np.testing.assert_allclose(d2, 4.0, atol=1e-12)
    step = 1e-4
    e = np.array([step, 0.0])
    fd = (ref.eval_basis(pts + e) - 2 * ref.eval_basis(pts) + ref.eval_basis(pts - e))[:, 1] / step**2
    np.testing.assert_allclose(d2, fd, rtol=1e-6)


def test_derivatives_vanish_beyond_degree():
    ref = reference_element(2)
    assert np.all(ref.eval_basis_derivative((3, 0), np.array([0.1, 0.2])) == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.integers(1, 3), st.integers(0, 2))
def test_derivative_consistency_fd(x, y, p, order):
    """Each partial agrees with central differences of the partial one order lower."""
    ref = reference_element(p)
    pt = np.array([x, y])
    step = 1e-6
    for a in range(order + 1):
        b = order - a
        low = (a, b)
        for axis, up in ((0, (a + 1, b)), (1, (a, b + 1))):
            e = np.zeros(2)
            e[axis] = step
            fd = (ref.eval_basis_derivative(low, pt + e) - ref.eval_basis_derivative(low, pt - e)) / (2 * step)
            exact = ref.eval_basis_derivative(up, pt)
            np.testing.assert_allclose(exact, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.max(np.abs(exact))))


class TestDirectional:
    def test_order_zero_identity(self):
        ref = reference_element(2)
        pt = np.array([0.3, 0.2])
        np.testing.assert_array_equal(ref.directional(pt, np.array([0.6, 0.8]), 0), ref.eval_basis(pt))

    def test_linear_along_orthogonal(self):
        # v = x: partials (d/dy, d/dx) = (0, 1)
        partials = np.array([[0.0], [1.0]])
        assert directional_derivative(partials, np.array([0.0, 1.0]), 1)[0] == 0.0

    def test_second_derivative_of_x_squared(self):
        nu = np.array([1.0, 1.0]) / np.sqrt(2)
        # order-2 partials of x^2: slot a is d^2/dx^a dy^(2-a) -> (0, 0, 2)
        partials = np.array([[0.0], [0.0], [2.0]])
        val = directional_derivative(partials, nu, 2)[0]
        assert val == pytest.approx(1.0, abs=1e-14)
        # nested first derivatives: nu . grad(nu . grad x^2) = nu . (2 nu_x, 0) = 2 nu_x^2
        assert val == pytest.approx(2 * nu[0] ** 2, abs=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0, 2 * np.pi), st.integers(1, 3))
    def test_matches_fd_along_direction(self, angle, order):
        ref = reference_element(3)
        nu = np.array([np.cos(angle), np.sin(angle)])
        pt = np.array([0.3, 0.3])
        step = 1e-3
        lower = ref.directional(pt, nu, order - 1)
        fd = (ref.directional(pt + step * nu, nu, order - 1) - ref.directional(pt - step * nu, nu, order - 1)) / (2 * step)
        exact = ref.directional(pt, nu, order)
        assert lower.shape == exact.shape
        np.testing.assert_allclose(exact, fd, atol=1e-4 * max(1, np.max(np.abs(exact))))


class TestPhysicalMap:
    def test_identity(self):
        ref_tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        B, Binv, det = affine_maps(ref_tri[None])
        np.testing.assert_array_equal(B[0], np.eye(2))
        np.testing.assert_array_equal(Binv[0], np.eye(2))
        pts = np.array([[0.2, 0.7]])
        np.testing.assert_array_equal(physical_map(ref_tri, pts), pts)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_uniform_scaling(self, order):
        s = 0.25
        ref = reference_element(3)
        pt = np.array([0.2, 0.3])
        rp = ref.partials(pt, order)
        phys = pullback_partials(rp, np.eye(2) / s, order)
        np.testing.assert_allclose(phys, rp * s**-order, rtol=1e-13)

    def test_gradient_pullback_fd(self):
        tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        _, Binv, _ = affine_maps(tri[None])
        ref = reference_element(1)
        xhat = np.array([0.25, 0.25])
        rp = ref.partials(xhat, 1)  # slot 0 d/dy, slot 1 d/dx
        phys = pullback_partials(rp, Binv[0], 1)
        # basis 1 is xhat
        grad = np.array([phys[1, 1], phys[0, 1]])
        np.testing.assert_allclose(grad, [0.5, 0.0], atol=1e-15)

        def composed(x):
            xh = Binv[0] @ (x - tri[0])
            return ref.eval_basis(xh)[1]

        x = physical_map(tri, xhat)
        step = 1e-6
        fd = [(composed(x + step * e) - composed(x - step * e)) / (2 * step) for e in np.eye(2)]
        np.testing.assert_allclose(grad, fd, atol=1e-9)

    def test_higher_pullback_fd(self):
        tri = np.array([[0.1, 0.2], [0.5, 0.1], [0.3, 0.6]])
        _, Binv, _ = affine_maps(tri[None])
        ref = reference_element(3)
        xhat = np.array([0.3, 0.2])
        d1 = pullback_partials(ref.partials(xhat, 1), Binv[0], 1)
        d2 = pullback_partials(ref.partials(xhat, 2), Binv[0], 2)

        def phys_d1(x):
            xh = Binv[0] @ (x - tri[0])
            return pullback_partials(ref.partials(xh, 1), Binv[0], 1)

        x = physical_map(tri, xhat)
        step = 1e-6
        ex = np.array([step, 0.0])
        # d/dx of the d/dx-partial (slot 1 of order 1) is the (2, 0) partial (slot 2 of order 2)
        fd = (phys_d1(x + ex)[1] - phys_d1(x - ex)[1]) / (2 * step)
        np.testing.assert_allclose(d2[2], fd, rtol=1e-6, atol=1e-6)
        assert d1.shape == (2, 10)

    def test_degenerate(self):
        with pytest.raises(DegenerateElement):
            affine_maps(np.array([[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]]))


class TestDofMap:
    def test_single_p1(self):
        dm = build_dof_map(np.array([[0, 0], [1, 0], [0, 1.0]]), np.array([[0, 1, 2]]), 1)
        assert dm.ndof == 3

    def test_two_p1(self):
        v = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
        dm = build_dof_map(v, np.array([[0, 1, 2], [0, 2, 3]]), 1)
        assert dm.ndof == 4

    def test_two_p3_dedup(self):
        v = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        dm = build_dof_map(v, tris, 3)
        assert dm.ndof == 2 * 10 - 4
        # oracle: deduplicate the physical node coordinates independently
        ref = reference_element(3)
        pts = np.concatenate([physical_map(v[t], ref.nodes) for t in tris])
        assert len(np.unique(np.round(pts, 12), axis=0)) == 16
        # each local node's coordinate equals its global dof coordinate
        for e, t in enumerate(tris):
            np.testing.assert_allclose(dm.coords[dm.cell_dofs[e]], physical_map(v[t], ref.nodes), atol=1e-14)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_patch_reproduction(self, p):
        mesh = build_background((-1, 1, -0.5, 0.5), 3)
        dm = build_dof_map(mesh.vertices, mesh.triangles, p)
        rng = np.random.default_rng(p)
        coeff = rng.normal(size=(p + 1, p + 1))

        def poly(x):
            return sum(coeff[a, b] * x[..., 0] ** a * x[..., 1] ** b
                       for a in range(p + 1) for b in range(p + 1 - a))

        vals = poly(dm.coords)
        ref = reference_element(p)
        xhat = rng.uniform(0, 0.5, (6, 2))
        for e, t in enumerate(mesh.triangles):
            x = physical_map(mesh.vertices[t], xhat)
            uh = ref.eval_basis(xhat) @ vals[dm.cell_dofs[e]]
            np.testing.assert_allclose(uh, poly(x), atol=1e-12)

    def test_count_formula(self):
        mesh = build_background((0, 1, 0, 1), 4)
        nv, ne, nt = 25, 56, 32
        for p, expected in ((1, nv), (2, nv + ne), (3, nv + 2 * ne + nt)):
            assert build_dof_map(mesh.vertices, mesh.triangles, p).ndof == expected
