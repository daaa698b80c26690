import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfem_nitsche import geometry, linsolve
from cutfem_nitsche.assembly import FormConfig, assemble_system
from cutfem_nitsche.exceptions import NoConvergence, SingularMatrix
from cutfem_nitsche.mesh import build_active_mesh

BOX = (-1.0, 1.0, -1.0, 1.0)


def ring_system(n, p, cfg=None, with_load=True):
    # P1 admits only the uncorrected form
    cfg = cfg or (FormConfig("nonsymmetric", 0) if p == 1 else FormConfig("symmetric", 1))
    return assemble_system(build_active_mesh(geometry.ring(), BOX, n), p, cfg, with_load=with_load)


def test_identity_one_iteration():
    b = np.random.default_rng(0).normal(size=7)
    rep = linsolve.solve(sp.identity(7), b)
    np.testing.assert_allclose(rep.solution, b, rtol=1e-14)
    assert rep.iterations == 1
    assert rep.method == "gmres"


@pytest.mark.parametrize("method", ["gmres", "direct"])
def test_diagonal_two_by_two(method):
    rep = linsolve.solve(sp.csr_matrix([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 8.0]), method=method)
    np.testing.assert_allclose(rep.solution, [1.0, 2.0], rtol=1e-14)
    assert rep.residual <= linsolve.SOLVER_TOL


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_residual_contract_random(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    for method in ("gmres", "direct"):
        rep = linsolve.solve(sp.csr_matrix(A), b, method=method)
        assert linsolve.relative_residual(sp.csr_matrix(A), rep.solution, b) <= linsolve.SOLVER_TOL
        assert rep.residual <= linsolve.SOLVER_TOL


@pytest.mark.parametrize("cfg", [FormConfig("symmetric", 1), FormConfig("nonsymmetric", 1)],
                         ids=["symmetric", "nonsymmetric"])
def test_ring_p2_gmres(cfg):
    sysm = ring_system(16, 2, cfg)
    rep = linsolve.solve(sysm.A, sysm.b, tol=1e-10, max_iter=10 * sysm.ndof, method="gmres")
    assert rep.method == "gmres"
    assert rep.iterations <= 10 * sysm.ndof
    assert linsolve.relative_residual(sysm.A, rep.solution, sysm.b) <= 1e-10
    direct = linsolve.solve(sysm.A, sysm.b, method="direct")
    assert np.max(np.abs(rep.solution - direct.solution)) <= 1e-6 * np.max(np.abs(direct.solution))


def test_no_convergence_carries_best_iterate():
    # large enough to skip the dense fallback; far too few iterations
    n = linsolve.DENSE_LIMIT + 500
    A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")
    b = np.ones(n)
    with pytest.raises(NoConvergence) as info:
        linsolve.solve(A, b, max_iter=5)
    assert info.value.best is not None and len(info.value.best) == n
    assert info.value.residual > linsolve.SOLVER_TOL
    assert info.value.max_iter == 5


def test_dense_fallback_singular():
    A = sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularMatrix):
        linsolve.solve(A, np.array([1.0, 0.0]))


def test_direct_singular():
    A = sp.csr_matrix([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(SingularMatrix):
        linsolve.solve(A, np.array([1.0, 1.0]), method="direct")


def test_shape_mismatch():
    with pytest.raises(ValueError):
        linsolve.solve(sp.identity(3), np.ones(2))


class TestCondition:
    def test_identity(self):
        est = linsolve.estimate_condition(sp.identity(10))
        assert est.kappa == pytest.approx(1.0, abs=1e-6)

    def test_diagonal(self):
        est = linsolve.estimate_condition(sp.diags([1.0, 100.0]))
        assert est.kappa == pytest.approx(100.0, rel=0.01)

    def test_against_svd(self):
        sysm = ring_system(8, 1, with_load=False)
        s = np.linalg.svd(sysm.A.toarray(), compute_uv=False)
        est = linsolve.estimate_condition(sysm.A)
        assert est.kappa == pytest.approx(s[0] / s[-1], rel=0.05)
        assert est.sigma_max == pytest.approx(s[0], rel=1e-3)

    def test_deterministic(self):
        sysm = ring_system(8, 1, with_load=False)
        assert linsolve.estimate_condition(sysm.A).kappa == linsolve.estimate_condition(sysm.A).kappa

    def test_growth_under_refinement(self):
        k32 = linsolve.estimate_condition(ring_system(32, 1, with_load=False).A).kappa
        k64 = linsolve.estimate_condition(ring_system(64, 1, with_load=False).A).kappa
        assert 2 <= k64 / k32 <= 8

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            linsolve.estimate_condition(sp.csr_matrix([[1.0, 0.0], [0.0, 0.0]]))
