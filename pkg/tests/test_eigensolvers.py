import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from newton_schur import (
    ConvergenceError,
    EigRequest,
    assemble,
    build_mesh,
    coarse_rho0,
    interface_gap,
    make_context,
    reference_volume_eig,
    smallest_interface_eig,
)
from newton_schur.eigensolvers import lanczos_smallest
from newton_schur.newton import theta_derivative
from newton_schur.schur import dense_schur_oracle

from conftest import dense_smallest, problem


def _random_symmetric(n, seed, spectrum=None):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = spectrum if spectrum is not None else np.sort(rng.uniform(-3, 10, n))
    return (Q * d) @ Q.T, d


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("n", [5, 60, 400])
def test_lanczos_matches_dense(n, k):
    A, d = _random_symmetric(n, n + k)
    res = lanczos_smallest(lambda x: A @ x, n, k=k, tol=1e-12)
    np.testing.assert_allclose(res.values, d[:k], atol=1e-10 * np.abs(d).max())
    assert np.all(res.residuals <= 1e-12)
    np.testing.assert_allclose(res.vectors.T @ res.vectors, np.eye(k), atol=1e-10)
    for i in range(k):
        assert np.linalg.norm(A @ res.vectors[:, i] - res.values[i] * res.vectors[:, i]) <= 1e-10 * np.abs(d).max()


def test_lanczos_clustered_and_degenerate_start():
    # A double eigenvalue at the bottom and a zero start vector.
    d = np.concatenate([[-1.0, -1.0], np.linspace(0.0, 5.0, 98)])
    A, _ = _random_symmetric(100, 7, d)
    res = lanczos_smallest(lambda x: A @ x, 100, k=2, v0=np.zeros(100))
    np.testing.assert_allclose(res.values, [-1.0, -1.0], atol=1e-10)


def test_lanczos_restarts_on_large_problem():
    n = 1500
    d = np.linspace(1.0, 2.0, n) ** 3
    res = lanczos_smallest(lambda x: d * x, n, k=1, tol=1e-10, krylov_dim=40)
    assert res.values[0] == pytest.approx(1.0, abs=1e-9)
    assert res.iterations > 40


def test_lanczos_iteration_cap():
    d = np.linspace(0.0, 1.0, 3000)
    with pytest.raises(ConvergenceError) as info:
        lanczos_smallest(lambda x: d * x, 3000, tol=1e-14, max_iters=60, krylov_dim=30)
    assert info.value.iterations >= 60
    assert info.value.best_residual > 0


@pytest.mark.parametrize("bad", [dict(k=0), dict(tol=0.0), dict(method="qr")])
def test_request_validation(bad):
    with pytest.raises(ValueError):
        EigRequest(**bad)


@pytest.mark.parametrize("domain,H,h", [("square", 0.25, 0.0625), ("cube", 0.5, 0.125), ("lshape", 0.25, 0.0625)])
def test_interface_eig_matches_dense_oracle(domain, H, h):
    pr = problem(domain, H, h)
    for rho in (0.0, 0.5 * (pr.lam + pr.rho0), pr.rho0):
        ctx = make_context(pr.bv, rho)
        S = dense_schur_oracle(pr.bv, rho) / ctx.mass.scale
        ref = np.linalg.eigvalsh(S)[:3]
        for method in ("dense", "lanczos"):
            res = smallest_interface_eig(ctx, EigRequest(k=3, method=method))
            np.testing.assert_allclose(res.values, ref, rtol=0, atol=1e-10 * np.abs(ref).max())
            u = res.vectors
            np.testing.assert_allclose(ctx.mass.scale * u.T @ u, np.eye(3), atol=1e-10)
            # Residual in the interface pairing.
            for i in range(3):
                r = ctx.apply(u[:, i]) - res.values[i] * ctx.mass.scale * u[:, i]
                assert np.linalg.norm(r) <= 1e-9 * np.abs(S).max() * ctx.mass.scale * np.linalg.norm(u[:, i])


def test_theta_vanishes_at_discrete_eigenvalue(square_small, cube_small, lshape_small):
    for pr in (square_small, cube_small, lshape_small):
        theta = smallest_interface_eig(make_context(pr.bv, pr.lam)).values[0]
        assert abs(theta) <= 1e-9 * pr.lam


def test_theta_decreasing_and_nonpositive(lshape_small):
    pr = lshape_small
    grid = np.linspace(pr.lam, pr.rho0, 9)
    theta = [smallest_interface_eig(make_context(pr.bv, r)).values[0] for r in grid]
    assert np.all(np.diff(theta) < 0)
    assert max(theta) <= 1e-9 * pr.lam


def test_derivative_formula_matches_finite_differences(square_small):
    pr = square_small
    for rho in np.linspace(pr.lam, pr.rho0, 5):
        ctx = make_context(pr.bv, rho)
        u = smallest_interface_eig(ctx).vectors[:, 0]
        d = theta_derivative(ctx, u)
        delta = 1e-5 * rho
        tp = smallest_interface_eig(make_context(pr.bv, rho + delta)).values[0]
        tm = smallest_interface_eig(make_context(pr.bv, rho - delta)).values[0]
        assert d < 0
        assert abs(d - (tp - tm) / (2 * delta)) <= 1e-4 * abs(d)


def test_gap_positive_and_matches_dense(cube_small):
    pr = cube_small
    for rho in np.linspace(pr.lam, pr.rho0, 4):
        ctx = make_context(pr.bv, rho)
        vals = interface_gap(ctx, 3)
        ref = np.linalg.eigvalsh(dense_schur_oracle(pr.bv, rho) / ctx.mass.scale)[:3]
        np.testing.assert_allclose(vals, ref, atol=1e-10 * np.abs(ref).max())
        assert vals[1] - vals[0] > 0


def test_gap_needs_three_unknowns():
    pr = problem("cube", 0.5, 0.5)
    with pytest.raises(ValueError):
        interface_gap(make_context(pr.bv, 0.0), 3)


def test_deterministic_bitwise(lshape_small):
    pr = lshape_small
    req = EigRequest(method="lanczos", seed=5)
    a = smallest_interface_eig(make_context(pr.bv, pr.rho0), req)
    b = smallest_interface_eig(make_context(pr.bv, pr.rho0), req)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_reference_hand_values():
    A, M, _ = assemble(build_mesh("square", 0.5, 0.5))
    assert reference_volume_eig(A, M).values[0] == pytest.approx(32.0, rel=1e-14)
    assert coarse_rho0("square", 0.5) == pytest.approx(32.0, rel=1e-14)
    assert coarse_rho0("cube", 0.5) == pytest.approx(60.0, rel=1e-14)


def test_reference_sparse_path_matches_dense():
    A, M, _ = assemble(build_mesh("square", 0.5, 1 / 64))
    assert A.shape[0] > 1500
    sparse = reference_volume_eig(A, M, EigRequest(k=2, tol=1e-13))
    assert sparse.method == "shift-invert"
    vals = sla.eigh(A.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 1])
    np.testing.assert_allclose(sparse.values, vals, rtol=1e-12)
    assert np.all(sparse.residuals <= 1e-12)
    V = sparse.vectors
    np.testing.assert_allclose(V.T @ (M @ V), np.eye(2), atol=1e-10)


def test_reference_converges_to_exact_from_above():
    for domain, exact, hs in (("square", 2 * np.pi**2, [1 / 8, 1 / 16, 1 / 32]), ("cube", 3 * np.pi**2, [1 / 4, 1 / 8])):
        vals = []
        for h in hs:
            A, M, _ = assemble(build_mesh(domain, 0.5, h))
            vals.append(reference_volume_eig(A, M).values[0])
        assert np.all(np.array(vals) > exact)
        assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("domain,H,h", [("square", 0.25, 0.0625), ("cube", 0.5, 0.125), ("lshape", 0.25, 0.0625)])
def test_coarse_eigenvalue_bounds_fine(domain, H, h):
    pr = problem(domain, H, h)
    assert pr.rho0 >= pr.lam
    assert pr.lam == pytest.approx(dense_smallest(pr.A, pr.M)[0], rel=1e-12)


def test_coarse_error_cube_finest():
    """The initial relative error for the cube at H = 1/2, h = 1/32."""
    A, M, _ = assemble(build_mesh("cube", 0.5, 1 / 32))
    lam = reference_volume_eig(A, M).values[0]
    eps0 = (coarse_rho0("cube", 0.5) - lam) / lam
    assert round(eps0, 4) == 1.0183


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 120), seed=st.integers(0, 10_000))
def test_property_lanczos_smallest(n, seed):
    A, d = _random_symmetric(n, seed)
    res = lanczos_smallest(lambda x: A @ x, n, k=1, seed=seed)
    assert res.values[0] == pytest.approx(d[0], abs=1e-9 * np.abs(d).max())
