import numpy as np
import pytest
from scipy import linalg

from akda import solvers
from akda.errors import InputError, SolverError
from akda.scatter import build_partition, build_scatter, centered_between, factor_kb_kw_kt
from akda.solvers import (
    EigResult,
    SolverOptions,
    class_eigenvectors,
    numerical_rank,
    oracle_pinv_gep,
    principal_angles,
    residual,
    solve_crossproduct,
    solve_gsvd_cod,
    solve_reg_cholqr,
    solve_spectral_regression,
    solve_svd_total,
    trace_criterion,
)

from conftest import random_problem

TINY = SolverOptions(epsilon=1e-12, epsilon_mode="absolute")


def _psd(rng, n, rank):
    A = rng.standard_normal((n, rank))
    return A @ A.T


def _spd(rng, n, lo=1.0, hi=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def _pencil(rng, n, n_classes, kind="rbf"):
    _, _, bundle, p = random_problem(rng, n, n_classes, kind)
    Kc = bundle.K_centered
    s = build_scatter(Kc, p)
    return Kc, p, s, factor_kb_kw_kt(Kc, p)


def test_options_validation():
    with pytest.raises(InputError):
        SolverOptions(epsilon=-1.0)
    with pytest.raises(InputError):
        SolverOptions(rank_tol_rel=0.0)
    with pytest.raises(InputError):
        SolverOptions(epsilon_mode="relative")
    assert SolverOptions(epsilon=2.0, epsilon_mode="absolute").ridge_for(np.eye(3)) == 2.0
    assert SolverOptions(epsilon=2.0).ridge_for(np.diag([1.0, 2.0, 3.0])) == pytest.approx(4.0)


def test_numerical_rank_cases():
    assert numerical_rank([1, 1e-3, 1e-16], 1e-10) == 2
    assert numerical_rank([0, 0, 0], 1e-10) == 0
    assert numerical_rank([5, 5, 5], 1e-10) == 3


# -- reg_cholqr -----------------------------------------------------------------


def test_reg_cholqr_diagonal():
    r = solve_reg_cholqr(np.diag([2.0, 0.0]), np.eye(2), TINY, d_target=1)
    assert r.eigvals[0] == pytest.approx(2.0, rel=1e-10)
    np.testing.assert_allclose(np.abs(r.W[:, 0]), [1.0, 0.0], atol=1e-10)


def test_reg_cholqr_zero_between():
    r = solve_reg_cholqr(np.zeros((4, 4)), np.eye(4), TINY, d_target=3)
    assert r.W.shape == (4, 0) and r.eigvals.size == 0


def test_reg_cholqr_matches_generalized_eigh(rng):
    n = 10
    S = _spd(rng, n)
    S_b = _psd(rng, n, 2)
    opts = SolverOptions(epsilon=1e-6, epsilon_mode="absolute")
    r = solve_reg_cholqr(S_b, S, opts, d_target=2)
    ref = linalg.eigh(S_b, S + 1e-6 * np.eye(n), eigvals_only=True)[::-1][:2]
    np.testing.assert_allclose(r.eigvals, ref, rtol=1e-8)
    o = oracle_pinv_gep(S_b, S + 1e-6 * np.eye(n), d_target=2)
    np.testing.assert_allclose(r.eigvals, o.eigvals, rtol=1e-8)
    np.testing.assert_allclose(r.W.T @ (S + 1e-6 * np.eye(n)) @ r.W, np.eye(2), atol=1e-10)


def test_reg_cholqr_singular_advises_epsilon():
    with pytest.raises(SolverError, match="epsilon"):
        solve_reg_cholqr(np.eye(3), -np.eye(3), TINY)
    with pytest.raises(SolverError, match="epsilon"):
        solve_reg_cholqr(np.eye(3), np.eye(3), SolverOptions(epsilon=0.0))


# -- gsvd_cod -------------------------------------------------------------------


def test_cod_reconstructs(rng):
    Z = rng.standard_normal((9, 3)) @ rng.standard_normal((3, 7))
    Q, R, P = solvers.complete_orthogonal_decomposition(Z, 1e-12)
    assert R.shape == (3, 3)
    np.testing.assert_allclose(np.triu(R, 1), 0.0)
    np.testing.assert_allclose(Q @ R @ P.T, Z, atol=1e-12 * np.linalg.norm(Z))
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-13)
    np.testing.assert_allclose(P.T @ P, np.eye(3), atol=1e-13)


def test_gsvd_two_singletons_linear():
    X = np.array([[0.0, 0.0], [4.0, 0.0]])
    K = X @ X.T
    J = np.eye(2) - 0.5
    Kc = J @ K @ J
    p = build_partition([0, 1])
    K_b, K_w, _ = factor_kb_kw_kt(Kc, p)
    r = solve_gsvd_cod(K_b, K_w, d_target=1)
    assert r.n_dims == 1
    assert r.eigvals[0] == pytest.approx(1.0, abs=1e-12)


def test_gsvd_zero_between(rng):
    r = solve_gsvd_cod(np.zeros((5, 2)), rng.standard_normal((5, 5)), d_target=1)
    assert r.n_dims == 0


def test_gsvd_zero_data():
    with pytest.raises(SolverError):
        solve_gsvd_cod(np.zeros((4, 2)), np.zeros((4, 4)))


def test_gsvd_trace_matches_oracle(rng):
    Kc, p, s, (K_b, K_w, _) = _pencil(rng, 20, 3)
    r = solve_gsvd_cod(K_b, K_w, d_target=2)
    o = oracle_pinv_gep(s.S_b, s.S_t, d_target=2)
    t_r = trace_criterion(s.S_b, s.S_t, r.W)
    t_o = trace_criterion(s.S_b, s.S_t, o.W)
    assert abs(t_r - t_o) <= 1e-6 * abs(t_o)
    np.testing.assert_allclose(r.W.T @ s.S_t @ r.W, np.eye(r.n_dims), atol=1e-8)


# -- svd_total ------------------------------------------------------------------


def test_svd_total_agrees_with_gsvd_on_singletons():
    X = np.array([[0.0, 1.0], [3.0, -1.0]])
    Kc = np.exp(-0.5 * ((X[:, None] - X[None]) ** 2).sum(-1))
    Kc = (np.eye(2) - 0.5) @ Kc @ (np.eye(2) - 0.5)
    p = build_partition([0, 1])
    K_b, K_w, K_t = factor_kb_kw_kt(Kc, p)
    s = build_scatter(Kc, p)
    a = solve_gsvd_cod(K_b, K_w, d_target=1)
    b = solve_svd_total(K_t, s.S_b, d_target=1)
    np.testing.assert_allclose(a.eigvals, b.eigvals, atol=1e-12)
    assert principal_angles(a.W, b.W).max() <= 1e-8


def test_svd_total_no_within_scatter(rng):
    K_t = rng.standard_normal((6, 3))
    S = K_t @ K_t.T
    r = solve_svd_total(K_t, S)
    np.testing.assert_allclose(r.eigvals, 1.0, atol=1e-10)
    assert r.n_dims == 3


def test_svd_total_zero_rank():
    with pytest.raises(SolverError):
        solve_svd_total(np.zeros((3, 3)), np.zeros((3, 3)))


def test_svd_total_subspace_matches_oracle(rng):
    Kc, p, s, (K_b, _, K_t) = _pencil(rng, 30, 4)
    o = oracle_pinv_gep(s.S_b, s.S_t, d_target=3)
    solvers.fill_ranks(o, s.S_b, s.S_w, s.S_t)
    assert o.rank_condition_holds
    for r in (solve_svd_total(K_t, s.S_b, d_target=3), solve_svd_total(K_t, None, d_target=3, K_b=K_b)):
        assert principal_angles(r.W, o.W).max() <= 1e-6


# -- crossproduct ---------------------------------------------------------------


def test_crossproduct_matches_oracle(rng):
    n = 20
    K_b = rng.standard_normal((n, 3)) @ (np.eye(3) - 1.0 / 3)  # rank 2
    S_b = K_b @ K_b.T
    S_w = _spd(rng, n)
    opts = SolverOptions(epsilon=1e-8, epsilon_mode="absolute")
    r = solve_crossproduct(K_b, S_w, opts, d_target=2)
    o = oracle_pinv_gep(S_b, S_w, d_target=2)
    assert r.n_dims == 2
    assert principal_angles(r.W, o.W).max() <= 1e-4
    np.testing.assert_allclose(r.eigvals, o.eigvals, rtol=1e-6)
    assert residual(S_b, S_w, r) <= 1e-6


def test_crossproduct_zero_within_predicts_like_svd_total():
    from akda.data import gen_gaussians, nearest_centroid_fit

    data = gen_gaussians(3, 20, 4, 10.0, seed=3)
    X = data.X - data.X.mean(axis=0)
    Kc = X @ X.T
    p = build_partition(data.labels)
    K_b, _, K_t = factor_kb_kw_kt(Kc, p)
    s = build_scatter(Kc, p)
    cross = solve_crossproduct(K_b, np.zeros_like(Kc), SolverOptions(epsilon=1e-8, epsilon_mode="absolute"), 2)
    total = solve_svd_total(K_t, s.S_b, d_target=2, K_b=K_b)
    preds = []
    for W in (cross.W, total.W):
        Z = Kc @ W
        preds.append(nearest_centroid_fit(Z, data.labels).predict(Z))
    np.testing.assert_array_equal(preds[0], preds[1])


def test_crossproduct_zero_between():
    with pytest.raises(SolverError):
        solve_crossproduct(np.zeros((4, 2)), np.eye(4))


# -- spectral regression --------------------------------------------------------


def test_class_eigenvectors_two_singletons():
    V = class_eigenvectors(build_partition([0, 1]))
    np.testing.assert_allclose(np.abs(V[:, 0]), [2**-0.5, 2**-0.5], atol=1e-15)
    assert V[0, 0] == pytest.approx(-V[1, 0])


@pytest.mark.parametrize("labels", [[0, 0, 1, 1, 1, 2], [4, 1, 4, 1, 9, 9, 9, 9], list(range(6))])
def test_class_eigenvectors_properties(labels):
    p = build_partition(labels)
    V = class_eigenvectors(p)
    n, c = p.n_samples, p.n_classes
    assert V.shape == (n, c - 1)
    np.testing.assert_allclose(V.T @ np.ones(n), 0.0, atol=1e-12)
    np.testing.assert_allclose(V.T @ V, np.eye(c - 1), atol=1e-12)
    np.testing.assert_allclose(centered_between(p) @ V, V, atol=1e-12)


def test_spectral_regression_exact_regime(rng):
    Kc, p, s, _ = _pencil(rng, 30, 4)
    r = solve_spectral_regression(Kc, p, SolverOptions(epsilon=1e-12))
    G = r.W
    E = centered_between(p)
    np.testing.assert_allclose(G.T @ Kc @ E @ Kc @ G, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(G.T @ Kc @ Kc @ G, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(r.eigvals, 1.0, atol=1e-6)


def test_spectral_regression_errors(rng):
    Kc, p, _, _ = _pencil(rng, 10, 2)
    with pytest.raises(InputError):
        solve_spectral_regression(Kc, build_partition([0] * 10))
    with pytest.raises(SolverError, match="increase epsilon"):
        solve_spectral_regression(Kc, p, SolverOptions(epsilon=0.0))


# -- oracle and diagnostics -----------------------------------------------------


def test_oracle_identity_metric(rng):
    S_b = _psd(rng, 6, 3)
    o = oracle_pinv_gep(S_b, np.eye(6))
    np.testing.assert_allclose(o.eigvals, np.linalg.eigvalsh(S_b)[::-1][:3], rtol=1e-10)


def test_oracle_equal_pair(rng):
    S = _psd(rng, 6, 4)
    np.testing.assert_allclose(oracle_pinv_gep(S, S).eigvals, 1.0, atol=1e-10)


def test_oracle_trace_identity(rng):
    S_b, S = _psd(rng, 8, 3), _psd(rng, 8, 6)
    o = oracle_pinv_gep(S_b, S)
    assert trace_criterion(S_b, S, o.W) == pytest.approx(o.eigvals.sum(), abs=1e-10)


def test_residual_cases(rng):
    S_b, S = np.diag([3.0, 1.0, 0.0]), np.diag([1.0, 2.0, 4.0])
    r = EigResult(W=np.eye(3)[:, :2] / np.sqrt([1.0, 2.0]), eigvals=np.array([3.0, 0.5]), solver="x")
    assert residual(S_b, S, r) <= 1e-14
    r.W = r.W + 1e-3 * rng.standard_normal(r.W.shape)
    assert 1e-5 < residual(S_b, S, r) < 1e-2
    empty = EigResult(W=np.zeros((3, 0)), eigvals=np.zeros(0), solver="x")
    assert residual(S_b, S, empty) == 0.0


def test_eigvals_descending_and_bounded(rng):
    Kc, p, s, (K_b, K_w, K_t) = _pencil(rng, 25, 5)
    for r in (
        solve_gsvd_cod(K_b, K_w, d_target=4),
        solve_svd_total(K_t, s.S_b, d_target=4),
        solve_reg_cholqr(s.S_b, s.S_t, d_target=4),
        solve_spectral_regression(Kc, p, d_target=4),
    ):
        assert np.all(np.diff(r.eigvals) <= 0)
        assert np.all(r.eigvals >= 0)
        assert r.n_dims <= 4


def test_rank_condition_on_kernel_pencil(rng):
    Kc, p, s, (K_b, K_w, _) = _pencil(rng, 20, 3)
    r = solve_gsvd_cod(K_b, K_w, d_target=2)
    solvers.fill_ranks(r, s.S_b, s.S_w, s.S_t)
    assert r.rank_b == 2
    assert r.rank_t >= r.rank_w
    assert r.rank_condition_holds == (r.rank_t == r.rank_w + r.rank_b)
