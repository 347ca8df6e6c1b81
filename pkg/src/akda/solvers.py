"""Solvers for the symmetric-semidefinite pencil (S_b, S).

Every solver returns an :class:`EigResult` whose columns w_i satisfy
S_b w_i = lambda_i S w_i on the retained subspace, eigenvalues sorted in
descending order. Columns are sign-normalized (largest-magnitude entry
positive) so different solvers can be compared directly.

Available strategies:

* ``reg_cholqr``   -- ridge-regularized S, Cholesky whitening, symmetric eig.
* ``gsvd_cod``     -- GSVD of the factor pair via a complete orthogonal
                      decomposition of the stacked factors.
* ``svd_total``    -- SVD of the total-scatter factor, then a small eig.
* ``crossproduct`` -- two small eigendecompositions of cross products.
* ``spectral_regression`` -- analytic between-class eigenvectors plus one
                      regularized linear solve against the centered Gram.
* ``oracle_pinv_gep`` -- brute-force reference on range(S).
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import InputError, SolverError

EPSILON_MODES = ("absolute", "trace_scaled")


@dataclass
class SolverOptions:
    """Regularization and truncation knobs shared by all solvers.

    In ``trace_scaled`` mode the ridge actually added is
    ``epsilon * trace(S) / N`` for the matrix S being regularized.
    """

    epsilon: float = 1e-4
    rank_tol_rel: float = 1e-10
    max_dims: Optional[int] = None
    epsilon_mode: str = "trace_scaled"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.rank_tol_rel < 1:
            raise InputError(f"rank_tol_rel must lie in (0, 1), got {self.rank_tol_rel}")
        if self.epsilon_mode not in EPSILON_MODES:
            raise InputError(f"epsilon_mode must be one of {EPSILON_MODES}")
        if self.max_dims is not None and self.max_dims < 1:
            raise InputError(f"max_dims must be >= 1, got {self.max_dims}")

    def ridge_for(self, S):
        if self.epsilon_mode == "absolute":
            return float(self.epsilon)
        n = S.shape[0]
        return float(self.epsilon * max(np.trace(S), 0.0) / n)


@dataclass
class EigResult:
    W: np.ndarray
    eigvals: np.ndarray
    solver: str
    rank_t: int = 0
    rank_w: int = 0
    rank_b: int = 0
    rank_condition_holds: bool = False
    residual: float = float("nan")
    wall_time: float = 0.0
    ridge: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def n_dims(self):
        return int(self.W.shape[1])

    def summary(self):
        return {
            "solver": self.solver,
            "dims": self.n_dims,
            "eigvals": [float(v) for v in self.eigvals],
            "rank_t": self.rank_t,
            "rank_w": self.rank_w,
            "rank_b": self.rank_b,
            "rank_condition": bool(self.rank_condition_holds),
            "residual": float(self.residual),
            "wall_time_s": float(self.wall_time),
            "ridge": float(self.ridge),
        }


# -- helpers -----------------------------------------------------------------


def numerical_rank(singular_values, rank_tol_rel):
    s = np.asarray(singular_values, dtype=float).ravel()
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rank_tol_rel * s[0]))


def psd_rank(S, rank_tol_rel, reference=None):
    """Numerical rank of a symmetric PSD matrix from its eigenvalues.

    With ``reference`` the threshold is rank_tol_rel * reference instead of
    rank_tol_rel * lambda_max(S).
    """
    vals = np.clip(linalg.eigvalsh(S)[::-1], 0.0, None)
    if reference is None:
        return numerical_rank(vals, rank_tol_rel)
    return int(np.count_nonzero(vals > rank_tol_rel * reference))


def _square(S, name):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError(f"{name} must be square, got shape {S.shape}")
    return S


def _sym(M):
    return 0.5 * (M + M.T)


def _fix_signs(W):
    if W.size == 0:
        return W
    pivots = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[pivots, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs


def _dim_cap(d_target, opts):
    caps = [d for d in (d_target, opts.max_dims) if d is not None]
    return min(caps) if caps else None


def _top(vals, vecs, tol, cap, scale=None):
    """Descending eigenpairs with lambda > tol * scale, at most ``cap``.

    ``scale`` defaults to lambda_max; pass 1.0 when the values are known to
    lie in [0, 1] so that an all-round-off spectrum is not kept.
    """
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    if vals.size == 0 or vals[0] <= 0:
        keep = 0
    else:
        ref = vals[0] if scale is None else scale
        keep = int(np.count_nonzero(vals > tol * ref))
    if cap is not None:
        keep = min(keep, cap)
    return vals[:keep], vecs[:, :keep]


def _cholesky(A, what):
    """Lower Cholesky factor; SolverError when A is not numerically SPD."""
    try:
        L = linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError(
            f"Cholesky factorization of {what} failed ({exc}); increase epsilon"
        ) from None
    pivots = np.diag(L) ** 2
    floor = A.shape[0] * np.finfo(float).eps * np.max(np.abs(np.diag(A)))
    if pivots.min() <= floor:
        raise SolverError(
            f"{what} is numerically singular (smallest Cholesky pivot {pivots.min():.3e}); "
            "increase epsilon"
        )
    return L


def _finish(W, vals, solver, started, ridge=0.0, **info):
    W = _fix_signs(np.ascontiguousarray(W))
    return EigResult(
        W=W,
        eigvals=np.asarray(vals, dtype=float),
        solver=solver,
        wall_time=time.perf_counter() - started,
        ridge=ridge,
        info=info,
    )


# -- solvers -----------------------------------------------------------------


def solve_reg_cholqr(S_b, S_check, opts=None, d_target=None):
    """Cholesky whitening of S + eps*I followed by a symmetric eigensolve.

    The result satisfies W^T (S + eps I) W = I and W^T S_b W = diag(eigvals).
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    S_b = _square(S_b, "S_b")
    S = _square(S_check, "S_check")
    ridge = opts.ridge_for(S)
    if not ridge > 0:
        raise SolverError("reg_cholqr needs a positive ridge (epsilon > 0)")
    n = S.shape[0]
    L = _cholesky(S + ridge * np.eye(n), "S + eps*I")
    half = linalg.solve_triangular(L, S_b, lower=True, check_finite=False)
    Cw = _sym(linalg.solve_triangular(L, half.T, lower=True, check_finite=False))
    vals, G = linalg.eigh(Cw, check_finite=False)
    vals, G = _top(vals, G, opts.rank_tol_rel, _dim_cap(d_target, opts))
    W = linalg.solve_triangular(L, G, lower=True, trans="T", check_finite=False)
    return _finish(W, vals, "reg_cholqr", started, ridge=ridge)


def complete_orthogonal_decomposition(Z, rank_tol_rel):
    """Z ~= Q_t R P_t^T with Q_t, P_t orthonormal columns and R (t x t) lower triangular.

    Realized as column-pivoted QR, truncated at the numerical rank, followed
    by a QR of the transposed trapezoidal factor (RQ compression).
    Returns (Q_t, R, P_t).
    """
    Q, R, piv = linalg.qr(Z, mode="economic", pivoting=True, check_finite=False)
    t = numerical_rank(np.abs(np.diag(R)), rank_tol_rel)
    if t == 0:
        return Q[:, :0], R[:0, :0], np.zeros((Z.shape[1], 0))
    Z2, T = linalg.qr(R[:t, :].T, mode="economic", check_finite=False)
    P = np.empty_like(Z2)
    P[piv] = Z2
    return Q[:, :t], T.T, P


def solve_gsvd_cod(K_b, K_w, opts=None, d_target=None):
    """GSVD route: eigenpairs of (K_b K_b^T, K_b K_b^T + K_w K_w^T).

    Eigenvalues are the squared generalized singular values b_i in [0, 1];
    the returned W satisfies W^T S_t W = I on the retained subspace.
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    K_b = np.asarray(K_b, dtype=float)
    K_w = np.asarray(K_w, dtype=float)
    if K_b.shape[0] != K_w.shape[0]:
        raise InputError(f"factor row counts differ: {K_b.shape} vs {K_w.shape}")
    c = K_b.shape[1]
    Z = np.vstack([K_b.T, K_w.T])
    Q_t, R, P_t = complete_orthogonal_decomposition(Z, opts.rank_tol_rel)
    t = R.shape[0]
    if t == 0:
        raise SolverError("stacked factor [K_b, K_w]^T has numerical rank 0")
    U, sig, Vt = linalg.svd(Q_t[:c, :], full_matrices=False, check_finite=False)
    vals, V = _top(sig**2, Vt.T, opts.rank_tol_rel, _dim_cap(d_target, opts), scale=1.0)
    W = P_t @ linalg.solve_triangular(R, V, lower=True, check_finite=False)
    return _finish(W, vals, "gsvd_cod", started, cod_rank=t)


def solve_svd_total(K_t, S_b, opts=None, d_target=None, K_b=None):
    """Whiten with the thin SVD of K_t, then eigensolve the projected S_b.

    When the between factor ``K_b`` is supplied, the projected matrix is
    formed as F F^T with F = Sigma^-1 U^T K_b instead of from S_b; this
    avoids squaring round-off before dividing by small singular values.
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    K_t = np.asarray(K_t, dtype=float)
    U, s, _ = linalg.svd(K_t, full_matrices=False, check_finite=False)
    r = numerical_rank(s, opts.rank_tol_rel)
    if r == 0:
        raise SolverError("total-scatter factor K_t has numerical rank 0")
    U_r = U[:, :r] / s[:r]
    if K_b is not None:
        F = U_r.T @ np.asarray(K_b, dtype=float)
        M = _sym(F @ F.T)
    else:
        S_b = _square(S_b, "S_b")
        M = _sym(U_r.T @ S_b @ U_r)
    vals, P = linalg.eigh(M, check_finite=False)
    vals, P = _top(vals, P, opts.rank_tol_rel, _dim_cap(d_target, opts), scale=1.0)
    return _finish(U_r @ P, vals, "svd_total", started, total_rank=r)


def solve_crossproduct(K_b, S_w, opts=None, d_target=None):
    """Two-stage cross-product solver for the pencil (K_b K_b^T, S_w + eps*I).

    Stage one: eigendecomposition of the C x C cross product K_b^T K_b gives an
    orthonormal basis U_b of range(S_b) and its spectrum Lambda_b. Stage two:
    eigendecomposition of Lambda_b^(1/2) U_b^T (S_w + eps I)^-1 U_b Lambda_b^(1/2).
    Squaring K_b in stage one is what makes this route sensitive to round-off.
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    K_b = np.asarray(K_b, dtype=float)
    S_w = _square(S_w, "S_w")
    if K_b.shape[0] != S_w.shape[0]:
        raise InputError(f"K_b has {K_b.shape[0]} rows, S_w is {S_w.shape}")
    lam_b, V_b = linalg.eigh(_sym(K_b.T @ K_b), check_finite=False)
    lam_b, V_b = _top(lam_b, V_b, opts.rank_tol_rel, None)
    if lam_b.size == 0:
        raise SolverError("between-class scatter is numerically zero")
    root_b = np.sqrt(lam_b)
    U_b = (K_b @ V_b) / root_b
    ridge = opts.ridge_for(S_w)
    n = S_w.shape[0]
    L = _cholesky(S_w + ridge * np.eye(n), "S_w + eps*I")
    Y = linalg.cho_solve((L, True), U_b, check_finite=False)
    M = _sym(root_b[:, None] * (U_b.T @ Y) * root_b[None, :])
    lam, P = linalg.eigh(M, check_finite=False)
    lam, P = _top(lam, P, opts.rank_tol_rel, _dim_cap(d_target, opts))
    Gamma = (Y @ (root_b[:, None] * P)) / np.sqrt(lam)
    return _finish(Gamma, lam, "crossproduct", started, ridge=ridge, between_rank=lam_b.size)


def class_eigenvectors(p):
    """Orthonormal basis of the eigenvalue-1 eigenspace of the block matrix,
    with the all-ones direction removed.

    Gram-Schmidt (two passes) runs over [1_N, 1_{Y_1}, ..., 1_{Y_C}] in that
    order; the leading ones-vector is then discarded, as is the final
    indicator, which becomes linearly dependent. Returns an N x (C-1) matrix.
    """
    n = p.n_samples
    candidates = np.hstack([np.ones((n, 1)), p.indicator()])
    basis = []
    for v in candidates.T:
        v = v.copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-8 * np.sqrt(n):
            basis.append(v / norm)
    return np.column_stack(basis[1:]) if len(basis) > 1 else np.zeros((n, 0))


def solve_spectral_regression(K_centered, p, opts=None, d_target=None):
    """Spectral-regression route: solve (K_c + eps*I) G = V_tilde by Cholesky.

    V_tilde holds the C-1 class eigenvectors orthogonal to 1_N. Reported
    eigenvalues are diag(G^T K_c Bbar_b K_c G), sorted descending.
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    Kc = _square(K_centered, "K_centered")
    if p.n_classes < 2:
        raise InputError("spectral regression needs at least two classes")
    if Kc.shape[0] != p.n_samples:
        raise InputError(f"K_centered is {Kc.shape}, partition has {p.n_samples} samples")
    V = class_eigenvectors(p)
    ridge = opts.ridge_for(Kc)
    if not ridge > 0:
        # K_c 1_N = 0, so the unregularized system is singular for every data set
        raise SolverError(
            "K_centered + eps*I is singular for eps <= 0 (centered Gram rows sum to zero); "
            "increase epsilon"
        )
    n = Kc.shape[0]
    L = _cholesky(Kc + ridge * np.eye(n), "K_centered + eps*I")
    G = linalg.cho_solve((L, True), V, check_finite=False)
    # diag(G^T K_c Bbar_b K_c G) via per-class column sums of K_c G
    sums = p.indicator().T @ (Kc @ G)
    vals = np.sum(sums**2 / p.counts[:, None], axis=0)
    order = np.argsort(vals)[::-1]
    cap = _dim_cap(d_target, opts)
    if cap is not None:
        order = order[:cap]
    return _finish(G[:, order], vals[order], "spectral_regression", started, ridge=ridge)


def oracle_pinv_gep(S_b, S_check, rank_tol_rel=1e-10, d_target=None):
    """Reference pencil solution restricted to range(S_check), by brute force."""
    started = time.perf_counter()
    S_b = _square(S_b, "S_b")
    S = _square(S_check, "S_check")
    if S_b.shape != S.shape:
        raise InputError(f"pencil shapes differ: {S_b.shape} vs {S.shape}")
    sig, Q = linalg.eigh(S, check_finite=False)
    sig, Q = sig[::-1], Q[:, ::-1]
    r = numerical_rank(np.clip(sig, 0.0, None), rank_tol_rel)
    Q_r = Q[:, :r] / np.sqrt(sig[:r])
    M = _sym(Q_r.T @ S_b @ Q_r)
    vals, P = linalg.eigh(M, check_finite=False)
    vals, P = _top(vals, P, rank_tol_rel, d_target)
    return _finish(Q_r @ P, vals, "oracle", started, range_rank=r)


# -- diagnostics ---------------------------------------------------------------


def residual(S_b, S_check, result, S_w=None, rank_tol_rel=1e-10):
    """Max relative pencil residual over the columns of ``result.W``.

    Stores the value in ``result.residual``. When ``S_w`` is given,
    ``S_check`` is taken to be the total scatter and the rank fields and
    rank condition of ``result`` are filled as well.
    """
    S_b = _square(S_b, "S_b")
    S = _square(S_check, "S_check")
    W = result.W
    if W.shape[1] == 0:
        value = 0.0
    else:
        lam = result.eigvals
        R = S_b @ W - (S @ W) * lam
        scale = (np.linalg.norm(S_b) + lam * np.linalg.norm(S)) * np.linalg.norm(W, axis=0)
        value = float(np.max(np.linalg.norm(R, axis=0) / np.where(scale > 0, scale, 1.0)))
    result.residual = value
    if S_w is not None:
        fill_ranks(result, S_b, S_w, S, rank_tol_rel)
    return value


def fill_ranks(result, S_b, S_w, S_t, rank_tol_rel=1e-10):
    """Set r_b, r_w, r_t and the rank condition r_t == r_w + r_b.

    All three ranks use one absolute threshold, rank_tol_rel * lambda_max(S_t);
    per-matrix relative thresholds would let r_w exceed r_t.
    """
    top = float(linalg.eigvalsh(S_t)[-1])
    result.rank_t = psd_rank(S_t, rank_tol_rel, top)
    result.rank_w = psd_rank(S_w, rank_tol_rel, top)
    result.rank_b = psd_rank(S_b, rank_tol_rel, top)
    result.rank_condition_holds = result.rank_t == result.rank_w + result.rank_b
    return result


def trace_criterion(S_b, S_check, W):
    """trace((W^T S W)^+ W^T S_b W), the quantity every solver maximizes."""
    if W.shape[1] == 0:
        return 0.0
    A = _sym(W.T @ S_check @ W)
    B = _sym(W.T @ S_b @ W)
    return float(np.trace(np.linalg.pinv(A, hermitian=True) @ B))


def principal_angles(A, B):
    """Canonical angles (radians, descending) between span(A) and span(B)."""
    return linalg.subspace_angles(A, B)


SOLVERS = {
    "reg_cholqr": solve_reg_cholqr,
    "gsvd_cod": solve_gsvd_cod,
    "svd_total": solve_svd_total,
    "crossproduct": solve_crossproduct,
    "spectral_regression": solve_spectral_regression,
    "oracle": oracle_pinv_gep,
}
