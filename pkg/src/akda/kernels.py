"""Kernel functions, Gram matrices and feature-space centering.

The feature map is never formed; everything goes through kernel
evaluations. Centering statistics are kept as O(N) vectors so that new
points can be centered consistently with the training Gram matrix.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError, StateError

KERNEL_KINDS = ("linear", "polynomial", "rbf")


@dataclass(frozen=True)
class KernelSpec:
    """Mercer kernel description.

    linear:     k(x, y) = x.y
    polynomial: k(x, y) = (gamma * x.y + coef0) ** degree
    rbf:        k(x, y) = exp(-gamma * |x - y|^2)
    """

    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind in ("rbf", "polynomial") and not self.gamma > 0:
            raise InputError(f"{self.kind} kernel needs gamma > 0, got {self.gamma}")
        if self.kind == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise InputError(f"polynomial degree must be an integer >= 1, got {self.degree}")


@dataclass(frozen=True)
class GramBundle:
    """Gram matrix plus the statistics needed to center out-of-sample rows.

    The centering fields stay ``None`` until :func:`center_gram` runs.
    """

    K: np.ndarray
    n_train: int
    K_centered: Optional[np.ndarray] = None
    col_means: Optional[np.ndarray] = None
    grand_mean: Optional[float] = None

    @property
    def is_centered(self):
        return self.K_centered is not None


def _as_rows(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] < 1:
        raise InputError(f"{name} must be a 2-D array with at least one column, got shape {X.shape}")
    return X


def _pairwise(spec, A, B):
    if spec.kind == "rbf":
        # cdist evaluates each pair independently, so k(a, b) == k(b, a) bitwise
        return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))
    dots = A @ B.T
    if spec.kind == "linear":
        return dots
    return (spec.gamma * dots + spec.coef0) ** int(spec.degree)


def eval_kernel(spec, x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size < 1:
        raise InputError(f"kernel arguments must share a dimension >= 1, got {x.size} and {y.size}")
    if spec.kind == "linear":
        return float(x @ y)
    if spec.kind == "polynomial":
        return float((spec.gamma * (x @ y) + spec.coef0) ** int(spec.degree))
    d = x - y
    return float(np.exp(-spec.gamma * (d @ d)))


def _data_matrix(data):
    return _as_rows(getattr(data, "X", data))


def gram_matrix(spec, data):
    """Return an uncentered :class:`GramBundle` for the rows of ``data``.

    ``data`` may be a LabeledDataset or a plain N x L array. The upper
    triangle is computed and mirrored, so the result is exactly symmetric.
    """
    X = _data_matrix(data)
    n = X.shape[0]
    if n < 2:
        raise InputError(f"a Gram matrix needs at least 2 observations, got {n}")
    K = _pairwise(spec, X, X)
    upper = np.triu(K)
    K = upper + np.triu(K, 1).T
    if spec.kind == "rbf":
        np.fill_diagonal(K, 1.0)
    return GramBundle(K=K, n_train=n)


def center_gram(bundle):
    """Double-center the Gram matrix (mean-centering in feature space).

    K_c = K - 1 m^T - m 1^T + g, where m holds the column means of K and g
    its grand mean; every row and column of K_c sums to zero.
    """
    K = bundle.K
    col_means = K.mean(axis=0)
    grand_mean = float(col_means.mean())
    Kc = K - col_means[None, :] - col_means[:, None] + grand_mean
    Kc = np.triu(Kc) + np.triu(Kc, 1).T
    return replace(bundle, K_centered=Kc, col_means=col_means, grand_mean=grand_mean)


def cross_gram(spec, train, X_test):
    """Kernel values between test rows (M x L) and training rows: M x N."""
    Xtr = _data_matrix(train)
    Xte = _as_rows(X_test, "X_test")
    if Xte.shape[1] != Xtr.shape[1]:
        raise InputError(
            f"test points have {Xte.shape[1]} features, model expects {Xtr.shape[1]}"
        )
    return _pairwise(spec, Xte, Xtr)


def center_cross(k_rows, bundle):
    """Center out-of-sample kernel rows with the training statistics.

    Accepts one N-vector or an M x N block of rows.
    """
    if bundle.col_means is None:
        raise StateError("Gram bundle has no centering statistics; call center_gram first")
    k = np.asarray(k_rows, dtype=float)
    if k.shape[-1] != bundle.col_means.shape[0]:
        raise InputError(
            f"kernel row has length {k.shape[-1]}, expected {bundle.col_means.shape[0]}"
        )
    row_mean = k.mean(axis=-1, keepdims=True)
    return k - row_mean - bundle.col_means + bundle.grand_mean
