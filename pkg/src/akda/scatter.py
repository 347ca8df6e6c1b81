"""Class partitions, coefficient matrices and kernel scatter matrices.

Every kernel scatter matrix has the form K B K for an N x N coefficient
matrix B. With E the block "class averaging" matrix (E[n, m] = 1/N_i when
n and m both belong to class i):

    B_w = (I - E) / N
    B_b = (E - J/N) / N
    B_t = B_b + B_w          (= (I - J/N) / N)

so all scatters carry a global 1/N and class terms are weighted by the
empirical priors N_i/N. The rectangular factors satisfy K_b K_b^T = K B_b K,
K_w K_w^T = K B_w K and K_t K_t^T = K B_t K.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ClassPartition:
    """Index sets of each class, in order of first label appearance."""

    classes: tuple
    index_sets: tuple
    codes: np.ndarray

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def n_samples(self):
        return int(self.codes.shape[0])

    @property
    def counts(self):
        return np.array([len(ix) for ix in self.index_sets], dtype=int)

    @property
    def priors(self):
        return self.counts / self.n_samples

    def indicator(self):
        """N x C 0/1 class-membership matrix."""
        Y = np.zeros((self.n_samples, self.n_classes))
        Y[np.arange(self.n_samples), self.codes] = 1.0
        return Y


@dataclass(frozen=True)
class ScatterSet:
    B_b: np.ndarray
    B_w: np.ndarray
    B_t: np.ndarray
    Bbar_b: np.ndarray
    S_b: np.ndarray
    S_w: np.ndarray
    S_t: np.ndarray


def build_partition(labels):
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise InputError("cannot partition an empty label vector")
    classes = []
    lookup = {}
    codes = np.empty(labels.size, dtype=int)
    for n, lab in enumerate(labels.tolist()):
        if lab not in lookup:
            lookup[lab] = len(classes)
            classes.append(lab)
        codes[n] = lookup[lab]
    index_sets = tuple(np.flatnonzero(codes == c) for c in range(len(classes)))
    return ClassPartition(classes=tuple(classes), index_sets=index_sets, codes=codes)


def class_average_matrix(p):
    """E = sum_i (1/N_i) 1_{Y_i} 1_{Y_i}^T in original sample order."""
    same = p.codes[:, None] == p.codes[None, :]
    return np.where(same, 1.0 / p.counts[p.codes][:, None], 0.0)


def coefficient_matrices(p):
    """Return (B_b, B_w, B_t); B_t is formed as B_b + B_w."""
    n = p.n_samples
    E = class_average_matrix(p)
    B_w = (np.eye(n) - E) / n
    B_b = (E - 1.0 / n) / n
    return B_b, B_w, B_b + B_w


def centered_between(p):
    """Block-diagonal matrix with (1/N_i) J blocks, in original sample order."""
    return class_average_matrix(p)


def _check_square(K, name="K"):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"{name} must be square, got shape {K.shape}")
    return K


def _symmetrize(M):
    return 0.5 * (M + M.T)


def kernel_scatter(K, B):
    K = _check_square(K)
    B = _check_square(B, "B")
    if K.shape != B.shape:
        raise InputError(f"shape mismatch: K is {K.shape}, B is {B.shape}")
    return _symmetrize(K @ B @ K)


def between_coefficients(p):
    """N x C matrix H with H H^T = B_b.

    Column i is sqrt(N_i/N) * (1_{Y_i}/N_i - 1_N/N).
    """
    n = p.n_samples
    counts = p.counts
    scale = np.sqrt(counts / n)
    return p.indicator() * (scale / counts) - scale / n


def factor_kb_kw_kt(K, p):
    """Rectangular factors (K_b: N x C, K_w: N x N, K_t: N x N).

    Built from class means of the columns of K, so the cost is O(N^2 C)
    rather than a dense triple product.
    """
    K = _check_square(K)
    if p.n_classes < 2:
        raise InputError("between-class factor needs at least two classes")
    if K.shape[0] != p.n_samples:
        raise InputError(f"K is {K.shape}, partition has {p.n_samples} samples")
    n = p.n_samples
    root_n = np.sqrt(n)
    K_b = K @ between_coefficients(p)
    # K E: replace each column by the mean of K's columns over its class
    class_means = (K @ p.indicator()) / p.counts
    K_w = (K - class_means[:, p.codes]) / root_n
    K_t = (K - K.mean(axis=1, keepdims=True)) / root_n
    return K_b, K_w, K_t


def build_scatter(K, p):
    """Materialize every coefficient and scatter matrix for Gram matrix K."""
    B_b, B_w, B_t = coefficient_matrices(p)
    return ScatterSet(
        B_b=B_b,
        B_w=B_w,
        B_t=B_t,
        Bbar_b=centered_between(p),
        S_b=kernel_scatter(K, B_b),
        S_w=kernel_scatter(K, B_w),
        S_t=kernel_scatter(K, B_t),
    )
