"""Fit/transform model for kernel discriminant analysis, plus persistence.

The projection in feature space is Psi = Phi_c W with Phi_c the centered
training map, so a point x embeds as z = W^T kc(x) where kc(x) is its
kernel row centered with the training statistics.
"""

import struct
import time
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg

from . import kernels
from .errors import (
    FitError,
    InputError,
    ModelChecksumError,
    ModelFileError,
    ModelTruncatedError,
    ModelVersionError,
    SolverError,
    StateError,
)
from .kernels import GramBundle, KernelSpec
from .scatter import build_partition, factor_kb_kw_kt
from .solvers import (
    SolverOptions,
    fill_ranks,
    oracle_pinv_gep,
    residual,
    solve_crossproduct,
    solve_gsvd_cod,
    solve_reg_cholqr,
    solve_spectral_regression,
    solve_svd_total,
)

VARIANTS = ("RAW", "KDA", "KUDA", "OKDA")
SOLVER_NAMES = (
    "spectral_regression",
    "gsvd_cod",
    "svd_total",
    "reg_cholqr",
    "crossproduct",
    "oracle",
)
SOLVER_ALIASES = {
    "sr": "spectral_regression",
    "srkda": "spectral_regression",
    "gsvd": "gsvd_cod",
    "svd": "svd_total",
    "cholqr": "reg_cholqr",
    "cross": "crossproduct",
}
# KUDA/OKDA drop directions whose Gram eigenvalue falls below this fraction of the largest
DEGENERATE_TOL = 1e-8
# KDA keeps a column unscaled (null(S_w) branch) when w'S_w w <= KDA_NULL_TOL * w'S_t w
KDA_NULL_TOL = 1e-6


def solver_name(name):
    name = SOLVER_ALIASES.get(name, name)
    if name not in SOLVER_NAMES:
        raise InputError(f"unknown solver {name!r}; expected one of {SOLVER_NAMES}")
    return name


@dataclass
class FitContext:
    """Training-time matrices needed to re-normalize a fitted model.

    Not persisted; a model loaded from disk has no context.
    """

    K_centered: np.ndarray
    S_b: np.ndarray
    S_w: np.ndarray
    S_t: np.ndarray


@dataclass
class NdaModel:
    kernel: KernelSpec
    train_X: np.ndarray
    col_means: np.ndarray
    grand_mean: float
    W: np.ndarray
    eigvals: np.ndarray
    variant: str = "RAW"
    solver: str = "spectral_regression"
    report: Optional[object] = None
    timings: dict = field(default_factory=dict)
    context: Optional[FitContext] = field(default=None, repr=False, compare=False)

    @property
    def n_dims(self):
        return int(self.W.shape[1])

    @property
    def n_features(self):
        return int(self.train_X.shape[1])

    def centering(self):
        return GramBundle(
            K=np.empty((0, 0)),
            n_train=self.train_X.shape[0],
            col_means=self.col_means,
            grand_mean=self.grand_mean,
        )

    def transform(self, X_new):
        return transform(self, X_new)


def _scatter_from_factors(K_b, K_w, K_t):
    sym = lambda M: 0.5 * (M + M.T)  # noqa: E731
    return sym(K_b @ K_b.T), sym(K_w @ K_w.T), sym(K_t @ K_t.T)


def fit(data, kernel, solver="spectral_regression", opts=None, pencil="total", diagnostics=True):
    """Fit a discriminant projection on ``data`` (a LabeledDataset).

    ``pencil`` selects the second pencil matrix ("total" or "within") for the
    solvers that take it explicitly (reg_cholqr, crossproduct, oracle).
    With ``diagnostics`` the residual, ranks and rank condition are computed;
    that costs a few dense N x N products and eigenvalue sweeps.
    """
    solver = solver_name(solver)
    opts = opts or SolverOptions()
    if pencil not in ("total", "within"):
        raise InputError(f"pencil must be 'total' or 'within', got {pencil!r}")
    if pencil == "within" and solver in ("spectral_regression", "gsvd_cod", "svd_total"):
        raise InputError(f"solver {solver} only solves the total-scatter pencil")
    X = np.asarray(data.X, dtype=float)
    if X.shape[0] < 2:
        raise FitError(f"need at least two observations, got {X.shape[0]}")
    part = build_partition(data.labels)
    if part.n_classes < 2:
        raise FitError("need at least two classes")
    d_target = part.n_classes - 1

    timings = {}
    t0 = time.perf_counter()
    bundle = kernels.gram_matrix(kernel, X)
    timings["gram_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    bundle = kernels.center_gram(bundle)
    timings["center_s"] = time.perf_counter() - t0
    Kc = bundle.K_centered

    t0 = time.perf_counter()
    try:
        if solver == "spectral_regression":
            timings["prep_s"] = 0.0
            result = solve_spectral_regression(Kc, part, opts, d_target)
        else:
            K_b, K_w, K_t = factor_kb_kw_kt(Kc, part)
            if solver == "gsvd_cod":
                timings["prep_s"] = time.perf_counter() - t0
                result = solve_gsvd_cod(K_b, K_w, opts, d_target)
            elif solver == "svd_total":
                timings["prep_s"] = time.perf_counter() - t0
                result = solve_svd_total(K_t, None, opts, d_target, K_b=K_b)
            else:
                S_b = K_b @ K_b.T
                S = K_w @ K_w.T if pencil == "within" else K_t @ K_t.T
                S_b, S = 0.5 * (S_b + S_b.T), 0.5 * (S + S.T)
                timings["prep_s"] = time.perf_counter() - t0
                if solver == "reg_cholqr":
                    result = solve_reg_cholqr(S_b, S, opts, d_target)
                elif solver == "crossproduct":
                    result = solve_crossproduct(K_b, S, opts, d_target)
                else:
                    result = oracle_pinv_gep(S_b, S, opts.rank_tol_rel, d_target)
    except SolverError as exc:
        raise SolverError(f"{solver} failed on N={X.shape[0]}, C={part.n_classes}: {exc}") from exc
    timings["solve_s"] = result.wall_time

    context = diagnose(result, Kc, part, opts, pencil) if diagnostics else None

    if result.n_dims < 1:
        raise FitError(f"{solver} returned no discriminant directions")
    return NdaModel(
        kernel=kernel,
        train_X=X.copy(),
        col_means=bundle.col_means,
        grand_mean=bundle.grand_mean,
        W=result.W,
        eigvals=result.eigvals,
        variant="RAW",
        solver=solver,
        report=result,
        timings=timings,
        context=context,
    )


def diagnose(result, K_centered, part, opts=None, pencil="total"):
    """Fill residual, ranks and rank condition of ``result``; return a FitContext.

    The residual is measured against the pencil actually solved (with the
    ridge added for reg_cholqr); the ranks always describe S_b, S_w, S_t.
    """
    opts = opts or SolverOptions()
    K_b, K_w, K_t = factor_kb_kw_kt(K_centered, part)
    S_b, S_w, S_t = _scatter_from_factors(K_b, K_w, K_t)
    S = S_w if pencil == "within" else S_t
    if result.solver == "reg_cholqr":
        S = S + result.ridge * np.eye(S.shape[0])
    residual(S_b, S, result, rank_tol_rel=opts.rank_tol_rel)
    fill_ranks(result, S_b, S_w, S_t, opts.rank_tol_rel)
    return FitContext(K_centered, S_b, S_w, S_t)


def attach_diagnostics(model, data, opts=None, pencil="total"):
    """Compute diagnostics for a model fitted with ``diagnostics=False``."""
    bundle = kernels.center_gram(kernels.gram_matrix(model.kernel, data.X))
    model.context = diagnose(model.report, bundle.K_centered, build_partition(data.labels), opts, pencil)
    return model


def _whiten_columns(W, M, what, warnings):
    """W (W^T M W)^(-1/2), dropping directions where W^T M W is degenerate."""
    G = 0.5 * (W.T @ M @ W + (W.T @ M @ W).T)
    d, Q = linalg.eigh(G)
    top = d.max() if d.size else 0.0
    keep = d > DEGENERATE_TOL * top if top > 0 else np.zeros(d.size, dtype=bool)
    if keep.all():
        return W @ (Q / np.sqrt(d)) @ Q.T
    warnings.append(f"{what}: dropped {int((~keep).sum())} degenerate direction(s)")
    return W @ (Q[:, keep] / np.sqrt(d[keep]))


def apply_constraint(model, variant):
    """Re-normalize W for a constraint variant without changing span(W).

    KUDA: W^T S_t W = I.  OKDA: W^T K_c W = I (orthonormal feature-space
    directions).  KDA: each column scaled so w^T S_w w = 1, except columns
    lying in null(S_w), which are kept as they are.  RAW: no change.
    """
    variant = variant.upper()
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "RAW":
        return replace(model, variant="RAW")
    ctx = model.context
    if ctx is None:
        raise StateError("model has no training context (loaded from disk?); refit to change variant")
    W = model.W
    warnings = []
    if variant == "KUDA":
        W = _whiten_columns(W, ctx.S_t, "KUDA", warnings)
    elif variant == "OKDA":
        W = _whiten_columns(W, ctx.K_centered, "OKDA", warnings)
    else:
        within = np.einsum("ij,ij->j", W, ctx.S_w @ W)
        total = np.einsum("ij,ij->j", W, ctx.S_t @ W)
        null = within <= KDA_NULL_TOL * np.maximum(total, np.finfo(float).tiny)
        scale = np.where(null, 1.0, 1.0 / np.sqrt(np.where(null, 1.0, within)))
        W = W * scale
    num = np.einsum("ij,ij->j", W, ctx.S_b @ W)
    den = np.einsum("ij,ij->j", W, ctx.S_t @ W)
    eigvals = num / np.where(den > 0, den, 1.0)
    report = model.report
    if report is not None and warnings:
        report.info.setdefault("warnings", []).extend(warnings)
    return replace(model, W=W, eigvals=eigvals, variant=variant)


def transform(model, X_new):
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.shape[1] != model.n_features:
        raise InputError(f"expected {model.n_features} features, got {X_new.shape[1]}")
    rows = kernels.cross_gram(model.kernel, model.train_X, X_new)
    return kernels.center_cross(rows, model.centering()) @ model.W


# -- persistence -----------------------------------------------------------------

MAGIC = b"AKDAMDL\x00"
FORMAT_VERSION = 1
# magic, version, N, L, D, kernel kind, degree, gamma, coef0, variant, solver, payload bytes
_HEADER = struct.Struct("<8sIQQQBIddBBQ")
_CRC = struct.Struct("<I")
_KINDS = kernels.KERNEL_KINDS


def _payload(model):
    parts = [
        np.ascontiguousarray(model.train_X, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.col_means, dtype="<f8").tobytes(),
        np.array([model.grand_mean], dtype="<f8").tobytes(),
        np.ascontiguousarray(model.W.T, dtype="<f8").tobytes(),  # column-major W
        np.ascontiguousarray(model.eigvals, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def dumps_model(model):
    n, l = model.train_X.shape
    payload = _payload(model)
    k = model.kernel
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        n,
        l,
        model.n_dims,
        _KINDS.index(k.kind),
        int(k.degree),
        float(k.gamma),
        float(k.coef0),
        VARIANTS.index(model.variant),
        SOLVER_NAMES.index(model.solver),
        len(payload),
    )
    return header + payload + _CRC.pack(zlib.crc32(payload))


def loads_model(blob):
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    if len(blob) < len(MAGIC) + 4:
        raise ModelTruncatedError("file ends inside the header")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    if len(blob) < _HEADER.size:
        raise ModelTruncatedError("file ends inside the header")
    (_, _, n, l, d, kind, degree, gamma, coef0, variant, solver, nbytes) = _HEADER.unpack_from(blob)
    expected = 8 * (n * l + n + 1 + n * d + d)
    if nbytes != expected:
        raise ModelFileError(f"header declares {nbytes} payload bytes, counts imply {expected}")
    end = _HEADER.size + nbytes
    if len(blob) < end + _CRC.size:
        raise ModelTruncatedError(f"file has {len(blob)} bytes, expected {end + _CRC.size}")
    if len(blob) > end + _CRC.size:
        raise ModelFileError(f"{len(blob) - end - _CRC.size} unexpected trailing bytes")
    payload = blob[_HEADER.size : end]
    (crc,) = _CRC.unpack_from(blob, end)
    if crc != zlib.crc32(payload):
        raise ModelChecksumError("payload checksum mismatch")
    if kind >= len(_KINDS) or variant >= len(VARIANTS) or solver >= len(SOLVER_NAMES):
        raise ModelFileError("header holds an unknown kernel, variant or solver code")

    values = np.frombuffer(payload, dtype="<f8").astype(float)
    offset = 0

    def take(count):
        nonlocal offset
        chunk = values[offset : offset + count]
        offset += count
        return chunk

    train_X = take(n * l).reshape(n, l).copy()
    col_means = take(n).copy()
    grand_mean = float(take(1)[0])
    W = take(n * d).reshape(d, n).T.copy()
    eigvals = take(d).copy()
    return NdaModel(
        kernel=KernelSpec(_KINDS[kind], gamma=gamma, degree=degree, coef0=coef0),
        train_X=train_X,
        col_means=col_means,
        grand_mean=grand_mean,
        W=W,
        eigvals=eigvals,
        variant=VARIANTS[variant],
        solver=SOLVER_NAMES[solver],
    )


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
