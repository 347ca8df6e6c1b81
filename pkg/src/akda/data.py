"""Datasets, loaders, synthetic generators, embedding classifiers and metrics.

Random streams come from ``numpy.random.default_rng(seed)`` (PCG64). For a
given seed and numpy's stable generator algorithm the produced bytes never
change, and no global random state is touched.
"""

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import DataError, InputError


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise InputError(f"X must be 2-D, got shape {X.shape}")
        labels = np.asarray(self.labels)
        if labels.shape != (X.shape[0],):
            raise InputError(f"{labels.size} labels for {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            raise InputError("X contains NaN or Inf entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, idx):
        return LabeledDataset(self.X[idx], self.labels[idx], self.feature_names)


# -- parsing -------------------------------------------------------------------


def _parse_float(token):
    return float(token.strip().replace("−", "-"))


def _is_number(token):
    try:
        _parse_float(token)
    except ValueError:
        return False
    return True


def _normalize_labels(raw):
    """Integral numeric labels stay integers; anything else is mapped to
    0, 1, ... in order of first appearance."""
    values = []
    for tok in raw:
        try:
            v = _parse_float(tok)
        except ValueError:
            break
        if not math.isfinite(v) or v != int(v):
            break
        values.append(int(v))
    else:
        return np.array(values, dtype=np.int64)
    mapping = {}
    for tok in raw:
        mapping.setdefault(tok.strip(), len(mapping))
    return np.array([mapping[tok.strip()] for tok in raw], dtype=np.int64)


def _read_table(path, label_col):
    """Parse a numeric CSV table; ``label_col=None`` means no label column.

    Returns (X, raw label strings or None, feature names or None).
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            rows.append((lineno, row))
    if not rows:
        raise DataError(f"{path}: empty file")

    width = len(rows[0][1])
    if label_col is not None:
        if width < 2:
            raise DataError("need at least one feature column and a label column", rows[0][0])
        label_col = {"last": width - 1, "first": 0}.get(label_col, label_col)
        if not isinstance(label_col, (int, np.integer)):
            raise InputError(f"label_col must be 'first', 'last' or an integer, got {label_col!r}")
        if label_col < 0:
            label_col += width
        if not 0 <= label_col < width:
            raise DataError(f"label column {label_col} out of range for {width} fields", rows[0][0])
    feat_cols = [j for j in range(width) if j != label_col]

    feature_names = None
    first = rows[0][1]
    if not all(_is_number(first[j]) for j in feat_cols):
        feature_names = tuple(first[j].strip() for j in feat_cols)
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")

    X = np.empty((len(rows), len(feat_cols)))
    raw_labels = [] if label_col is not None else None
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"expected {width} fields, found {len(row)}", lineno)
        for k, j in enumerate(feat_cols):
            try:
                X[i, k] = _parse_float(row[j])
            except ValueError:
                raise DataError(f"non-numeric feature {row[j]!r} in column {j + 1}", lineno) from None
            if not math.isfinite(X[i, k]):
                raise DataError(f"non-finite feature {row[j]!r} in column {j + 1}", lineno)
        if raw_labels is not None:
            raw_labels.append(row[label_col])
    return X, raw_labels, feature_names


def load_csv(path, label_col="last"):
    """Read a comma-separated file of numeric features plus one label column.

    ``label_col`` is "last", "first" or a (possibly negative) column index.

    The first row is treated as a header when any of its feature fields is
    non-numeric. Blank lines are skipped.
    """
    X, raw_labels, names = _read_table(path, label_col)
    return LabeledDataset(X, _normalize_labels(raw_labels), names)


def load_features_csv(path):
    """Read an unlabeled numeric CSV; returns (X, feature names or None)."""
    X, _, names = _read_table(path, None)
    return X, names


def load_libsvm(path):
    """Read LIBSVM/SVMlight text: ``label idx:val idx:val ...`` with 1-based,
    strictly ascending indices. Missing entries are zero."""
    records = []
    width = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            entries = []
            last = 0
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx = int(idx)
                    val = _parse_float(val)
                except ValueError:
                    raise DataError(f"malformed pair {tok!r}", lineno) from None
                if idx < 1:
                    raise DataError(f"feature index {idx} must be >= 1", lineno)
                if idx <= last:
                    raise DataError(f"indices not ascending ({idx} after {last})", lineno)
                if not math.isfinite(val):
                    raise DataError(f"non-finite value {tok!r}", lineno)
                entries.append((idx, val))
                last = idx
            width = max(width, last)
            records.append((tokens[0], entries))
    if not records:
        raise DataError(f"{path}: empty file")
    X = np.zeros((len(records), width))
    for i, (_, entries) in enumerate(records):
        for idx, val in entries:
            X[i, idx - 1] = val
    return LabeledDataset(X, _normalize_labels([lab for lab, _ in records]))


def write_csv(data, path, float_format=repr):
    """Write ``data`` as CSV with a header; ``path`` may also be an open text file."""
    names = data.feature_names or tuple(f"x{j}" for j in range(data.n_features))
    if hasattr(path, "write"):
        _write_rows(data, names, path, float_format)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(data, names, fh, float_format)


def _write_rows(data, names, fh, float_format):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(names) + ["label"])
    for x, y in zip(data.X, data.labels):
        writer.writerow([float_format(float(v)) for v in x] + [str(y)])


# -- generators ----------------------------------------------------------------


def simplex_directions(n_classes, dim):
    """Unit vectors pointing at the vertices of a regular simplex.

    Needs dim >= n_classes - 1 for a regular simplex; with fewer dimensions
    the leading coordinates are kept and renormalized.
    """
    centered = np.eye(n_classes) - 1.0 / n_classes
    basis, _ = np.linalg.qr(centered[:, : n_classes - 1])
    coords = centered @ basis
    if dim >= coords.shape[1]:
        coords = np.hstack([coords, np.zeros((n_classes, dim - coords.shape[1]))])
    else:
        coords = coords[:, :dim]
    norms = np.linalg.norm(coords, axis=1, keepdims=True)
    return coords / np.where(norms > 0, norms, 1.0)


def gen_gaussians(n_classes, n_per_class, dim, separation, seed):
    if n_classes < 2:
        raise InputError(f"need at least 2 classes, got {n_classes}")
    if dim < 1 or n_per_class < 1:
        raise InputError("dim and n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    means = separation * simplex_directions(n_classes, dim)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    X = means[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(X, labels)


def gen_circles(n, noise, seed):
    """Two concentric rings of radius 1 (label 0) and 3 (label 1)."""
    if n < 8:
        raise InputError(f"need n >= 8, got {n}")
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], [n // 2, n - n // 2])
    theta = rng.uniform(0.0, 2 * np.pi, n)
    radius = np.where(labels == 0, 1.0, 3.0) + noise * rng.standard_normal(n)
    X = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return LabeledDataset(X, labels)


def gen_xor(n, noise, seed):
    """Four blobs at (+-1, +-1) with spread ``noise``; diagonal pairs share a label."""
    if n < 8:
        raise InputError(f"need n >= 8, got {n}")
    rng = np.random.default_rng(seed)
    centers = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    blob = np.arange(n) % 4
    X = centers[blob] + noise * rng.standard_normal((n, 2))
    return LabeledDataset(X, (blob >= 2).astype(np.int64))


# -- classifiers ---------------------------------------------------------------


@dataclass(frozen=True)
class NearestCentroid:
    classes: np.ndarray
    centroids: np.ndarray

    def predict(self, Z):
        return nearest_centroid_predict(self, Z)


def _embedding(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise InputError(f"embedding must be N x D with D >= 1, got shape {Z.shape}")
    return Z


def nearest_centroid_fit(Z, labels, classes=None):
    Z = _embedding(Z)
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    centroids = []
    for c in classes:
        members = labels == c
        if not members.any():
            raise InputError(f"class {c!r} has no training samples")
        centroids.append(Z[members].mean(axis=0))
    return NearestCentroid(classes, np.array(centroids))


def nearest_centroid_predict(model, Z):
    Z = _embedding(Z)
    d2 = ((Z[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum: ties go to the lowest class index
    return model.classes[np.argmin(d2, axis=1)]


@dataclass(frozen=True)
class RidgeClassifier:
    classes: np.ndarray
    coef: np.ndarray
    intercept: np.ndarray

    def decision_function(self, Z):
        return _embedding(Z) @ self.coef + self.intercept

    def predict(self, Z):
        return self.classes[np.argmax(self.decision_function(Z), axis=1)]


def ridge_classifier_fit(Z, labels, lam=1.0):
    """One-vs-rest ridge regression on +-1 targets with an unpenalized intercept."""
    if not lam > 0:
        raise InputError(f"ridge lambda must be > 0, got {lam}")
    Z = _embedding(Z)
    labels = np.asarray(labels)
    if labels.shape != (Z.shape[0],):
        raise InputError(f"{labels.size} labels for {Z.shape[0]} rows")
    classes = np.unique(labels)
    T = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)
    z_mean = Z.mean(axis=0)
    t_mean = T.mean(axis=0)
    Zc = Z - z_mean
    A = Zc.T @ Zc + lam * np.eye(Z.shape[1])
    coef = linalg.solve(A, Zc.T @ (T - t_mean), assume_a="pos")
    return RidgeClassifier(classes, coef, t_mean - z_mean @ coef)


def ridge_classifier_predict(model, Z):
    return model.predict(Z)


# -- splitting and metrics -----------------------------------------------------


def split(data, test_fraction, seed):
    """Stratified random split; each class contributes round(f * N_i) test rows
    (at least one to each side)."""
    if not 0 < test_fraction < 1:
        raise InputError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(data.labels):
        members = np.flatnonzero(data.labels == c)
        if members.size < 2:
            raise InputError(f"class {c!r} has {members.size} sample(s); cannot stratify")
        members = rng.permutation(members)
        n_test = min(max(int(round(test_fraction * members.size)), 1), members.size - 1)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return data.subset(train_idx), data.subset(test_idx)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    confusion: np.ndarray
    per_class_recall: np.ndarray
    classes: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes],
            "confusion": self.confusion.tolist(),
            "per_class_recall": [float(r) for r in self.per_class_recall],
        }


def evaluate(pred, truth, classes: Optional[Sequence] = None):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise InputError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if classes is None:
        classes = np.unique(np.concatenate([truth, pred]))
    classes = np.asarray(classes)
    index = {c: i for i, c in enumerate(classes.tolist())}
    confusion = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(truth.tolist(), pred.tolist()):
        confusion[index[t], index[p]] += 1
    support = confusion.sum(axis=1)
    recall = np.divide(
        np.diag(confusion), support, out=np.zeros(classes.size), where=support > 0
    )
    accuracy = float(np.trace(confusion) / truth.size) if truth.size else 0.0
    return Metrics(accuracy, confusion, recall, classes)
