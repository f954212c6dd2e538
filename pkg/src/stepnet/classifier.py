"""Nearest-centroid classification over network output vectors.

Each class is represented by the mean of its training outputs. A sample is
ranked against every class by Euclidean distance to that class' nearest
centroid; ties go to the smaller label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import LabelSet, N_CLASSES
from .exceptions import CountMismatch, DimensionMismatch, EmptyClass, EmptyInput, UnknownLabel

BANK_FORMAT = "stepnet.centroid_bank"
BANK_VERSION = 1

# bytes of float64 scratch per distance chunk
_CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True, eq=False)
class CentroidBank:
    """Centroids keyed by label.

    ``labels[i]`` owns ``centroids[i]`` built from ``counts[i]`` samples. A
    freshly computed bank holds one centroid per class in ascending label
    order; :func:`adapt_centroids` may append extra centroids for a label.
    """

    labels: np.ndarray  # (m,) int64
    centroids: np.ndarray  # (m, width) float32
    counts: np.ndarray  # (m,) int64

    def __post_init__(self):
        for arr in (self.labels, self.centroids, self.counts):
            arr.flags.writeable = False

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def width(self) -> int:
        return self.centroids.shape[1]

    def __len__(self):
        return len(self.labels)

    def centroid(self, label: int) -> np.ndarray:
        """The primary (first registered) centroid of ``label``."""
        idx = np.flatnonzero(self.labels == label)
        if not idx.size:
            raise UnknownLabel(label)
        return self.centroids[idx[0]]

    def count(self, label: int) -> int:
        idx = np.flatnonzero(self.labels == label)
        if not idx.size:
            raise UnknownLabel(label)
        return int(self.counts[idx].sum())

    def to_dict(self) -> dict:
        return {
            "format": BANK_FORMAT,
            "version": BANK_VERSION,
            "width": self.width,
            "entries": [
                {"label": int(l), "count": int(c), "centroid": v.tolist()}
                for l, c, v in zip(self.labels, self.counts, self.centroids)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CentroidBank":
        if doc.get("format") != BANK_FORMAT or doc.get("version") != BANK_VERSION:
            raise ValueError(f"not a version-{BANK_VERSION} centroid bank document")
        entries = doc["entries"]
        width = int(doc["width"])
        centroids = np.array([e["centroid"] for e in entries], dtype=np.float32).reshape(len(entries), width)
        return cls(
            np.array([e["label"] for e in entries], dtype=np.int64),
            centroids,
            np.array([e["count"] for e in entries], dtype=np.int64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CentroidBank":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Ranking:
    ordered_labels: tuple[int, ...]
    distances: tuple[float, ...]


@dataclass(frozen=True)
class EvalReport:
    n_samples: int
    topk_hits: dict[int, int]
    topk_accuracy: dict[int, float]
    confusion: tuple[tuple[int, ...], ...]  # true x predicted, rank-1
    rank_histogram: tuple[int, ...]  # samples whose true label landed at rank 1, 2, ...

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "topk_hits": {str(k): v for k, v in self.topk_hits.items()},
            "topk_accuracy": {str(k): v for k, v in self.topk_accuracy.items()},
            "confusion": [list(row) for row in self.confusion],
            "rank_histogram": list(self.rank_histogram),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            n_samples=int(doc["n_samples"]),
            topk_hits={int(k): int(v) for k, v in doc["topk_hits"].items()},
            topk_accuracy={int(k): float(v) for k, v in doc["topk_accuracy"].items()},
            confusion=tuple(tuple(int(x) for x in row) for row in doc["confusion"]),
            rank_histogram=tuple(int(x) for x in doc["rank_histogram"]),
        )


def _labels_array(labels) -> np.ndarray:
    if isinstance(labels, LabelSet):
        labels = labels.labels
    return np.asarray(labels).astype(np.int64, copy=False)


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def compute_centroids(outputs, labels, classes=None, chunk_rows: int = 8192) -> CentroidBank:
    """Per-class mean of ``outputs``, accumulated in float64, stored as float32.

    ``classes`` defaults to the ten MNIST digits; every listed class must
    have at least one sample.
    """
    outputs = np.asarray(outputs)
    y = _labels_array(labels)
    if outputs.ndim != 2:
        raise DimensionMismatch(f"outputs must be 2-D, got shape {outputs.shape}")
    if outputs.shape[0] != y.shape[0]:
        raise CountMismatch(f"{outputs.shape[0]} outputs but {y.shape[0]} labels")
    classes = np.arange(N_CLASSES) if classes is None else np.asarray(classes, dtype=np.int64)
    index = np.searchsorted(classes, y)
    index = np.clip(index, 0, len(classes) - 1)
    if y.size and not np.array_equal(classes[index], y):
        raise UnknownLabel(f"labels outside {classes.tolist()}")
    counts = np.bincount(index, minlength=len(classes)).astype(np.int64)
    if (counts == 0).any():
        missing = classes[counts == 0].tolist()
        raise EmptyClass(f"no samples for class(es) {missing}")
    sums = np.zeros((len(classes), outputs.shape[1]), dtype=np.float64)
    for start in range(0, outputs.shape[0], chunk_rows):
        stop = start + chunk_rows
        onehot = np.zeros((len(classes), min(stop, outputs.shape[0]) - start), dtype=np.float64)
        onehot[index[start:stop], np.arange(onehot.shape[1])] = 1.0
        sums += onehot @ outputs[start:stop].astype(np.float64)
    centroids = (sums / counts[:, None]).astype(np.float32)
    return CentroidBank(classes.copy(), centroids, counts)


def distance_table(outputs, bank: CentroidBank) -> np.ndarray:
    """``(n, n_classes)`` float64 distances from each output to each class.

    Columns follow ``bank.classes``; a class with several centroids reports
    the distance to its nearest one.
    """
    X = np.asarray(outputs)
    if X.ndim != 2 or X.shape[1] != bank.width:
        raise DimensionMismatch(f"outputs shape {X.shape}, bank width {bank.width}")
    C = bank.centroids.astype(np.float64)
    m = len(bank)
    rows = max(1, _CHUNK_BYTES // (8 * m * bank.width))
    per_centroid = np.empty((X.shape[0], m), dtype=np.float64)
    for start in range(0, X.shape[0], rows):
        block = X[start:start + rows].astype(np.float64)
        diff = block[:, None, :] - C[None, :, :]
        per_centroid[start:start + rows] = np.sqrt(np.einsum("nmw,nmw->nm", diff, diff))
    classes = bank.classes
    if m == len(classes):
        # one centroid per class; reorder columns to ascending label
        return per_centroid[:, np.argsort(bank.labels, kind="stable")]
    table = np.full((X.shape[0], len(classes)), np.inf)
    for j, c in enumerate(classes):
        table[:, j] = per_centroid[:, bank.labels == c].min(axis=1)
    return table


def _order(table: np.ndarray) -> np.ndarray:
    # stable sort over label-ordered columns breaks ties toward the smaller label
    return np.argsort(table, axis=1, kind="stable")


def rank_labels(output, bank: CentroidBank) -> Ranking:
    v = np.asarray(output)
    if v.ndim != 1 or v.shape[0] != bank.width:
        raise DimensionMismatch(f"output shape {v.shape}, bank width {bank.width}")
    table = distance_table(v[None, :], bank)[0]
    order = _order(table[None, :])[0]
    classes = bank.classes
    return Ranking(tuple(int(c) for c in classes[order]), tuple(float(d) for d in table[order]))


def rank_table(outputs, bank: CentroidBank) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`rank_labels`: ordered labels and sorted distances per row."""
    table = distance_table(outputs, bank)
    order = _order(table)
    return bank.classes[order], np.take_along_axis(table, order, axis=1)


def evaluate(outputs, labels, bank: CentroidBank, ks=(1, 3)) -> EvalReport:
    """Top-k accuracy and rank-1 confusion of nearest-centroid predictions."""
    y = _labels_array(labels)
    outputs = np.asarray(outputs)
    if outputs.ndim != 2:
        raise DimensionMismatch(f"outputs must be 2-D, got shape {outputs.shape}")
    if outputs.shape[0] != y.shape[0]:
        raise CountMismatch(f"{outputs.shape[0]} outputs but {y.shape[0]} labels")
    n = y.shape[0]
    if n == 0:
        raise EmptyInput("evaluate needs at least one sample")
    classes = bank.classes
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1 or ks[-1] > len(classes):
        raise ValueError(f"every k must lie in 1..{len(classes)}, got {ks}")
    if not np.isin(y, classes).all():
        raise UnknownLabel(f"labels outside {classes.tolist()}")

    ordered, _ = rank_table(outputs, bank)
    true_rank = np.argmax(ordered == y[:, None], axis=1)  # 0-based
    hist = np.bincount(true_rank, minlength=len(classes))
    cumulative = np.cumsum(hist)
    hits = {k: int(cumulative[k - 1]) for k in ks}

    pos = {int(c): i for i, c in enumerate(classes)}
    t = np.array([pos[int(c)] for c in y])
    p = np.array([pos[int(c)] for c in ordered[:, 0]])
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(confusion, (t, p), 1)
    return EvalReport(
        n_samples=n,
        topk_hits=hits,
        topk_accuracy={k: hits[k] / n for k in ks},
        confusion=tuple(tuple(int(x) for x in row) for row in confusion),
        rank_histogram=tuple(int(x) for x in hist),
    )


def _mean_pairwise_distance(centroids: np.ndarray) -> float:
    m = centroids.shape[0]
    if m < 2:
        return float("inf")
    C = centroids.astype(np.float64)
    diff = C[:, None, :] - C[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    return float(d[np.triu_indices(m, 1)].mean())


def adapt_centroids(bank: CentroidBank, output, label: int, deviation_factor: float = 1.0) -> CentroidBank:
    """Absorb one new output into the bank.

    If ``output`` lies farther from the nearest centroid of ``label`` than
    ``deviation_factor`` times the mean pairwise distance between all
    centroids, it becomes an extra centroid for ``label``. Otherwise it is
    folded into that nearest centroid as a count-weighted running mean.
    """
    if not deviation_factor > 0:
        raise ValueError("deviation_factor must be positive")
    v = np.asarray(output, dtype=np.float64)
    if v.shape != (bank.width,):
        raise DimensionMismatch(f"output shape {v.shape}, bank width {bank.width}")
    own = np.flatnonzero(bank.labels == label)
    if not own.size:
        raise UnknownLabel(label)
    C = bank.centroids.astype(np.float64)
    dists = np.sqrt(((C[own] - v) ** 2).sum(axis=1))
    nearest = own[np.argmin(dists)]
    threshold = deviation_factor * _mean_pairwise_distance(bank.centroids)

    if dists.min() > threshold:
        return CentroidBank(
            np.append(bank.labels, label).astype(np.int64),
            np.vstack([bank.centroids, v.astype(np.float32)[None, :]]),
            np.append(bank.counts, 1).astype(np.int64),
        )
    centroids = bank.centroids.copy()
    counts = bank.counts.copy()
    n = counts[nearest]
    centroids[nearest] = ((C[nearest] * n + v) / (n + 1)).astype(np.float32)
    counts[nearest] = n + 1
    return CentroidBank(bank.labels.copy(), centroids, counts)


class NearestCentroidClassifier(ClassifierMixin, BaseEstimator):
    """Euclidean nearest-class-mean classifier with top-k ranking.

    Parameters
    ----------
    classes : array-like or None, default=None
        Classes that must all be present in ``y``. ``None`` infers them from
        ``y`` at fit time.
    """

    def __init__(self, classes=None):
        self.classes = classes

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float32)
        classes = np.unique(y) if self.classes is None else np.asarray(self.classes)
        self.bank_ = compute_centroids(X, y, classes=classes)
        self.classes_ = self.bank_.classes
        return self

    def rank(self, X):
        check_is_fitted(self, "bank_")
        X = validate_data(self, X, dtype=np.float32, reset=False)
        return rank_table(X, self.bank_)

    def predict(self, X):
        return self.rank(X)[0][:, 0]

    def predict_topk(self, X, k=3):
        return self.rank(X)[0][:, :k]

    def evaluate(self, X, y, ks=(1, 3)) -> EvalReport:
        check_is_fitted(self, "bank_")
        X = validate_data(self, X, dtype=np.float32, reset=False)
        return evaluate(X, y, self.bank_, ks)

    def adapt(self, x, label, deviation_factor=1.0):
        """Fold one labelled output into the fitted bank (see :func:`adapt_centroids`)."""
        check_is_fitted(self, "bank_")
        self.bank_ = adapt_centroids(self.bank_, x, label, deviation_factor)
        return self
