"""Output-smoothing diagnostics: variance of network output vectors."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import EmptyInput

VARIANCE_SOURCES = ("test_outputs", "train_outputs")


@dataclass(frozen=True)
class VarianceReport:
    """Summary of output variance over a set of vectors.

    ``mean_variance``, ``min_variance`` and ``max_variance`` summarize the
    within-vector (across components) population variance of each row.
    ``across_samples_variance`` is the alternative statistic: population
    variance of each component across rows, averaged over components.
    """

    n_vectors: int
    mean_variance: float
    min_variance: float
    max_variance: float
    across_samples_variance: float
    source: str = "test_outputs"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "VarianceReport":
        return cls(**doc)


def vector_variance(v) -> float:
    """Population variance of one vector's components."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInput("vector_variance needs a non-empty 1-D vector")
    return float(np.mean((v - v.mean()) ** 2))


def row_variances(outputs, chunk_rows: int = 8192) -> np.ndarray:
    X = np.asarray(outputs)
    out = np.empty(X.shape[0], dtype=np.float64)
    for start in range(0, X.shape[0], chunk_rows):
        block = X[start:start + chunk_rows].astype(np.float64)
        out[start:start + chunk_rows] = block.var(axis=1)
    return out


def across_samples_variance(outputs, chunk_rows: int = 8192) -> float:
    """Mean over components of each component's variance across rows (two-pass)."""
    X = np.asarray(outputs)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("need at least one row")
    total = np.zeros(X.shape[1], dtype=np.float64)
    for start in range(0, n, chunk_rows):
        total += X[start:start + chunk_rows].sum(axis=0, dtype=np.float64)
    mean = total / n
    sq = np.zeros(X.shape[1], dtype=np.float64)
    for start in range(0, n, chunk_rows):
        dev = X[start:start + chunk_rows].astype(np.float64) - mean
        sq += (dev * dev).sum(axis=0)
    return float((sq / n).mean())


def mean_output_variance(outputs, source: str = "test_outputs") -> VarianceReport:
    X = np.asarray(outputs)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyInput(f"need a non-empty 2-D output matrix, got shape {X.shape}")
    if source not in VARIANCE_SOURCES:
        raise ValueError(f"source must be one of {VARIANCE_SOURCES}, got {source!r}")
    per_row = row_variances(X)
    lo, hi = float(per_row.min()), float(per_row.max())
    return VarianceReport(
        n_vectors=X.shape[0],
        mean_variance=min(max(float(per_row.mean()), lo), hi),  # guard 1-ulp drift
        min_variance=lo,
        max_variance=hi,
        across_samples_variance=across_samples_variance(X),
        source=source,
    )
