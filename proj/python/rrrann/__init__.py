"""Clustered nearest-neighbour search scored by per-cluster reduced-rank regression."""

import numpy as np

from ._rrrann import (
    DataError,
    FormatError,
    Index,
    ParameterError,
    RrrannError,
    ShapeError,
    VersionError,
    brute_force_knn,
)

__all__ = [
    "DataError",
    "FormatError",
    "Index",
    "ParameterError",
    "RrrannError",
    "ShapeError",
    "VersionError",
    "brute_force_knn",
    "recall_at_k",
]


def recall_at_k(found, truth, k):
    """Mean fraction of the true k nearest neighbours present in each row of `found`."""
    found = np.asarray(found)[:, :k]
    truth = np.asarray(truth)[:, :k]
    hits = [len(np.intersect1d(f[f >= 0], t)) for f, t in zip(found, truth)]
    return float(np.mean(hits)) / k
