"""Principal component analysis of feature tables."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class PcaModel:
    components: np.ndarray  # (k, D) orthonormal rows
    explained_variance_ratio: np.ndarray  # (k,) descending, sums to <= 1
    mean: np.ndarray  # (D,)


def pca_fit(X, k) -> PcaModel:
    """Top-k right singular vectors of the centered data."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    n, d = X.shape
    if not (1 <= k <= d):
        raise ValueError(f"k must be in [1, {d}], got {k}")
    mean = X.mean(axis=0)
    centered = X - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(singular > 1e-12 * max(singular[0], 1.0)))
    if k > rank:
        warnings.warn(f"k={k} exceeds data rank {rank}; trailing components are noise")
    total = float((singular**2).sum())
    ratios = (singular[:k] ** 2) / total if total > 0 else np.zeros(k)
    return PcaModel(
        components=vt[:k].copy(),
        explained_variance_ratio=ratios,
        mean=mean,
    )


def pca_project(model: PcaModel, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: data has {X.shape[-1]}, model expects {model.mean.shape[0]}"
        )
    return (X - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, scores):
    return np.asarray(scores, dtype=float) @ model.components + model.mean
