"""Datasets, standardization, stratified splits, and confusion matrices."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Standardization:
    mean: np.ndarray
    sd: np.ndarray  # floored so constant columns pass through unchanged

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        return cls(mean=X.mean(axis=0), sd=np.where(sd > 1e-12, sd, 1.0))

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd


@dataclass
class Dataset:
    vectors: np.ndarray  # (N, D)
    labels: np.ndarray  # (N,) int class indices
    class_names: tuple
    feature_names: tuple = ()
    sensor_mask: tuple = ()
    standardization: Standardization | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.vectors) != len(self.labels):
            raise DataError("vectors and labels disagree in length")
        if np.isnan(self.vectors).any():
            raise DataError("feature matrix contains NaN")
        if len(self.labels) and self.labels.max() >= len(self.class_names):
            raise DataError("label index outside class_names")

    def __len__(self):
        return len(self.labels)

    def select_sensors(self, mask):
        """Subset the feature columns to the named sensors."""
        from ..features import feature_names as names_for

        wanted = names_for(mask)
        idx = [self.feature_names.index(n) for n in wanted]
        return replace(
            self,
            vectors=self.vectors[:, idx],
            feature_names=wanted,
            sensor_mask=tuple(mask),
            standardization=None,
        )

    def content_hash(self):
        h = hashlib.sha256()
        h.update(self.vectors.tobytes())
        h.update(self.labels.tobytes())
        h.update(",".join(self.class_names).encode())
        return h.hexdigest()


def stratified_split(dataset: Dataset, test_fraction=0.3, seed=0):
    """70/30-style split, per-class, deterministic for a given seed.

    Standardization is fit on the training split only and applied to both
    returned datasets (stored on each for later inference).
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(len(dataset.class_names)):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < 2:
            raise DataError(f"class {dataset.class_names[c]!r} has fewer than 2 samples")
        idx = idx[rng.permutation(len(idx))]
        n_test = max(1, int(round(test_fraction * len(idx))))
        n_test = min(n_test, len(idx) - 1)  # keep at least one training sample
        test_idx.extend(idx[:n_test])
        train_idx.extend(idx[n_test:])
    train_idx = np.sort(np.asarray(train_idx))
    test_idx = np.sort(np.asarray(test_idx))

    std = Standardization.fit(dataset.vectors[train_idx])
    make = lambda idx: replace(
        dataset,
        vectors=std.apply(dataset.vectors[idx]),
        labels=dataset.labels[idx],
        standardization=std,
    )
    return make(train_idx), make(test_idx)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C), rows = truth
    class_names: tuple

    @property
    def accuracy(self):
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    @property
    def per_class_recall(self):
        row_sums = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            recall = np.where(row_sums > 0, np.diag(self.counts) / row_sums, 0.0)
        return recall

    def off_diagonal_fraction(self, truth_class, predicted_class):
        """Share of truth_class samples predicted as predicted_class."""
        row = self.counts[truth_class]
        total = row.sum()
        return float(row[predicted_class] / total) if total else 0.0

    def to_csv(self):
        header = "truth\\pred," + ",".join(self.class_names)
        lines = [header]
        for name, row in zip(self.class_names, self.counts):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        lines.append(f"accuracy,{self.accuracy!r}")
        return "\n".join(lines) + "\n"

    def save_png(self, path, title=None):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        c = len(self.class_names)
        fig, ax = plt.subplots(figsize=(1.2 * c + 2, 1.2 * c + 1.5))
        im = ax.imshow(self.counts, cmap="Blues")
        ax.set_xticks(range(c), self.class_names, rotation=45, ha="right")
        ax.set_yticks(range(c), self.class_names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("truth")
        for i in range(c):
            for j in range(c):
                ax.text(j, i, str(int(self.counts[i, j])), ha="center", va="center",
                        color="black" if self.counts[i, j] < self.counts.max() / 2 else "white")
        ax.set_title(title or f"accuracy {self.accuracy:.3f}")
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def evaluate(model, test: Dataset) -> ConfusionMatrix:
    """Tally argmax predictions of any model exposing predict(X)."""
    if len(test) == 0:
        raise DataError("evaluation set is empty")
    pred = model.predict(test.vectors)
    c = len(test.class_names)
    counts = np.zeros((c, c), dtype=np.int64)
    for truth, guess in zip(test.labels, pred):
        counts[truth, guess] += 1
    return ConfusionMatrix(counts=counts, class_names=test.class_names)
