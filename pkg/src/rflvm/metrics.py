"""Evaluation metrics for recovered latent spaces and imputations."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform


@dataclass
class MetricsReport:
    """Flat key-value report; wall time is excluded from emitted files so
    outputs stay byte-reproducible."""
    mse: float = None
    knn_mean: float = None
    knn_sd: float = None
    distance_matrix_error: float = None
    wall_time_seconds: float = None
    extra: dict = None

    def lines(self, include_wall_time=False):
        pairs = []
        for name in ("mse", "knn_mean", "knn_sd", "distance_matrix_error"):
            value = getattr(self, name)
            if value is not None:
                pairs.append((name, value))
        if self.extra:
            pairs.extend(sorted(self.extra.items()))
        if include_wall_time and self.wall_time_seconds is not None:
            pairs.append(("wall_time_seconds", self.wall_time_seconds))
        return [f"{k} = {v!r}" for k, v in pairs]

    def to_text(self, include_wall_time=False):
        return "\n".join(self.lines(include_wall_time)) + "\n"


def mse(predicted, actual):
    """Mean squared difference between two equal-length value sets."""
    predicted = np.asarray(predicted, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if predicted.shape != actual.shape:
        raise ValueError("length mismatch between prediction and truth")
    if predicted.size == 0:
        raise ValueError("mse needs at least one entry")
    return float(np.mean((predicted - actual) ** 2))


def _one_nn_accuracy(train_x, train_y, test_x, test_y):
    d = cdist(test_x, train_x)
    nearest = np.argmin(d, axis=1)
    return float(np.mean(train_y[nearest] == test_y))


def knn_accuracy(x, labels, n_folds=5, n_repeats=5, seed=0):
    """1-nearest-neighbor accuracy under repeated cross validation.

    Folds are disjoint and exhaustive, drawn from a seeded shuffle; the
    experiment repeats with fresh fold assignments. Returns (mean, sd)
    over the repeat-level accuracies.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n = x.shape[0]
    if n < 10:
        raise ValueError("need at least 10 points for cross validation")
    if np.unique(labels).size < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    repeat_acc = []
    for _ in range(n_repeats):
        order = rng.permutation(n)
        folds = np.array_split(order, n_folds)
        accs = []
        for f in range(n_folds):
            test = folds[f]
            train = np.concatenate([folds[g] for g in range(n_folds)
                                    if g != f])
            accs.append(_one_nn_accuracy(x[train], labels[train],
                                         x[test], labels[test]))
        repeat_acc.append(np.mean(accs))
    return float(np.mean(repeat_acc)), float(np.std(repeat_acc))


def distance_matrix_error(x_hat, x_true):
    """Frobenius gap between unit-normalized pairwise distance matrices.

    Invariant to rotation, translation, and global scaling of either
    argument.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape[0] != x_true.shape[0]:
        raise ValueError("row-count mismatch")
    d1 = squareform(pdist(x_hat))
    d2 = squareform(pdist(x_true))
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    if n1 == 0 or n2 == 0:
        raise ValueError("degenerate configuration with zero spread")
    return float(np.linalg.norm(d1 / n1 - d2 / n2))
