"""k-means with k-means++ restarts, and label-matching clustering metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateInput, LengthMismatch, ValidationError

MAX_LLOYD_ITER = 300
DEFAULT_RESTARTS = 10


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    restarts_used: int
    n_iter: int = 0


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    nmi: float
    ari: float


def _sq_dists(x, centroids):
    # ||x||^2 - 2 x.c + ||c||^2, clamped for round-off
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x, k, rng, n_local_trials=None):
    """Greedy k-means++ seeding.

    Each new center is picked from ``n_local_trials`` candidates drawn with
    probability proportional to D(x)^2, keeping the one that lowers the
    potential most. Defaults to ``2 + floor(ln k)`` trials;
    ``n_local_trials=1`` is the plain variant.
    """
    n = x.shape[0]
    if n_local_trials is None:
        n_local_trials = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[c] = x[rng.integers(n)]
            continue
        draws = rng.random(n_local_trials) * total
        cand = np.minimum(np.searchsorted(np.cumsum(closest), draws, side="right"), n - 1)
        cand_d = np.minimum(closest[None, :], _sq_dists(x, x[cand]).T)
        best = int(cand_d.sum(axis=1).argmin())
        centers[c] = x[cand[best]]
        closest = cand_d[best]
    return centers


def lloyd(x, centroids, max_iter=MAX_LLOYD_ITER):
    """Run Lloyd iterations from the given centroids.

    Stops when assignments stop changing. An empty cluster is reseeded at the
    point farthest from its current centroid. Returns ``(labels, centroids,
    inertia_history)``; the history holds the inertia after each assignment
    step and is non-increasing.
    """
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(x, centroids)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        if (counts == 0).any():
            labels = labels.copy()
            own = d[np.arange(len(x)), labels]
            for c in np.flatnonzero(counts == 0):
                # only take from clusters that keep at least one member
                own = np.where(counts[labels] > 1, own, -np.inf)
                far = int(own.argmax())
                counts[labels[far]] -= 1
                labels[far] = c
                counts[c] = 1
                own[far] = -np.inf
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        centroids = sums / counts[:, None]
    d = _sq_dists(x, centroids)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    return labels, centroids, history + [inertia]


def kmeans(features, k: int, seed: int = 42, restarts: int = DEFAULT_RESTARTS,
           max_iter: int = MAX_LLOYD_ITER) -> ClusteringResult:
    """Best of ``restarts`` k-means++ / Lloyd runs by inertia.

    Restart ``r`` draws from the r-th child of ``SeedSequence(seed)``, so a
    given seed reproduces the same result. Ties in inertia go to the lowest
    restart index.
    """
    x = check_array(features, dtype=np.float64, ensure_min_samples=2)
    n = x.shape[0]
    if not 2 <= k <= n:
        raise ValidationError(f"need 2 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    if np.ptp(x, axis=0).max() <= 1e-12:
        raise DegenerateInput("all points are identical")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
        rng = np.random.default_rng(child)
        labels, centroids, hist = lloyd(x, kmeans_plusplus(x, k, rng), max_iter)
        if best is None or hist[-1] < best.inertia:
            best = ClusteringResult(labels, centroids, hist[-1], restarts, len(hist) - 1)
    return best


class KMeans(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans`."""

    def __init__(self, n_clusters=10, n_init=DEFAULT_RESTARTS, max_iter=MAX_LLOYD_ITER,
                 random_state=42):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        res = kmeans(X, self.n_clusters, seed=self.random_state, restarts=self.n_init,
                     max_iter=self.max_iter)
        self.labels_ = res.assignments
        self.cluster_centers_ = res.centroids
        self.inertia_ = res.inertia
        self.n_iter_ = res.n_iter
        self.n_features_in_ = res.centroids.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return _sq_dists(X, self.cluster_centers_).argmin(axis=1)


def _pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predicted labels vs {truth.size} true labels")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    """Counts table with rows for predicted clusters and columns for classes."""
    pred, truth = _pair(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max(initial=-1) + 1, t.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def hungarian_accuracy(pred, truth) -> float:
    """Fraction of items correct under the best one-to-one relabeling."""
    pred, _ = _pair(pred, truth)
    if pred.size == 0:
        return 1.0
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / pred.size)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(1), n)
    h_true = _entropy(table.sum(0), n)
    nz = table > 0
    if nz.sum() == table.shape[0] == table.shape[1]:
        # same partition up to relabeling; skip the rounding in mi / mean(h)
        return 1.0
    outer = np.outer(table.sum(1), table.sum(0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return float(min(max(mi / ((h_pred + h_true) / 2.0), 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(pred, truth) -> float:
    """Adjusted Rand index from pair counts of the contingency table."""
    table = contingency(pred, truth)
    n = table.sum()
    if n < 2:
        raise ValidationError("ARI needs at least two items")
    index = _comb2(table).sum()
    a = _comb2(table.sum(1)).sum()
    b = _comb2(table.sum(0)).sum()
    expected = a * b / _comb2(n)
    max_index = (a + b) / 2.0
    if max_index == expected:
        # both partitions all-singletons or both a single cluster
        return 1.0
    return float((index - expected) / (max_index - expected))


def score(pred, truth) -> MetricReport:
    return MetricReport(hungarian_accuracy(pred, truth), nmi(pred, truth), ari(pred, truth))
