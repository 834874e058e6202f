"""Clustered points on the unit sphere, PCA reduction and episode sampling.

Random streams: ``SeedSequence(seed).spawn(k + 1)`` gives one stream for the
cluster centers followed by one noise stream per cluster, all PCG64. Changing
``k`` therefore changes every stream; changing ``points_per_cluster`` only
extends the per-cluster draws.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .exceptions import InsufficientPoints, InvalidSpec, TargetTooLarge, ValidationError


@dataclass(frozen=True)
class SphereTaskSpec:
    k: int = 10
    points_per_cluster: int = 20
    dim: int = 100
    sigma: float = 0.3
    seed: int = 42
    pca_dim: int = 50

    def validate(self):
        if self.k < 1 or self.points_per_cluster < 1:
            raise InvalidSpec("k and points_per_cluster must be >= 1")
        if self.dim < 2:
            raise InvalidSpec(f"dim must be >= 2, got {self.dim}")
        if not self.sigma >= 0:
            raise InvalidSpec(f"sigma must be >= 0, got {self.sigma}")
        if self.pca_dim < 0:
            raise InvalidSpec("pca_dim must be >= 0 (0 disables PCA)")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature rows with integer class labels.

    Unlike :class:`~sot.matrixcore.FeatureMatrix` this allows a single row,
    which small episode splits need.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = check_array(self.features, dtype=np.float64, ensure_min_samples=1)
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValidationError(f"{x.shape[0]} rows but labels of shape {y.shape}")
        if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0):
            raise ValidationError("labels must be nonnegative integers")
        x = x.copy()
        x.flags.writeable = False
        y = y.astype(np.int64)
        y.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 5
    q_query: int = 15
    seed: int = 42


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate_sphere_dataset(spec: SphereTaskSpec) -> LabeledDataset:
    """Gaussian clusters around uniform random centers, projected back to the sphere.

    PCA is not applied here; see :func:`prepare_features`.
    """
    spec.validate()
    seqs = np.random.SeedSequence(spec.seed).spawn(spec.k + 1)
    centers = _unit_rows(np.random.default_rng(seqs[0]).standard_normal((spec.k, spec.dim)))
    blocks = []
    for c, seq in enumerate(seqs[1:]):
        noise = np.random.default_rng(seq).standard_normal((spec.points_per_cluster, spec.dim))
        blocks.append(centers[c] + spec.sigma * noise)
    x = np.vstack(blocks)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if (norms <= 1e-12).any():
        raise InvalidSpec("a perturbed point landed on the origin; change the seed")
    labels = np.repeat(np.arange(spec.k), spec.points_per_cluster)
    return LabeledDataset(x / norms, labels)


class GramPCA(TransformerMixin, BaseEstimator):
    """PCA computed from the n x n Gram matrix of the centered data.

    Cheaper than the d x d covariance when there are fewer items than
    dimensions. Component signs are fixed so the largest-magnitude loading of
    each component is positive.
    """

    def __init__(self, n_components=50):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n, d = X.shape
        if not 1 <= self.n_components <= min(n, d):
            raise TargetTooLarge(f"target_dim={self.n_components} must be in 1..min(n, d)={min(n, d)}")
        self.mean_ = X.mean(axis=0)
        xc = X - self.mean_
        evals, evecs = np.linalg.eigh(xc @ xc.T)
        order = np.argsort(evals)[::-1]
        evals = np.maximum(evals[order], 0.0)
        evecs = evecs[:, order]
        k = self.n_components
        # right singular vectors from left ones: v = Xc^T u / sqrt(eval)
        scale = np.sqrt(evals[:k])
        keep = scale > 1e-12 * max(scale[0], 1.0)
        comps = np.zeros((k, d))
        comps[keep] = (xc.T @ evecs[:, :k][:, keep] / scale[keep]).T
        big = np.abs(comps).argmax(axis=1)
        signs = np.sign(comps[np.arange(k), big])
        signs[signs == 0] = 1.0
        self.components_ = comps * signs[:, None]
        self.explained_variance_ = evals[:k] / (n - 1)
        total = evals.sum()
        self.explained_variance_ratio_ = evals[:k] / total if total > 0 else np.zeros(k)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z) @ self.components_ + self.mean_


def pca_reduce(ds: LabeledDataset, target_dim: int) -> LabeledDataset:
    """Project onto the top ``target_dim`` principal directions (rows not renormalized)."""
    n, d = ds.features.shape
    if target_dim > min(n, d) or target_dim < 1:
        raise TargetTooLarge(f"target_dim={target_dim} must be in 1..min(n, d)={min(n, d)}")
    return LabeledDataset(GramPCA(target_dim).fit_transform(ds.features), ds.labels)


def prepare_features(ds: LabeledDataset, spec: SphereTaskSpec) -> LabeledDataset:
    """PCA to ``spec.pca_dim`` when ``dim`` exceeds it, then unit rows.

    Both the baseline and the SOT arm of an experiment consume this output.
    """
    if spec.pca_dim and ds.features.shape[1] > spec.pca_dim:
        ds = pca_reduce(ds, min(spec.pca_dim, ds.n))
        return LabeledDataset(_unit_rows(ds.features), ds.labels)
    return ds


def make_task(spec: SphereTaskSpec) -> LabeledDataset:
    return prepare_features(generate_sphere_dataset(spec), spec)


def sample_episode(ds: LabeledDataset, spec: EpisodeSpec):
    """Draw an N-way K-shot Q-query split. Returns ``(support, query)``.

    Classes are drawn without replacement, then within each chosen class the
    support and query points are disjoint draws without replacement. Both
    splits list classes in the order they were drawn.
    """
    if spec.n_way < 1 or spec.k_shot < 1 or spec.q_query < 0:
        raise InvalidSpec("need n_way >= 1, k_shot >= 1, q_query >= 0")
    classes = np.unique(ds.labels)
    if spec.n_way > classes.size:
        raise InsufficientPoints(f"{spec.n_way}-way episode but only {classes.size} classes")
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(classes, size=spec.n_way, replace=False)
    need = spec.k_shot + spec.q_query
    support, query = [], []
    for c in chosen:
        members = np.flatnonzero(ds.labels == c)
        if members.size < need:
            raise InsufficientPoints(f"class {c} has {members.size} points, episode needs {need}")
        picked = rng.permutation(members)[:need]
        support.append(picked[:spec.k_shot])
        query.append(picked[spec.k_shot:])
    return ds.subset(np.concatenate(support)), ds.subset(np.concatenate(query))
