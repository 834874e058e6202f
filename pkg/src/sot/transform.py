"""The self-optimal-transport feature transform.

A set of n feature vectors is re-embedded as the rows of an n x n transport
plan that matches the set to itself with self-matches forbidden. Row ``i``
holds item i's belief about which other items share its class.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .exceptions import Asymmetric, ConfigMismatch, IndexOutOfRange, ValidationError
from .matrixcore import (
    DistanceMatrix,
    cosine_similarity,
    mask_diagonal,
    normalize_rows,
    pairwise_sq_distances,
)
from .sinkhorn import SinkhornParams, marginal_error, sinkhorn_solve

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class SotConfig:
    sinkhorn: SinkhornParams = field(default_factory=SinkhornParams)
    symmetrize: bool = True
    set_unit_diagonal: bool = True

    @classmethod
    def from_values(cls, lam=0.1, iters=10, marginal_tol=0.0, log_domain=True,
                    symmetrize=True, set_unit_diagonal=True) -> "SotConfig":
        return cls(SinkhornParams(lam=lam, max_sweeps=iters, marginal_tol=marginal_tol,
                                  log_domain=log_domain),
                   symmetrize=symmetrize, set_unit_diagonal=set_unit_diagonal)

    def with_lambda(self, lam: float) -> "SotConfig":
        return replace(self, sinkhorn=replace(self.sinkhorn, lam=lam))

    def with_sweeps(self, max_sweeps: int) -> "SotConfig":
        return replace(self, sinkhorn=replace(self.sinkhorn, max_sweeps=max_sweeps))

    def to_dict(self) -> dict:
        p = self.sinkhorn
        return {"lambda": p.lam, "iters": p.max_sweeps, "marginal_tol": p.marginal_tol,
                "log_domain": p.log_domain, "symmetrize": self.symmetrize,
                "set_unit_diagonal": self.set_unit_diagonal}

    @classmethod
    def from_dict(cls, d: dict) -> "SotConfig":
        return cls.from_values(lam=d.get("lambda", 0.1), iters=d.get("iters", 10),
                               marginal_tol=d.get("marginal_tol", 0.0),
                               log_domain=d.get("log_domain", True),
                               symmetrize=d.get("symmetrize", True),
                               set_unit_diagonal=d.get("set_unit_diagonal", True))


@dataclass(frozen=True, eq=False)
class SotEmbedding:
    w: np.ndarray
    config: SotConfig
    marginal_err: float

    @property
    def n(self) -> int:
        return self.w.shape[0]


def _finish(plan, cfg: SotConfig) -> SotEmbedding:
    w = np.array(plan.w)
    if cfg.symmetrize:
        w = (w + w.T) / 2.0
    err = marginal_error(w)
    if cfg.set_unit_diagonal:
        w += np.eye(w.shape[0])
    w.flags.writeable = False
    return SotEmbedding(w=w, config=cfg, marginal_err=err)


def sot_transform(features, cfg: SotConfig | None = None) -> SotEmbedding:
    """Embed each row of ``features`` as a row of the self-transport plan."""
    cfg = cfg or SotConfig()
    dist = pairwise_sq_distances(cosine_similarity(normalize_rows(features)))
    return _finish(sinkhorn_solve(mask_diagonal(dist), cfg.sinkhorn), cfg)


def sot_transform_from_distances(dist, cfg: SotConfig | None = None) -> SotEmbedding:
    """Same as :func:`sot_transform` starting from precomputed squared distances."""
    cfg = cfg or SotConfig()
    if not isinstance(dist, DistanceMatrix):
        dist = DistanceMatrix(dist)
    asym = np.abs(dist.dmat - dist.dmat.T).max()
    if asym > SYMMETRY_TOL:
        raise Asymmetric(f"distance matrix asymmetry {asym:.3g} exceeds {SYMMETRY_TOL}")
    if not dist.masked:
        dist = mask_diagonal(dist)
    return _finish(sinkhorn_solve(dist, cfg.sinkhorn), cfg)


def embedded_difference_decomposition(emb: SotEmbedding, i: int, j: int):
    """Split ``|w_i - w_j|`` into its direct and third-party parts.

    Returns ``(direct, indirect)`` with ``direct = 1 - w_ij`` (the value of
    coordinates i and j) and ``indirect`` the remaining n-2 coordinates in
    index order.
    """
    if not (emb.config.symmetrize and emb.config.set_unit_diagonal):
        raise ConfigMismatch("decomposition needs symmetrize=True and set_unit_diagonal=True")
    n = emb.n
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexOutOfRange(f"index {idx} outside 0..{n - 1}")
    if i == j:
        raise ValidationError("i and j must differ")
    w = emb.w
    others = np.array([k for k in range(n) if k not in (i, j)], dtype=np.intp)
    return float(1.0 - w[i, j]), np.abs(w[i, others] - w[j, others])


class SelfOptimalTransport(TransformerMixin, BaseEstimator):
    """Parameter-free transductive re-embedding of a feature set.

    ``fit`` embeds the set it is given; ``transform`` embeds whatever set it
    is given, since the output dimension equals the number of items and has
    no meaning for a different set. Both are deterministic, so
    ``fit(X).transform(X)`` equals ``fit_transform(X)``.

    Parameters
    ----------
    lam : float, default=0.1
        Entropy regularization weight. Larger values give sharper plans.
    n_iter : int, default=10
        Number of Sinkhorn sweeps.
    tol : float, default=0.0
        Optional early stop on the marginal error.
    log_domain : bool, default=True
    symmetrize : bool, default=True
    unit_diagonal : bool, default=True
    """

    def __init__(self, lam=0.1, n_iter=10, tol=0.0, log_domain=True,
                 symmetrize=True, unit_diagonal=True):
        self.lam = lam
        self.n_iter = n_iter
        self.tol = tol
        self.log_domain = log_domain
        self.symmetrize = symmetrize
        self.unit_diagonal = unit_diagonal

    def _config(self) -> SotConfig:
        return SotConfig.from_values(lam=self.lam, iters=self.n_iter, marginal_tol=self.tol,
                                     log_domain=self.log_domain, symmetrize=self.symmetrize,
                                     set_unit_diagonal=self.unit_diagonal)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.config_ = self._config()
        self.embedding_ = sot_transform(X, self.config_)
        self.n_features_in_ = X.shape[1]
        self.marginal_err_ = self.embedding_.marginal_err
        return self

    def transform(self, X):
        check_is_fitted(self, "embedding_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}")
        return np.array(sot_transform(X, self.config_).w)

    def fit_transform(self, X, y=None, **fit_params):
        return np.array(self.fit(X, y).embedding_.w)
