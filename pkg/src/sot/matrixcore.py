"""Feature matrices, cosine similarities and squared-distance matrices.

All matrices are dense float64 and read-only once wrapped, so they can be
shared between threads without copying.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils import check_array

from .exceptions import (
    AlreadyMasked,
    InvalidPermutation,
    NotNormalized,
    ValidationError,
    ZeroNormRow,
)

ZERO_NORM_TOL = 1e-12
UNIT_NORM_TOL = 1e-6


def _frozen(a):
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.flags.writeable = False
    return a


def _square(a, name):
    a = check_array(a, dtype=np.float64, ensure_min_samples=2, input_name=name)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x d matrix of item features, one item per row."""

    data: np.ndarray

    def __post_init__(self):
        a = check_array(self.data, dtype=np.float64, ensure_min_samples=2,
                        ensure_min_features=1, input_name="features")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Pairwise cosine similarities of unit-normalized rows."""

    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", _frozen(_square(self.s, "similarity")))

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Pairwise squared Euclidean distances.

    ``masked=True`` means the diagonal is an infinite self-matching cost. The
    stored diagonal is left untouched; solvers read the flag and give the
    diagonal zero kernel weight instead of adding a large finite constant.
    """

    dmat: np.ndarray
    masked: bool = False

    def __post_init__(self):
        a = _square(self.dmat, "distances")
        if (a < 0).any():
            raise ValidationError("distances must be nonnegative")
        object.__setattr__(self, "dmat", _frozen(a))

    @property
    def n(self) -> int:
        return self.dmat.shape[0]


def as_feature_matrix(m) -> FeatureMatrix:
    return m if isinstance(m, FeatureMatrix) else FeatureMatrix(m)


def normalize_rows(m) -> FeatureMatrix:
    """Scale every row to unit L2 norm.

    Raises ZeroNormRow for the first row whose norm is at most 1e-12.
    """
    x = as_feature_matrix(m).data
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms <= ZERO_NORM_TOL)
    if bad.size:
        raise ZeroNormRow(int(bad[0]))
    return FeatureMatrix(x / norms[:, None])


def cosine_similarity(m) -> SimilarityMatrix:
    x = as_feature_matrix(m).data
    norms = np.linalg.norm(x, axis=1)
    dev = np.abs(norms - 1.0)
    if dev.max() > UNIT_NORM_TOL:
        i = int(dev.argmax())
        raise NotNormalized(f"row {i} has norm {norms[i]!r}; call normalize_rows first")
    s = x @ x.T
    # mirror the upper triangle so s_ij and s_ji are the same float
    upper = np.triu(s)
    return SimilarityMatrix(upper + np.triu(upper, 1).T)


def pairwise_sq_distances(s) -> DistanceMatrix:
    """Squared distances ``2 (1 - s)`` between unit vectors, clamped at 0."""
    s = s.s if isinstance(s, SimilarityMatrix) else SimilarityMatrix(s).s
    return DistanceMatrix(np.maximum(2.0 * (1.0 - s), 0.0), masked=False)


def mask_diagonal(d: DistanceMatrix) -> DistanceMatrix:
    if d.masked:
        raise AlreadyMasked("distance matrix is already masked")
    return DistanceMatrix(d.dmat, masked=True)


def check_permutation(perm, n: int) -> np.ndarray:
    p = np.asarray(perm)
    if p.ndim != 1 or p.shape[0] != n or not np.issubdtype(p.dtype, np.integer):
        raise InvalidPermutation(f"expected {n} integer indices, got {perm!r}")
    if not np.array_equal(np.sort(p), np.arange(n)):
        raise InvalidPermutation(f"{perm!r} is not a bijection on 0..{n - 1}")
    return p


def permute_rows(m, perm) -> FeatureMatrix:
    """Row ``i`` of the result is row ``perm[i]`` of the input."""
    x = as_feature_matrix(m).data
    return FeatureMatrix(x[check_permutation(perm, x.shape[0])])
