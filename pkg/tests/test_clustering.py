import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from sot.clustering import (
    KMeans,
    ari,
    contingency,
    hungarian_accuracy,
    kmeans,
    kmeans_plusplus,
    lloyd,
    nmi,
    score,
)
from sot.exceptions import DegenerateInput, LengthMismatch, ValidationError


def brute_accuracy(pred, truth):
    """Best accuracy over every injective relabeling of the predicted ids."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    p_ids, t_ids = np.unique(pred), np.unique(truth)
    targets = list(t_ids) + [None] * max(0, len(p_ids) - len(t_ids))
    best = 0
    for perm in itertools.permutations(targets, len(p_ids)):
        mapping = dict(zip(p_ids, perm))
        best = max(best, sum(mapping[p] == t for p, t in zip(pred, truth)))
    return best / len(pred)


def brute_ari(pred, truth):
    """Pair-count ARI with the expected index taken over all relabelings of ``pred``."""
    pred, truth = list(pred), list(truth)
    pairs = list(itertools.combinations(range(len(pred)), 2))

    def agree(a, b):
        return sum((a[i] == a[j]) and (b[i] == b[j]) for i, j in pairs)

    index = agree(pred, truth)
    expected = np.mean([agree([pred[k] for k in perm], truth)
                        for perm in itertools.permutations(range(len(pred)))])
    same_p = sum(pred[i] == pred[j] for i, j in pairs)
    same_t = sum(truth[i] == truth[j] for i, j in pairs)
    return (index - expected) / ((same_p + same_t) / 2 - expected)


# k-means -------------------------------------------------------------------

def test_two_pairs_closed_form():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 2.0]])
    res = kmeans(x, 2)
    # each pair contributes 2 * (spread / 2)^2
    assert res.inertia == pytest.approx(2 * 0.5 ** 2 + 2 * 1.0 ** 2)
    assert res.assignments[0] == res.assignments[1] != res.assignments[2] == res.assignments[3]
    assert res.restarts_used == 10


def test_k_equals_n():
    x = np.random.default_rng(0).standard_normal((7, 3))
    res = kmeans(x, 7)
    assert res.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(res.assignments) == list(range(7))


def test_degenerate_and_bad_k():
    with pytest.raises(DegenerateInput):
        kmeans(np.ones((5, 3)), 2)
    with pytest.raises(ValidationError):
        kmeans(np.eye(3), 4)
    with pytest.raises(ValidationError):
        kmeans(np.eye(3), 1)
    with pytest.raises(ValidationError):
        kmeans(np.eye(3), 2, restarts=0)


def test_kmeans_deterministic_and_seed_dependent():
    x = np.random.default_rng(1).standard_normal((60, 4))
    a, b = kmeans(x, 5, seed=3), kmeans(x, 5, seed=3)
    assert np.array_equal(a.assignments, b.assignments) and a.inertia == b.inertia
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_inertia_is_min_over_restarts():
    x = np.random.default_rng(2).standard_normal((80, 3))
    best = kmeans(x, 6, seed=9, restarts=8)
    for child in np.random.SeedSequence(9).spawn(8):
        _, _, hist = lloyd(x, kmeans_plusplus(x, 6, np.random.default_rng(child)))
        assert best.inertia <= hist[-1]


def test_kmeans_matches_sklearn_on_separated_blobs():
    from sklearn.cluster import KMeans as SkKMeans
    rng = np.random.default_rng(3)
    centers = rng.standard_normal((4, 5)) * 10
    x = np.repeat(centers, 25, axis=0) + rng.standard_normal((100, 5)) * 0.1
    ours = kmeans(x, 4).inertia
    theirs = SkKMeans(4, n_init=10, random_state=0).fit(x).inertia_
    assert ours == pytest.approx(theirs, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 60), k=st.integers(2, 6))
def test_lloyd_inertia_non_increasing(seed, n, k):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    labels, centroids, hist = lloyd(x, kmeans_plusplus(x, min(k, n), rng))
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
    assert labels.min() >= 0 and labels.max() < min(k, n)


def test_empty_cluster_reseeded():
    x = np.array([[0.0], [1.0], [2.0], [10.0]])
    # the far-away centroid owns nothing at the first assignment
    labels, centroids, _ = lloyd(x, np.array([[1.0], [1.1], [100.0]]))
    assert len(set(labels.tolist())) == 3


def test_estimator_wrapper():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 2.0]])
    est = KMeans(n_clusters=2).fit(x)
    assert est.inertia_ == pytest.approx(2.5)
    np.testing.assert_array_equal(est.predict(x), est.labels_)
    assert est.get_params()["n_init"] == 10


# metrics --------------------------------------------------------------------

@pytest.mark.parametrize("pred, truth, expected", [
    ([0, 0, 1, 1], [1, 1, 0, 0], 1.0),
    ([0, 1, 2, 0], [0, 1, 2, 0], 1.0),
    ([0, 1, 0, 1], [0, 0, 1, 1], 0.5),
])
def test_accuracy_examples(pred, truth, expected):
    assert hungarian_accuracy(pred, truth) == expected
    assert brute_accuracy(pred, truth) == expected


def test_nmi_examples():
    assert nmi([0, 0, 1, 1, 2], [5, 5, 3, 3, 4]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)
    assert nmi([3, 3, 3], [1, 1, 1]) == 1.0


def test_ari_examples():
    assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert ari([0, 1, 2, 3], [3, 2, 1, 0]) == 1.0
    assert ari([2, 2, 0, 0, 1], [0, 0, 1, 1, 2]) == 1.0
    # 2 x 2 crossed partition: index 0, expected 2/3, max 2 -> -(2/3) / (4/3)
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert brute_ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert skm.adjusted_rand_score([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(-0.5)


def test_identical_partitions_score_one_exactly():
    y = np.random.default_rng(4).integers(0, 5, 50)
    r = score(y, y)
    assert (r.accuracy, r.nmi, r.ari) == (1.0, 1.0, 1.0)


def test_length_mismatch():
    for fn in (hungarian_accuracy, nmi, ari):
        with pytest.raises(LengthMismatch):
            fn([0, 1], [0, 1, 1])


def test_contingency():
    np.testing.assert_array_equal(contingency([0, 0, 1], [5, 7, 7]), [[1, 1], [0, 1]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 40), k=st.integers(1, 6))
def test_metrics_agree_with_sklearn(seed, n, k):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, k, n), rng.integers(0, k, n)
    assert nmi(a, b) == pytest.approx(skm.normalized_mutual_info_score(b, a), abs=1e-10)
    assert ari(a, b) == pytest.approx(skm.adjusted_rand_score(b, a), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30), k=st.integers(2, 5))
def test_metrics_relabel_invariant(seed, n, k):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, k, n), rng.integers(0, k, n)
    relabel = rng.permutation(k) + 10
    base = score(a, b)
    for pa, pb in ((relabel[a], b), (a, relabel[b])):
        r = score(pa, pb)
        assert r.accuracy == base.accuracy
        assert r.nmi == pytest.approx(base.nmi, abs=1e-12)
        assert r.ari == pytest.approx(base.ari, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 25), k=st.integers(1, 6))
def test_hungarian_equals_exhaustive(seed, n, k):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, k, n), rng.integers(0, k, n)
    assert hungarian_accuracy(a, b) == pytest.approx(brute_accuracy(a, b), abs=1e-15)


def test_brute_ari_matches_on_small_cases():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a, b = rng.integers(0, 3, 6), rng.integers(0, 3, 6)
        if len(set(a)) == 1 and len(set(b)) == 1:
            continue
        assert ari(a, b) == pytest.approx(brute_ari(a, b), abs=1e-12)

