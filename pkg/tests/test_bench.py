import json
import math

import numpy as np
import pytest

from sot.bench import (
    GridSpec,
    ablate_lambda,
    ablate_sinkhorn_iters,
    default_cell,
    distance_percentile_analysis,
    distance_percentiles,
    episode_prototype_eval,
    run_cell,
    run_clustering_grid,
    run_episode_benchmark,
)
from sot.exceptions import InvalidSpec, SingleClass
from sot.synthgen import EpisodeSpec, SphereTaskSpec, generate_sphere_dataset, make_task
from sot.transform import SotConfig, sot_transform


def small_grid(**kw):
    base = dict(dims=(10, 100), sigmas=(0.1, 0.4), seeds=(1, 2),
                task=SphereTaskSpec(k=4, points_per_cluster=8), restarts=2)
    base.update(kw)
    return GridSpec(**base)


def test_grid_spec_defaults_and_validation():
    g = GridSpec()
    assert g.dims == (10, 32, 100, 316, 1000)
    assert len(g.sigmas) == 8 and min(g.sigmas) == 0.1 and max(g.sigmas) == 0.75
    assert len(g.seeds) == 10
    for bad in (dict(dims=()), dict(methods=("kmeans",)), dict(sigmas=(-0.1,)), dict(restarts=0)):
        with pytest.raises(InvalidSpec):
            GridSpec(**bad)


def test_grid_spec_dict_roundtrip():
    g = small_grid(sot=SotConfig.from_values(lam=0.25, iters=4))
    assert GridSpec.from_dict(json.loads(json.dumps(g.to_dict()))) == g
    with pytest.raises(InvalidSpec):
        GridSpec.from_dict({"dims": [10], "colour": 1})
    with pytest.raises(InvalidSpec):
        GridSpec.from_dict({"task": {"k": 3, "bogus": 2}})


def test_sigma_zero_cell_is_perfect():
    rows = run_cell(SphereTaskSpec(sigma=0.0, dim=32), SotConfig())
    assert [r.method for r in rows] == ["baseline", "sot"]
    assert all(r.accuracy == 1.0 and r.error is None for r in rows)


def test_failed_cell_is_recorded():
    rows = run_cell(SphereTaskSpec(k=1), SotConfig())
    assert len(rows) == 2
    assert all(r.error and math.isnan(r.accuracy) for r in rows)


def test_grid_rows_sorted_and_complete():
    res = run_clustering_grid(small_grid())
    assert len(res.rows) == 2 * 2 * 2 * 2
    keys = [(r.dim, r.sigma, r.seed, r.method) for r in res.rows]
    assert keys == sorted(keys)
    for r in res.rows:
        assert 0 <= r.accuracy <= 1 and 0 <= r.nmi <= 1 and -0.5 <= r.ari <= 1


def test_grid_determinism_and_workers():
    spec = small_grid()
    a, b = run_clustering_grid(spec), run_clustering_grid(spec, workers=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_result_serialization():
    res = run_clustering_grid(small_grid(dims=(10,), sigmas=(0.2,), seeds=(3,)))
    lines = res.to_csv().splitlines()
    assert lines[0] == "dim,sigma,seed,method,accuracy,nmi,ari,wallclock_ms"
    assert lines[1].startswith("10,0.2,3,baseline,") and lines[1].endswith(",")
    assert res.to_csv(record_timing=True).splitlines()[1].split(",")[-1] != ""
    doc = json.loads(res.to_json())
    assert doc["version"] == 1 and set(doc) == {"spec", "rows", "version"}
    assert len(doc["rows"]) == 2


def test_win_fraction_and_summary():
    res = run_clustering_grid(small_grid())
    means = res.cell_means()
    assert set(means) == {(10, 0.1), (10, 0.4), (100, 0.1), (100, 0.4)}
    wins = sum(m["sot"] >= m["baseline"] for m in means.values()) / 4
    assert res.win_fraction() == wins
    assert "of cells (accuracy)" in res.summary_table()


def test_easy_regime_both_arms_high():
    spec = GridSpec(dims=(10, 32, 100), sigmas=(0.1,))
    for by in run_clustering_grid(spec).cell_means().values():
        assert by["baseline"] >= 0.95
        assert by["sot"] >= 0.95


# percentiles ----------------------------------------------------------------

def test_percentiles_sigma_zero():
    ds = generate_sphere_dataset(SphereTaskSpec(sigma=0.0, k=4, points_per_cluster=5, dim=10))
    st = distance_percentiles(ds.features, ds.labels)
    assert st.intra_mean == 0.0 and st.intra_std == 0.0
    assert st.inter_mean > 0


def test_percentiles_hand_example():
    # distances on a line: 1, 3, 2 -> percentiles 0, 100, 50
    st = distance_percentiles(np.array([[0.0], [1.0], [3.0]]), [0, 0, 1])
    assert (st.intra_mean, st.inter_mean) == (0.0, 75.0)


def test_percentiles_shuffled_labels_near_fifty():
    ds = make_task(SphereTaskSpec(sigma=0.2))
    rng = np.random.default_rng(0)
    intra, inter = [], []
    for _ in range(20):
        s = distance_percentiles(ds.features, rng.permutation(ds.labels))
        intra.append(s.intra_mean)
        inter.append(s.inter_mean)
    assert abs(np.mean(intra) - 50) < 2 and abs(np.mean(inter) - 50) < 2


def test_percentiles_single_class():
    with pytest.raises(SingleClass):
        distance_percentiles(np.eye(3), [1, 1, 1])


def test_percentile_analysis_structure():
    entry = distance_percentile_analysis(make_task(SphereTaskSpec(sigma=0.19)))
    for st in (entry.original, entry.sot):
        assert 0 <= st.intra_mean <= 100 and 0 <= st.inter_mean <= 100
        assert st.intra_mean < st.inter_mean
    assert set(entry.to_dict()) == {"original", "sot"}


# ablations --------------------------------------------------------------------

def test_ablations_shape_and_repeatability():
    cell = default_cell(seeds=(1, 2), restarts=2)
    rows = ablate_sinkhorn_iters(cell, [1, 4])
    assert [r.value for r in rows] == [1, 4]
    assert rows == ablate_sinkhorn_iters(cell, [1, 4])
    lam = ablate_lambda(cell, [0.1, 0.1])
    assert lam[0] == lam[1]
    with pytest.raises(ValueError):
        ablate_lambda(cell, [0.0])


def test_tiny_lambda_gives_near_uniform_plan():
    ds = make_task(SphereTaskSpec())
    w = sot_transform(ds.features, SotConfig.from_values(lam=0.001)).w
    off = w[~np.eye(len(w), dtype=bool)]
    assert off.max() - off.min() < 1e-3


# episodes ------------------------------------------------------------------------

def test_episode_sigma_zero_perfect():
    ds = make_task(SphereTaskSpec(sigma=0.0))
    for use_sot in (False, True):
        assert episode_prototype_eval(ds, EpisodeSpec(), use_sot=use_sot) == 1.0


def test_one_way_episode():
    ds = make_task(SphereTaskSpec(sigma=0.5))
    assert episode_prototype_eval(ds, EpisodeSpec(n_way=1, k_shot=2, q_query=5), use_sot=True) == 1.0


def test_baseline_ignores_config():
    ds = make_task(SphereTaskSpec(sigma=0.4))
    a = episode_prototype_eval(ds, EpisodeSpec(), SotConfig(), use_sot=False)
    b = episode_prototype_eval(ds, EpisodeSpec(), SotConfig.from_values(lam=4.0, iters=1), use_sot=False)
    assert a == b


def test_episode_sot_matches_manual_pipeline():
    from sot.synthgen import sample_episode
    ds = make_task(SphereTaskSpec(sigma=0.4))
    ep = EpisodeSpec(n_way=3, k_shot=2, q_query=4)
    s, q = sample_episode(ds, ep)
    w = sot_transform(np.vstack([s.features, q.features])).w
    protos = np.stack([w[:6][s.labels == c].mean(0) for c in np.unique(s.labels)])
    pred = np.unique(s.labels)[((w[6:, None] - protos[None]) ** 2).sum(-1).argmin(1)]
    assert episode_prototype_eval(ds, ep, use_sot=True) == pytest.approx((pred == q.labels).mean())


def test_episode_benchmark_report():
    task = SphereTaskSpec(dim=20, sigma=0.5)
    rep = run_episode_benchmark(task, EpisodeSpec(), n_episodes=6, seed=3)
    assert len(rep.sot) == 6 and rep.wins + rep.losses + rep.ties == 6
    assert 0 <= rep.p_value <= 1
    again = run_episode_benchmark(task, EpisodeSpec(), n_episodes=6, seed=3, workers=2)
    assert again.to_dict() == rep.to_dict()
