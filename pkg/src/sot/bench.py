"""Experiment harness: clustering grid, distance percentiles, ablations, episodes.

Every run is a pure function of its spec and seeds. Work units (grid cells,
episodes) can be spread over processes with ``workers > 1``; results are
re-sorted afterwards so the output does not depend on scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import binomtest, rankdata

from .clustering import DEFAULT_RESTARTS, kmeans, score
from .exceptions import InvalidSpec, SingleClass, ValidationError
from .synthgen import (
    EpisodeSpec,
    LabeledDataset,
    SphereTaskSpec,
    make_task,
    sample_episode,
)
from .transform import SotConfig, sot_transform

METHODS = ("baseline", "sot")
CSV_HEADER = ("dim", "sigma", "seed", "method", "accuracy", "nmi", "ari", "wallclock_ms")
RESULT_VERSION = 1

DEFAULT_DIMS = (10, 32, 100, 316, 1000)
DEFAULT_SIGMAS = (0.10, 0.15, 0.19, 0.23, 0.29, 0.40, 0.55, 0.75)
DEFAULT_SEEDS = tuple(range(42, 52))
DEFAULT_LAMBDAS = (0.01, 0.025, 0.1, 0.25, 1.0, 4.0)

# single cell used by the ablations and the headline grid comparison
DEFAULT_CELL_DIM = 100
DEFAULT_CELL_SIGMA = 0.3


@dataclass(frozen=True)
class GridSpec:
    dims: tuple = DEFAULT_DIMS
    sigmas: tuple = DEFAULT_SIGMAS
    seeds: tuple = DEFAULT_SEEDS
    task: SphereTaskSpec = field(default_factory=SphereTaskSpec)
    sot: SotConfig = field(default_factory=SotConfig)
    methods: tuple = METHODS
    restarts: int = DEFAULT_RESTARTS

    def __post_init__(self):
        for name in ("dims", "sigmas", "seeds", "methods"):
            value = tuple(getattr(self, name))
            if not value:
                raise InvalidSpec(f"{name} must be nonempty")
            object.__setattr__(self, name, value)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidSpec(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if any(d < 2 for d in self.dims) or any(not s >= 0 for s in self.sigmas):
            raise InvalidSpec("dims must be >= 2 and sigmas >= 0")
        if self.restarts < 1:
            raise InvalidSpec("restarts must be >= 1")

    def cell_task(self, dim, sigma, seed) -> SphereTaskSpec:
        return replace(self.task, dim=int(dim), sigma=float(sigma), seed=int(seed))

    def to_dict(self) -> dict:
        task = self.task.to_dict()
        for key in ("dim", "sigma", "seed"):
            task.pop(key)
        return {"dims": list(self.dims), "sigmas": list(self.sigmas), "seeds": list(self.seeds),
                "task": task, "sot": self.sot.to_dict(), "methods": list(self.methods),
                "restarts": self.restarts}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        known = {"dims", "sigmas", "seeds", "task", "sot", "methods", "restarts"}
        extra = set(d) - known
        if extra:
            raise InvalidSpec(f"unknown grid spec keys: {sorted(extra)}")
        try:
            task = SphereTaskSpec(**d.get("task", {}))
            kwargs = {key: tuple(d[key]) for key in ("dims", "sigmas", "seeds", "methods") if key in d}
            if "sot" in d:
                kwargs["sot"] = SotConfig.from_dict(d["sot"])
            if "restarts" in d:
                kwargs["restarts"] = int(d["restarts"])
            return cls(task=task, **kwargs)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(f"bad grid spec: {exc}") from exc


def default_cell(seeds=DEFAULT_SEEDS, **overrides) -> GridSpec:
    return GridSpec(dims=(DEFAULT_CELL_DIM,), sigmas=(DEFAULT_CELL_SIGMA,), seeds=tuple(seeds),
                    **overrides)


@dataclass(frozen=True)
class GridRow:
    dim: int
    sigma: float
    seed: int
    method: str
    accuracy: float
    nmi: float
    ari: float
    wallclock_ms: float
    error: str | None = None


@dataclass
class GridResult:
    spec: GridSpec
    rows: list

    def to_json(self, record_timing: bool = False) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not record_timing:
                d["wallclock_ms"] = None
            for key in ("accuracy", "nmi", "ari"):
                if isinstance(d[key], float) and math.isnan(d[key]):
                    d[key] = None
            rows.append(d)
        return json.dumps({"spec": self.spec.to_dict(), "rows": rows, "version": RESULT_VERSION},
                          indent=2, sort_keys=True) + "\n"

    def to_csv(self, record_timing: bool = False) -> str:
        """Flat CSV; ``wallclock_ms`` is left blank unless ``record_timing``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.dim, repr(r.sigma), r.seed, r.method,
                        repr(r.accuracy), repr(r.nmi), repr(r.ari),
                        f"{r.wallclock_ms:.3f}" if record_timing else ""])
        return buf.getvalue()

    def cell_means(self, metric: str = "accuracy") -> dict:
        """``{(dim, sigma): {method: mean over seeds}}`` ignoring failed cells."""
        acc = defaultdict(lambda: defaultdict(list))
        for r in self.rows:
            if r.error is None:
                acc[(r.dim, r.sigma)][r.method].append(getattr(r, metric))
        return {cell: {m: float(np.mean(v)) for m, v in by.items()} for cell, by in acc.items()}

    def win_fraction(self, metric: str = "accuracy") -> float:
        """Fraction of (dim, sigma) cells where mean SOT >= mean baseline."""
        means = self.cell_means(metric)
        cells = [c for c in means.values() if "sot" in c and "baseline" in c]
        if not cells:
            return math.nan
        return sum(c["sot"] >= c["baseline"] for c in cells) / len(cells)

    def summary_table(self, metric: str = "accuracy") -> str:
        means = self.cell_means(metric)
        lines = [f"{'dim':>6} {'sigma':>6} {'baseline':>9} {'sot':>9} {'diff':>8}"]
        for (dim, sigma), by in sorted(means.items()):
            b, s = by.get("baseline", math.nan), by.get("sot", math.nan)
            lines.append(f"{dim:>6} {sigma:>6.2f} {b:>9.4f} {s:>9.4f} {s - b:>+8.4f}")
        lines.append(f"SOT >= baseline in {self.win_fraction(metric):.0%} of cells ({metric})")
        return "\n".join(lines)


def _cluster_rows(x, labels, k, seed, restarts):
    res = kmeans(x, k, seed=seed, restarts=restarts)
    return score(res.assignments, labels)


def run_cell(task: SphereTaskSpec, cfg: SotConfig, methods=METHODS,
             restarts: int = DEFAULT_RESTARTS) -> list:
    """Generate one dataset and score every requested method on it."""
    rows = []
    try:
        ds = make_task(task)
    except Exception as exc:  # recorded, never dropped
        return [GridRow(task.dim, task.sigma, task.seed, m, math.nan, math.nan, math.nan, 0.0,
                        f"{type(exc).__name__}: {exc}") for m in methods]
    for method in methods:
        t0 = time.perf_counter()
        try:
            x = ds.features if method == "baseline" else sot_transform(ds.features, cfg).w
            rep = _cluster_rows(x, ds.labels, task.k, task.seed, restarts)
            err = None
        except Exception as exc:
            rep, err = None, f"{type(exc).__name__}: {exc}"
        ms = (time.perf_counter() - t0) * 1e3
        if rep is None:
            rows.append(GridRow(task.dim, task.sigma, task.seed, method,
                                math.nan, math.nan, math.nan, ms, err))
        else:
            rows.append(GridRow(task.dim, task.sigma, task.seed, method,
                                rep.accuracy, rep.nmi, rep.ari, ms))
    return rows


def _run_cell_args(args):
    return run_cell(*args)


def _fan_out(fn, jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_clustering_grid(spec: GridSpec, workers: int = 1) -> GridResult:
    jobs = [(spec.cell_task(d, s, seed), spec.sot, spec.methods, spec.restarts)
            for d, s, seed in product(spec.dims, spec.sigmas, spec.seeds)]
    rows = [r for cell in _fan_out(_run_cell_args, jobs, workers) for r in cell]
    order = {name: i for i, name in enumerate(METHODS)}
    dpos = {d: i for i, d in enumerate(spec.dims)}
    spos = {s: i for i, s in enumerate(spec.sigmas)}
    rpos = {s: i for i, s in enumerate(spec.seeds)}
    rows.sort(key=lambda r: (dpos[r.dim], spos[r.sigma], rpos[r.seed], order[r.method]))
    return GridResult(spec, rows)


# distance percentiles ---------------------------------------------------

@dataclass(frozen=True)
class PercentileStats:
    intra_mean: float
    intra_std: float
    inter_mean: float
    inter_std: float


@dataclass(frozen=True)
class SeparationEntry:
    original: PercentileStats
    sot: PercentileStats

    def to_dict(self):
        return {"original": asdict(self.original), "sot": asdict(self.sot)}


def distance_percentiles(x, labels) -> PercentileStats:
    """Percentile rank of each pairwise distance within all pairwise distances.

    Ties share the lowest rank, so a set of equal minimal distances sits at
    percentile 0. Ranks map to ``100 * (rank - 1) / (m - 1)``.
    """
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise SingleClass("percentile analysis needs at least two classes")
    dist = pdist(np.asarray(x, dtype=np.float64))
    m = dist.size
    pct = 100.0 * (rankdata(dist, method="min") - 1.0) / max(m - 1, 1)
    i, j = np.triu_indices(labels.size, k=1)
    same = labels[i] == labels[j]
    intra, inter = pct[same], pct[~same]

    def stats(v):
        return (float(v.mean()), float(v.std())) if v.size else (math.nan, math.nan)

    return PercentileStats(*stats(intra), *stats(inter))


def distance_percentile_analysis(ds: LabeledDataset, cfg: SotConfig | None = None) -> SeparationEntry:
    cfg = cfg or SotConfig()
    w = sot_transform(ds.features, cfg).w
    return SeparationEntry(distance_percentiles(ds.features, ds.labels),
                           distance_percentiles(w, ds.labels))


def _average_entries(entries):
    def avg(attr):
        vals = [getattr(e, attr) for e in entries]
        return PercentileStats(*(float(np.mean([getattr(v, f) for v in vals]))
                                 for f in ("intra_mean", "intra_std", "inter_mean", "inter_std")))
    return SeparationEntry(avg("original"), avg("sot"))


def _separation_job(args):
    task, cfg = args
    return distance_percentile_analysis(make_task(task), cfg)


def run_separation_analysis(dims, sigmas, seeds=DEFAULT_SEEDS, task: SphereTaskSpec | None = None,
                            cfg: SotConfig | None = None, workers: int = 1) -> dict:
    """``{(dim, sigma): SeparationEntry}`` with statistics averaged over seeds."""
    task = task or SphereTaskSpec()
    cfg = cfg or SotConfig()
    keys = list(product(dims, sigmas))
    jobs = [(replace(task, dim=d, sigma=s, seed=seed), cfg) for d, s in keys for seed in seeds]
    out = _fan_out(_separation_job, jobs, workers)
    per = len(seeds)
    return {key: _average_entries(out[i * per:(i + 1) * per]) for i, key in enumerate(keys)}


# ablations --------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    value: float
    accuracy: float
    nmi: float
    ari: float


def _ablation_job(args):
    task, configs, restarts = args
    ds = make_task(task)
    return [score(kmeans(sot_transform(ds.features, c).w, task.k, seed=task.seed,
                         restarts=restarts).assignments, ds.labels) for c in configs]


def _ablate(cell: GridSpec, values, configs, workers):
    jobs = [(cell.cell_task(cell.dims[0], cell.sigmas[0], seed), configs, cell.restarts)
            for seed in cell.seeds]
    per_seed = _fan_out(_ablation_job, jobs, workers)
    rows = []
    for i, v in enumerate(values):
        reps = [s[i] for s in per_seed]
        rows.append(AblationRow(v, float(np.mean([r.accuracy for r in reps])),
                                float(np.mean([r.nmi for r in reps])),
                                float(np.mean([r.ari for r in reps]))))
    return rows


def ablate_sinkhorn_iters(cell: GridSpec, iters_list, workers: int = 1) -> list:
    """Seed-averaged SOT clustering metrics for each sweep count.

    Uses the first dim and sigma of ``cell`` and all of its seeds.
    """
    iters_list = [int(i) for i in iters_list]
    if not iters_list:
        raise ValidationError("iters_list must be nonempty")
    return _ablate(cell, iters_list, [cell.sot.with_sweeps(i) for i in iters_list], workers)


def ablate_lambda(cell: GridSpec, lambdas=DEFAULT_LAMBDAS, workers: int = 1) -> list:
    lambdas = [float(v) for v in lambdas]
    if not lambdas or any(not v > 0 for v in lambdas):
        raise ValidationError("lambdas must be a nonempty list of positive numbers")
    return _ablate(cell, lambdas, [cell.sot.with_lambda(v) for v in lambdas], workers)


# few-shot episodes --------------------------------------------------------

def episode_prototype_eval(ds: LabeledDataset, ep: EpisodeSpec, cfg: SotConfig | None = None,
                           use_sot: bool = True) -> float:
    """Nearest-prototype query accuracy on one sampled episode.

    With ``use_sot`` the transform is applied once to support and query
    together; prototypes are then class means of the transformed support rows.
    """
    support, query = sample_episode(ds, ep)
    if query.n == 0:
        raise ValidationError("episode has no query points")
    feats = np.vstack([support.features, query.features])
    if use_sot:
        feats = sot_transform(feats, cfg or SotConfig()).w
    s_feat, q_feat = feats[:support.n], feats[support.n:]
    classes = np.unique(support.labels)
    protos = np.stack([s_feat[support.labels == c].mean(axis=0) for c in classes])
    d = ((q_feat[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    pred = classes[d.argmin(axis=1)]
    return float((pred == query.labels).mean())


@dataclass(frozen=True)
class EpisodeReport:
    baseline: tuple
    sot: tuple
    wins: int
    losses: int
    ties: int
    p_value: float

    @property
    def baseline_mean(self):
        return float(np.mean(self.baseline))

    @property
    def sot_mean(self):
        return float(np.mean(self.sot))

    def to_dict(self):
        return {"episodes": len(self.sot), "baseline_mean": self.baseline_mean,
                "sot_mean": self.sot_mean, "wins": self.wins, "losses": self.losses,
                "ties": self.ties, "p_value": self.p_value}


def _episode_seeds(seed, i):
    data_seed, ep_seed = np.random.SeedSequence([seed, i]).generate_state(2)
    return int(data_seed), int(ep_seed)


def _episode_job(args):
    task, ep, cfg, seed, i = args
    data_seed, ep_seed = _episode_seeds(seed, i)
    ds = make_task(replace(task, seed=data_seed))
    ep = replace(ep, seed=ep_seed)
    return (episode_prototype_eval(ds, ep, cfg, use_sot=False),
            episode_prototype_eval(ds, ep, cfg, use_sot=True))


def run_episode_benchmark(task: SphereTaskSpec, ep: EpisodeSpec, n_episodes: int = 200,
                          cfg: SotConfig | None = None, seed: int = 42,
                          workers: int = 1) -> EpisodeReport:
    """Paired baseline/SOT accuracies on ``n_episodes`` fresh synthetic episodes.

    Episode ``i`` draws its dataset and split from ``SeedSequence([seed, i])``.
    The p-value is a one-sided sign test of SOT beating baseline, ties dropped.
    """
    cfg = cfg or SotConfig()
    jobs = [(task, ep, cfg, seed, i) for i in range(n_episodes)]
    pairs = _fan_out(_episode_job, jobs, workers)
    base = tuple(p[0] for p in pairs)
    sot = tuple(p[1] for p in pairs)
    wins = sum(s > b for b, s in pairs)
    losses = sum(s < b for b, s in pairs)
    ties = len(pairs) - wins - losses
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return EpisodeReport(base, sot, wins, losses, ties, float(p))
