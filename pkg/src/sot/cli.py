"""Command-line entry point: ``sot <subcommand> ...``.

Exit codes: 0 success, 2 usage or input-file errors, 3 numeric failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import bench
from .exceptions import InvalidSpec, SotError
from .io import FileFormatError, format_matrix, read_features, read_labels, write_labels, write_matrix
from .synthgen import EpisodeSpec, LabeledDataset, SphereTaskSpec, generate_sphere_dataset, prepare_features
from .transform import SotConfig, sot_transform

DEFAULT_SEED = 42
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(SotError):
    pass


def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not a number") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"{s!r} must be a positive finite number")
    return v


def _nonneg_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not a number") from None
    if not 0 <= v < float("inf"):
        raise argparse.ArgumentTypeError(f"{s!r} must be a nonnegative finite number")
    return v


def _int_at_least(lo):
    def parse(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{s!r} is not an integer") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"{s!r} must be >= {lo}")
        return v
    return parse


def _list_of(conv):
    def parse(s):
        return [conv(part) for part in s.split(",") if part.strip()]
    return parse


def _sot_flags(p):
    g = p.add_argument_group("transform settings")
    g.add_argument("--lambda", dest="lam", type=_positive_float, default=0.1,
                   help="entropy regularization weight (default 0.1)")
    g.add_argument("--iters", type=_int_at_least(1), default=10, help="Sinkhorn sweeps (default 10)")
    g.add_argument("--tol", type=_nonneg_float, default=0.0,
                   help="stop early once the marginal error is below this (default 0: off)")
    g.add_argument("--linear-domain", action="store_true", help="solve in the linear domain")
    g.add_argument("--no-symmetrize", action="store_true")
    g.add_argument("--no-unit-diagonal", action="store_true")


def _common_flags(p, workers=False):
    p.add_argument("--seed", type=_int_at_least(0), default=DEFAULT_SEED,
                   help=f"base random seed (default {DEFAULT_SEED})")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    if workers:
        p.add_argument("--workers", type=_int_at_least(1), default=1,
                       help="worker processes; results do not depend on this")


def _task_flags(p, dim=100, sigma=0.3):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--k", type=_int_at_least(1), default=10, help="number of clusters")
    g.add_argument("--points", type=_int_at_least(1), default=20, help="points per cluster")
    g.add_argument("--dim", type=_int_at_least(2), default=dim)
    g.add_argument("--sigma", type=_nonneg_float, default=sigma, help="noise standard deviation")
    g.add_argument("--pca-dim", type=_int_at_least(0), default=50,
                   help="reduce to this many dims when dim exceeds it; 0 disables (default 50)")


def _config(args) -> SotConfig:
    return SotConfig.from_values(lam=args.lam, iters=args.iters, marginal_tol=args.tol,
                                 log_domain=not args.linear_domain,
                                 symmetrize=not args.no_symmetrize,
                                 set_unit_diagonal=not args.no_unit_diagonal)


def _task(args, seed=None) -> SphereTaskSpec:
    return SphereTaskSpec(k=args.k, points_per_cluster=args.points, dim=args.dim, sigma=args.sigma,
                          seed=args.seed if seed is None else seed, pca_dim=args.pca_dim).validate()


def _emit_table(rows, fmt, out=None):
    """Write a list of flat dicts as CSV or JSON to ``out`` or stdout."""
    if fmt == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_transform(args) -> int:
    x = read_features(args.features)
    cfg = _config(args)
    t0 = time.perf_counter()
    emb = sot_transform(x, cfg)
    ms = (time.perf_counter() - t0) * 1e3
    if args.out == "-":
        sys.stdout.write(format_matrix(emb.w))
    else:
        write_matrix(args.out, emb.w)
    print(f"n={x.shape[0]} d={x.shape[1]} marginal_err={emb.marginal_err:.3e} wallclock_ms={ms:.1f}",
          file=sys.stderr)
    return EXIT_OK


def _grid_spec(args) -> bench.GridSpec:
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSpec(f"cannot read grid spec {args.spec}: {exc}") from exc
        return bench.GridSpec.from_dict(data)
    seeds = tuple(args.seed + i for i in range(args.n_seeds))
    task = SphereTaskSpec(k=args.k, points_per_cluster=args.points, pca_dim=args.pca_dim)
    return bench.GridSpec(dims=tuple(args.dims), sigmas=tuple(args.sigmas), seeds=seeds, task=task,
                          sot=_config(args), methods=tuple(args.methods),
                          restarts=args.restarts)


def cmd_cluster_bench(args) -> int:
    spec = _grid_spec(args)
    result = bench.run_clustering_grid(spec, workers=args.workers)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{stem}.json").write_text(result.to_json(args.record_timing), encoding="utf-8")
    Path(f"{stem}.csv").write_text(result.to_csv(args.record_timing), encoding="utf-8")
    print(result.summary_table("accuracy"))
    for metric in ("nmi", "ari"):
        print(f"SOT >= baseline in {result.win_fraction(metric):.0%} of cells ({metric})")
    failed = [r for r in result.rows if r.error]
    if failed:
        print(f"{len(failed)} failed runs recorded in {stem}.json", file=sys.stderr)
    return EXIT_OK


def _cell(args) -> bench.GridSpec:
    seeds = tuple(args.seed + i for i in range(args.n_seeds))
    task = SphereTaskSpec(k=args.k, points_per_cluster=args.points, pca_dim=args.pca_dim)
    return bench.GridSpec(dims=(args.dim,), sigmas=(args.sigma,), seeds=seeds, task=task,
                          sot=_config(args), restarts=args.restarts)


def cmd_ablate_iters(args) -> int:
    rows = bench.ablate_sinkhorn_iters(_cell(args), args.iters_list, workers=args.workers)
    _emit_table([{"iters": int(r.value), "accuracy": r.accuracy, "nmi": r.nmi, "ari": r.ari}
                 for r in rows], args.format, args.out)
    return EXIT_OK


def cmd_ablate_lambda(args) -> int:
    rows = bench.ablate_lambda(_cell(args), args.lambdas, workers=args.workers)
    _emit_table([{"lambda": r.value, "accuracy": r.accuracy, "nmi": r.nmi, "ari": r.ari}
                 for r in rows], args.format, args.out)
    return EXIT_OK


def cmd_distances(args) -> int:
    x = read_features(args.features)
    y = read_labels(args.labels)
    if len(y) != len(x):
        raise UsageError(f"{len(x)} feature rows but {len(y)} labels")
    entry = bench.distance_percentile_analysis(LabeledDataset(x, y), _config(args))
    rows = [{"features": name, **asdict(stats)}
            for name, stats in (("original", entry.original), ("sot", entry.sot))]
    _emit_table(rows, args.format, args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    task = _task(args)
    ds = prepare_features(generate_sphere_dataset(task), task)
    write_matrix(args.out, ds.features)
    labels_out = args.labels_out or str(Path(args.out).with_suffix(".labels.txt"))
    write_labels(labels_out, ds.labels)
    print(f"wrote {ds.n} x {ds.features.shape[1]} features to {args.out}, labels to {labels_out}",
          file=sys.stderr)
    return EXIT_OK


def cmd_episodes(args) -> int:
    ep = EpisodeSpec(n_way=args.n_way, k_shot=args.k_shot, q_query=args.query)
    rep = bench.run_episode_benchmark(_task(args), ep, args.episodes, _config(args), seed=args.seed,
                                      workers=args.workers)
    _emit_table([rep.to_dict()], args.format, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="embed a CSV feature file")
    p.add_argument("features", help="CSV file, one item per line")
    p.add_argument("-o", "--out", default="-", help="output CSV path ('-' for stdout)")
    _sot_flags(p)
    _common_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("cluster-bench", help="k-means on original vs SOT features over a grid")
    p.add_argument("--spec", help="grid spec JSON; overrides the grid flags")
    p.add_argument("--dims", type=_list_of(_int_at_least(2)), default=list(bench.DEFAULT_DIMS))
    p.add_argument("--sigmas", type=_list_of(_nonneg_float), default=list(bench.DEFAULT_SIGMAS))
    p.add_argument("--n-seeds", type=_int_at_least(1), default=10)
    p.add_argument("--methods", type=_list_of(str), default=list(bench.METHODS))
    p.add_argument("--k", type=_int_at_least(1), default=10)
    p.add_argument("--points", type=_int_at_least(1), default=20)
    p.add_argument("--pca-dim", type=_int_at_least(0), default=50)
    p.add_argument("--restarts", type=_int_at_least(1), default=10)
    p.add_argument("--out", required=True, help="output stem; writes STEM.json and STEM.csv")
    p.add_argument("--record-timing", action="store_true",
                   help="fill wallclock_ms (makes outputs differ run to run)")
    _sot_flags(p)
    _common_flags(p, workers=True)
    p.set_defaults(func=cmd_cluster_bench)

    for name, func, helptext in (("ablate-iters", cmd_ablate_iters, "vary the Sinkhorn sweep count"),
                                 ("ablate-lambda", cmd_ablate_lambda, "vary lambda")):
        p = sub.add_parser(name, help=helptext)
        if name == "ablate-iters":
            p.add_argument("--iters-list", type=_list_of(_int_at_least(1)), default=[1, 2, 4, 8, 16])
        else:
            p.add_argument("--lambdas", type=_list_of(_positive_float), default=list(bench.DEFAULT_LAMBDAS))
        p.add_argument("--n-seeds", type=_int_at_least(1), default=10)
        p.add_argument("--restarts", type=_int_at_least(1), default=10)
        p.add_argument("--out", help="write the table here instead of stdout")
        _task_flags(p, dim=bench.DEFAULT_CELL_DIM, sigma=bench.DEFAULT_CELL_SIGMA)
        _sot_flags(p)
        _common_flags(p, workers=True)
        p.set_defaults(func=func)

    p = sub.add_parser("distances", help="intra/inter-class distance percentiles")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    _sot_flags(p)
    _common_flags(p)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("generate", help="write a synthetic sphere dataset")
    p.add_argument("--out", required=True, help="feature CSV path")
    p.add_argument("--labels-out", help="label file path (default: <out stem>.labels.txt)")
    _task_flags(p)
    _common_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("episodes", help="nearest-prototype few-shot episodes with and without SOT")
    p.add_argument("--n-way", type=_int_at_least(1), default=5)
    p.add_argument("--k-shot", type=_int_at_least(1), default=5)
    p.add_argument("--query", type=_int_at_least(1), default=15)
    p.add_argument("--episodes", type=_int_at_least(1), default=200)
    p.add_argument("--out")
    _task_flags(p)
    _sot_flags(p)
    _common_flags(p, workers=True)
    p.set_defaults(func=cmd_episodes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, InvalidSpec, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SotError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
