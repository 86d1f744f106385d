"""Command-line benchmark harness.

Subcommands: run, sweep, pool-bench, compare, gen-manifest. Values come
from an optional --config JSON file with individual flags overriding it.
Exit codes: 0 success, 2 configuration error, 3 store unavailable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import (
    experiment_config_from_dict,
    load_config_file,
    set_path,
)
from .core import synthetic_manifest, write_manifest
from .errors import ConfigError, StoreUnavailable
from .harness import (
    COMPARE_COLUMNS,
    DEFAULT_POOL_SIZES,
    POOL_BENCH_COLUMNS,
    SWEEP_COLUMNS,
    SweepSpec,
    compare_report,
    run_dataset_pool_bench,
    run_experiment,
    run_sweep,
    write_csv,
)
from .metrics import MetricsSummary

# flag dest -> dotted path into the config dict
_FLAG_PATHS = {
    "manifest": ("manifest",),
    "synthetic_items": ("synthetic_items",),
    "size_dist": ("size_dist",),
    "item_size_bytes": ("item_size_bytes",),
    "size_median": ("size_median",),
    "size_sigma": ("size_sigma",),
    "transform_mode": ("transform", "mode"),
    "transform_cost": ("transform", "cost"),
    "store_kind": ("store", "kind"),
    "store_path": ("store", "root_or_endpoint"),
    "store_auth": ("store", "auth"),
    "latency_dist": ("store", "latency", "distribution"),
    "latency_params": ("store", "latency", "params"),
    "bandwidth_bytes_per_s": ("store", "latency", "bandwidth_bytes_per_s"),
    "latency_seed": ("store", "latency", "seed"),
    "cache_capacity_bytes": ("cache", "capacity_bytes"),
    "num_workers": ("loader", "num_workers"),
    "prefetch_factor": ("loader", "prefetch_factor"),
    "worker_startup_delay": ("loader", "worker_startup_delay"),
    "in_order": ("loader", "in_order"),
    "strategy": ("loader", "strategy", "kind"),
    "num_fetch_workers": ("loader", "strategy", "num_fetch_workers"),
    "batch_pool": ("loader", "strategy", "batch_pool"),
    "batch_size": ("batch_size",),
    "dataset_limit": ("dataset_limit",),
    "epochs": ("epochs",),
    "seed": ("seed",),
    "shuffle": ("shuffle",),
    "drop_last": ("drop_last",),
    "to_device_delay": ("consumer", "to_device_delay"),
    "train_delay": ("consumer", "train_delay"),
    "clock": ("clock",),
    "output_dir": ("output_dir",),
    "run_id": ("run_id",),
}


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    g = parser.add_argument_group("experiment")
    g.add_argument("--manifest", help="dataset manifest path")
    g.add_argument("--synthetic-items", type=int)
    g.add_argument("--size-dist", choices=["fixed", "lognormal"])
    g.add_argument("--item-size-bytes", type=int)
    g.add_argument("--size-median", type=int)
    g.add_argument("--size-sigma", type=float)
    g.add_argument("--transform-mode", choices=["none", "fixed_busy", "per_byte_busy"])
    g.add_argument("--transform-cost", type=float)
    g.add_argument("--store-kind", choices=["local_dir", "http_object", "latency_sim"])
    g.add_argument("--store-path", help="directory root or HTTP endpoint")
    g.add_argument("--store-auth")
    g.add_argument("--latency-dist", choices=["fixed", "uniform", "lognormal"])
    g.add_argument("--latency-params", type=_float_list,
                   help="comma-separated distribution params in seconds")
    g.add_argument("--bandwidth-bytes-per-s", type=float)
    g.add_argument("--latency-seed", type=int)
    g.add_argument("--cache-capacity-bytes", type=int)
    g.add_argument("--num-workers", type=int)
    g.add_argument("--prefetch-factor", type=int)
    g.add_argument("--worker-startup-delay", type=float)
    g.add_argument("--in-order", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--strategy",
                   choices=["sequential", "intra_batch", "pooled_disassembly"])
    g.add_argument("--num-fetch-workers", type=int)
    g.add_argument("--batch-pool", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--dataset-limit", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--drop-last", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--to-device-delay", type=float)
    g.add_argument("--train-delay", type=float)
    g.add_argument("--clock", choices=["monotonic", "virtual"])
    g.add_argument("--output-dir")
    g.add_argument("--run-id")


def _build_config(args: argparse.Namespace):
    data = load_config_file(args.config) if args.config else {}
    for dest, path in _FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is not None:
            set_path(data, path, value)
    return experiment_config_from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fetchpipe",
        description="Concurrent data-loading benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_experiment_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="workers x fetchers grid")
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument("--workers", type=_int_list, help="comma-separated axis")
    p_sweep.add_argument("--fetchers", type=_int_list, help="comma-separated axis")
    p_sweep.add_argument("--batch-pools", type=_int_list, help="comma-separated axis")
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--csv-out", default="sweep.csv")

    p_pool = sub.add_parser("pool-bench", help="random-access pool-size benchmark")
    _add_experiment_flags(p_pool)
    p_pool.add_argument("--pool-sizes", type=_int_list,
                        default=list(DEFAULT_POOL_SIZES))
    p_pool.add_argument("--groups", type=int, default=40)
    p_pool.add_argument("--draws-per-group", type=int, default=2000)
    p_pool.add_argument("--csv-out", default="pool_bench.csv")

    p_cmp = sub.add_parser("compare", help="tabulate run summaries")
    p_cmp.add_argument("summaries", nargs="+", help="summary.json paths")
    p_cmp.add_argument("--baseline", help="name of the baseline summary")
    p_cmp.add_argument("--csv-out")

    p_gen = sub.add_parser("gen-manifest", help="emit a synthetic dataset manifest")
    p_gen.add_argument("--items", type=int, required=True)
    p_gen.add_argument("--size-dist", choices=["fixed", "lognormal"], default="fixed")
    p_gen.add_argument("--size-bytes", type=int, default=115 * 1024)
    p_gen.add_argument("--size-median", type=int, default=115 * 1024)
    p_gen.add_argument("--size-sigma", type=float, default=0.5)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    result = run_experiment(cfg)
    print(json.dumps(result.summary.to_json_dict(), indent=2))
    print(f"events: {result.events_path}", file=sys.stderr)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    spec = SweepSpec(
        base=cfg,
        workers=args.workers,
        fetchers=args.fetchers,
        batch_pools=args.batch_pools,
        repeats=args.repeats,
    )
    rows = run_sweep(spec)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.csv_out
    write_csv(rows, SWEEP_COLUMNS, path)
    print(f"{len(rows)} rows -> {path}")
    return 0


def _cmd_pool_bench(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    rows = run_dataset_pool_bench(
        args.pool_sizes, args.groups, args.draws_per_group, cfg
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / args.csv_out
    write_csv(rows, POOL_BENCH_COLUMNS, path)
    print(f"{len(rows)} rows -> {path}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    summaries = []
    for path in args.summaries:
        name = Path(path).name.removesuffix(".summary.json").removesuffix(".json")
        summaries.append((name, MetricsSummary.read_json(path)))
    rows, text = compare_report(summaries, baseline=args.baseline)
    print(text)
    if args.csv_out:
        write_csv(rows, COMPARE_COLUMNS, args.csv_out)
    return 0


def _cmd_gen_manifest(args: argparse.Namespace) -> int:
    items = synthetic_manifest(
        args.items,
        size_dist=args.size_dist,
        size_bytes=args.size_bytes,
        size_median=args.size_median,
        size_sigma=args.size_sigma,
        seed=args.seed,
    )
    write_manifest(items, args.out)
    print(f"{len(items)} items -> {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "pool-bench": _cmd_pool_bench,
    "compare": _cmd_compare,
    "gen-manifest": _cmd_gen_manifest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StoreUnavailable as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
