"""Experiment runner and benchmark shapes.

Drives the loader to exhaustion with a simulated consumer (a fixed
to-device delay plus a fixed train delay per batch), records every span to
an event log, and writes {run_id}.events.jsonl plus {run_id}.summary.json.
On top of single runs it offers workers x fetchers sweeps, a loader-free
random-access pool benchmark, and a comparison table over summaries.
"""

from __future__ import annotations

import asyncio
import csv
import statistics
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .clock import Clock, MonotonicClock, VirtualClock
from .core import (
    DEFAULT_ITEM_SIZE,
    DatasetSpec,
    Sample,
    TransformModel,
    dataset_len,
    get_random_item,
    load_manifest,
    synthetic_manifest,
)
from .errors import ConfigError
from .loader import Loader, LoaderConfig
from .metrics import EventLog, MetricsSummary, build_summary, throughput_mbits
from .rng import SplitMix64, derive_seed
from .sampler import make_epoch_plan
from .storage import ByteCache, CacheConfig, LatencyModel, StoreSpec, open_store
from .strategy import StrategyConfig


@dataclass(frozen=True)
class ConsumerModel:
    """Stand-in trainer: per-batch device-transfer and train-step delays."""

    to_device_delay: float = 0.005
    train_delay: float = 0.04


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    synthetic_items: int = 15000
    size_dist: str = "fixed"
    item_size_bytes: int = DEFAULT_ITEM_SIZE
    size_median: int = DEFAULT_ITEM_SIZE
    size_sigma: float = 0.5
    transform: TransformModel = field(default_factory=TransformModel)
    store: StoreSpec = field(
        default_factory=lambda: StoreSpec(
            kind="latency_sim", latency_model=LatencyModel()
        )
    )
    cache: CacheConfig | None = None
    loader: LoaderConfig = field(default_factory=LoaderConfig)
    batch_size: int = 256
    dataset_limit: int | None = None
    epochs: int = 5
    seed: int = 0
    shuffle: bool = True
    drop_last: bool = False
    consumer: ConsumerModel = field(default_factory=ConsumerModel)
    clock: str = "monotonic"
    output_dir: str = "runs"
    run_id: str | None = None

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.manifest is None and self.synthetic_items < 0:
            raise ConfigError("synthetic_items must be non-negative")
        if self.dataset_limit is not None and self.dataset_limit < 0:
            raise ConfigError("dataset_limit must be non-negative")
        if self.clock not in ("monotonic", "virtual"):
            raise ConfigError("clock must be 'monotonic' or 'virtual'")
        if self.consumer.to_device_delay < 0 or self.consumer.train_delay < 0:
            raise ConfigError("consumer delays must be non-negative")
        self.loader.validate()

    def build_dataset(self) -> DatasetSpec:
        if self.manifest is not None:
            items = load_manifest(self.manifest)
        else:
            items = synthetic_manifest(
                self.synthetic_items,
                size_dist=self.size_dist,
                size_bytes=self.item_size_bytes,
                size_median=self.size_median,
                size_sigma=self.size_sigma,
                seed=self.seed,
            )
        return DatasetSpec(items=items, limit=self.dataset_limit,
                           transform_cost=self.transform)

    def build_clock(self) -> Clock:
        return VirtualClock() if self.clock == "virtual" else MonotonicClock()


@dataclass
class RunResult:
    run_id: str
    summary: MetricsSummary
    log: EventLog
    events_path: Path | None = None
    summary_path: Path | None = None


def _new_run_id(cfg: ExperimentConfig) -> str:
    return f"run-s{cfg.seed}-{int(time.time() * 1000):x}"


def run_experiment(cfg: ExperimentConfig, *, write_outputs: bool = True) -> RunResult:
    """Run one experiment: plan each epoch, drive the loader with the
    simulated consumer, and reduce the event log to a summary.
    """
    cfg.validate()
    dataset = cfg.build_dataset()
    clock = cfg.build_clock()
    sizes = {it.key: it.size_bytes for it in dataset.items}
    store = open_store(cfg.store, sizes=sizes, clock=clock)
    cache = ByteCache(cfg.cache) if cfg.cache is not None else None
    log = EventLog()
    n = dataset_len(dataset)

    async def drive() -> None:
        try:
            for epoch in range(cfg.epochs):
                plan = make_epoch_plan(
                    n, cfg.batch_size,
                    shuffle=cfg.shuffle, drop_last=cfg.drop_last,
                    seed=cfg.seed, epoch=epoch,
                )
                loader = Loader(cfg.loader, dataset, store, plan,
                                cache=cache, clock=clock, log=log)
                try:
                    while True:
                        batch = await loader.next_batch()
                        if batch is None:
                            break
                        t0 = clock.now()
                        if cfg.consumer.to_device_delay > 0:
                            await clock.sleep(cfg.consumer.to_device_delay)
                        t1 = clock.now()
                        log.record("to_device", t0, t1,
                                   epoch=epoch, batch_id=batch.batch_id)
                        if cfg.consumer.train_delay > 0:
                            await clock.sleep(cfg.consumer.train_delay)
                        t2 = clock.now()
                        log.record("train_step", t1, t2,
                                   epoch=epoch, batch_id=batch.batch_id)
                finally:
                    await loader.shutdown()
        finally:
            await store.aclose()

    clock.run(drive())

    summary = build_summary(log, cache.stats.snapshot() if cache else None)
    run_id = cfg.run_id or _new_run_id(cfg)
    result = RunResult(run_id=run_id, summary=summary, log=log)
    if write_outputs:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.events_path = out / f"{run_id}.events.jsonl"
        result.summary_path = out / f"{run_id}.summary.json"
        log.write_jsonl(result.events_path)
        summary.write_json(result.summary_path)
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = (
    "workers", "fetchers", "batch_pool", "repeats",
    "throughput_mbit_s_mean", "throughput_mbit_s_std",
    "throughput_img_s_mean", "runtime_s_mean",
    "median_get_item_s_mean", "median_get_batch_s_mean",
    "error",
)


@dataclass
class SweepSpec:
    base: ExperimentConfig
    workers: Sequence[int] | None = None
    fetchers: Sequence[int] | None = None
    batch_pools: Sequence[int] | None = None
    repeats: int = 1

    def axes(self) -> tuple[list[int], list[int], list[int]]:
        loader = self.base.loader
        strat = loader.strategy
        workers = list(self.workers) if self.workers else [loader.num_workers]
        fetchers = list(self.fetchers) if self.fetchers else [strat.num_fetch_workers]
        pools = list(self.batch_pools) if self.batch_pools else [strat.batch_pool]
        return workers, fetchers, pools


def _cell_config(base: ExperimentConfig, workers: int, fetchers: int,
                 pool: int, repeat: int) -> ExperimentConfig:
    strat = replace(base.loader.strategy, num_fetch_workers=fetchers, batch_pool=pool)
    loader = replace(base.loader, num_workers=workers, strategy=strat)
    cfg = replace(base, loader=loader, seed=base.seed + repeat, run_id=None)
    return cfg


def run_sweep(spec: SweepSpec, *, write_outputs: bool = False) -> list[dict]:
    """One run per (workers, fetchers, batch_pool) cell per repeat.

    A failing cell becomes an error-tagged row; the sweep continues.
    """
    if spec.repeats < 1:
        raise ConfigError("repeats must be at least 1")
    workers_axis, fetchers_axis, pool_axis = spec.axes()
    rows: list[dict] = []
    for workers in workers_axis:
        for fetchers in fetchers_axis:
            for pool in pool_axis:
                row: dict = {
                    "workers": workers, "fetchers": fetchers,
                    "batch_pool": pool, "repeats": spec.repeats, "error": "",
                }
                mbits: list[float] = []
                imgs: list[float] = []
                runtimes: list[float] = []
                med_item: list[float] = []
                med_batch: list[float] = []
                try:
                    for repeat in range(spec.repeats):
                        cfg = _cell_config(spec.base, workers, fetchers, pool, repeat)
                        res = run_experiment(cfg, write_outputs=write_outputs)
                        s = res.summary
                        mbits.append(s.throughput_mbit_s)
                        imgs.append(s.throughput_img_s)
                        runtimes.append(s.runtime_s)
                        med_item.append(s.medians.get("get_item", 0.0))
                        med_batch.append(s.medians.get("get_batch", 0.0))
                except Exception as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
                    continue
                row.update({
                    "throughput_mbit_s_mean": statistics.fmean(mbits),
                    "throughput_mbit_s_std":
                        statistics.stdev(mbits) if len(mbits) > 1 else 0.0,
                    "throughput_img_s_mean": statistics.fmean(imgs),
                    "runtime_s_mean": statistics.fmean(runtimes),
                    "median_get_item_s_mean": statistics.fmean(med_item),
                    "median_get_batch_s_mean": statistics.fmean(med_batch),
                })
                rows.append(row)
    return rows


def write_csv(rows: list[dict], columns: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


# ---------------------------------------------------------------------------
# Dataset-level pool benchmark
# ---------------------------------------------------------------------------

POOL_BENCH_COLUMNS = (
    "pool_size", "groups", "draws_per_group",
    "throughput_mbit_s", "median_request_s", "mean_request_s", "total_items",
)

#: Pool-size axis used by the dataset benchmark recipe.
DEFAULT_POOL_SIZES = (1, 2, 3, 4, 5, 6, 7, 10, 15, 20, 30, 40, 50, 60, 80)


def run_dataset_pool_bench(
    pool_sizes: Sequence[int],
    groups: int,
    draws_per_group: int,
    base: ExperimentConfig,
) -> list[dict]:
    """Random single-item loading with a bounded concurrent task pool,
    bypassing the loader entirely. One row per pool size.
    """
    if groups < 1 or draws_per_group < 1:
        raise ConfigError("groups and draws_per_group must be at least 1")
    base.validate()
    dataset = base.build_dataset()
    if dataset_len(dataset) == 0:
        raise ConfigError("pool bench needs a non-empty dataset")
    sizes = {it.key: it.size_bytes for it in dataset.items}

    rows: list[dict] = []
    for pool_size in pool_sizes:
        if pool_size < 1:
            raise ConfigError("pool sizes must be at least 1")
        clock = base.build_clock()
        store = open_store(base.store, sizes=sizes, clock=clock)
        rng = SplitMix64(derive_seed("pool-bench", base.seed, pool_size))
        samples: list[Sample] = []

        async def drive() -> tuple[float, float]:
            gate = asyncio.Semaphore(pool_size)

            async def one() -> None:
                async with gate:
                    samples.append(
                        await get_random_item(dataset, store, rng, clock=clock)
                    )

            t0 = clock.now()
            try:
                for _ in range(groups):
                    await asyncio.gather(*[
                        asyncio.create_task(one()) for _ in range(draws_per_group)
                    ])
            finally:
                await store.aclose()
            return t0, clock.now()

        t0, t1 = clock.run(drive())
        spans = [s.fetch_span[1] - s.fetch_span[0] for s in samples]
        total_bytes = sum(s.item.size_bytes for s in samples)
        rows.append({
            "pool_size": pool_size,
            "groups": groups,
            "draws_per_group": draws_per_group,
            "throughput_mbit_s": throughput_mbits(total_bytes, t0, t1),
            "median_request_s": statistics.median(spans),
            "mean_request_s": statistics.fmean(spans),
            "total_items": len(samples),
        })
    return rows


# ---------------------------------------------------------------------------
# Comparison report
# ---------------------------------------------------------------------------

COMPARE_COLUMNS = (
    "name", "runtime_s", "throughput_img_s", "throughput_mbit_s",
    "idle_fraction_pct", "median_get_item_s", "median_get_batch_s",
    "speedup_img", "speedup_mbit",
)


def compare_report(
    summaries: Sequence[tuple[str, MetricsSummary]],
    baseline: str | None = None,
) -> tuple[list[dict], str]:
    """Tabulate summaries with speedup ratios against a named baseline
    (default: the first entry). Returns (rows, rendered text table).
    """
    if len(summaries) < 2:
        raise ConfigError("compare needs at least two summaries")
    names = [name for name, _ in summaries]
    base_name = baseline if baseline is not None else names[0]
    if base_name not in names:
        raise ConfigError(f"baseline {base_name!r} not among {names}")
    base = dict(summaries)[base_name]

    counts = {name: s.counts for name, s in summaries}
    if len({(c.get("items"), c.get("epochs")) for c in counts.values()}) > 1:
        warnings.warn("compared runs differ in item/epoch counts; "
                      "ratios may not be meaningful", stacklevel=2)

    rows = []
    for name, s in summaries:
        rows.append({
            "name": name,
            "runtime_s": round(s.runtime_s, 6),
            "throughput_img_s": round(s.throughput_img_s, 4),
            "throughput_mbit_s": round(s.throughput_mbit_s, 4),
            "idle_fraction_pct": round(s.idle_fraction_pct, 2),
            "median_get_item_s": round(s.medians.get("get_item", 0.0), 6),
            "median_get_batch_s": round(s.medians.get("get_batch", 0.0), 6),
            "speedup_img": round(
                s.throughput_img_s / base.throughput_img_s, 4
            ) if base.throughput_img_s else 0.0,
            "speedup_mbit": round(
                s.throughput_mbit_s / base.throughput_mbit_s, 4
            ) if base.throughput_mbit_s else 0.0,
        })

    widths = {
        col: max(len(col), *(len(str(r[col])) for r in rows))
        for col in COMPARE_COLUMNS
    }
    header = "  ".join(col.ljust(widths[col]) for col in COMPARE_COLUMNS)
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("  ".join(str(r[col]).ljust(widths[col]) for col in COMPARE_COLUMNS))
    return rows, "\n".join(lines)
