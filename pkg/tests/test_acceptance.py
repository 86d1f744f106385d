"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside pytest's own output.
"""

import asyncio
import math
import random
import statistics
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from fetchpipe import (
    ByteCache,
    CacheConfig,
    ConsumerModel,
    EventLog,
    ExperimentConfig,
    LatencyModel,
    Loader,
    LoaderConfig,
    MonotonicClock,
    SplitMix64,
    StoreSpec,
    StrategyConfig,
    VirtualClock,
    cached_fetch,
    fade_analysis,
    idle_fraction,
    make_epoch_plan,
    median_span,
    run_dataset_pool_bench,
    run_experiment,
    throughput_images,
    throughput_mbits,
)

from conftest import make_dataset, sim_store


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


async def drain(loader):
    batches = []
    while True:
        batch = await loader.next_batch()
        if batch is None:
            return batches
        batches.append(batch)


# -- 1. throughput arithmetic ---------------------------------------------------

def test_throughput_arithmetic():
    with criterion("throughput-arithmetic"):
        assert throughput_images(15000, 5, 0.0, 137.24) == pytest.approx(
            546.48, abs=0.01
        )
        assert throughput_images(15000, 5, 0.0, 2309.99) == pytest.approx(
            32.47, abs=0.01
        )
        total_bytes = int(13800 * 1024 * 1024 / 8)
        assert throughput_mbits(total_bytes, 0.0, 263.08) == pytest.approx(
            52.46, abs=0.05
        )


# -- 2. exactly-once delivery ----------------------------------------------------

def _strategies(batch_size):
    return (
        StrategyConfig(kind="sequential"),
        StrategyConfig(kind="intra_batch", num_fetch_workers=4),
        StrategyConfig(kind="pooled_disassembly", num_fetch_workers=4,
                       batch_pool=2 * batch_size),
    )


def test_exactly_once_delivery():
    with criterion("exactly-once-delivery"):
        for seed in range(10):
            for n in (0, 1, 7, 64, 1000):
                for batch_size in (1, 4, 64):
                    for strategy in _strategies(batch_size):
                        clock = VirtualClock()
                        spec = make_dataset(n, size=64)
                        store = sim_store(
                            spec, clock, distribution="uniform",
                            params=(0.0, 0.01), seed=seed,
                        )
                        plan = make_epoch_plan(n, batch_size, shuffle=True,
                                               seed=seed)
                        loader = Loader(
                            LoaderConfig(num_workers=2, prefetch_factor=2,
                                         strategy=strategy),
                            spec, store, plan, clock=clock,
                        )

                        async def run():
                            batches = await drain(loader)
                            await loader.shutdown()
                            return batches

                        batches = clock.run(run())
                        delivered = [i for b in batches for i in b.indices()]
                        assert sorted(delivered) == list(range(n))
                        by_id = {b.batch_id: b for b in batches}
                        assert len(by_id) == len(plan.plans)
                        for p in plan.plans:
                            assert by_id[p.batch_id].indices() == p.indices


# -- 3. backpressure bound --------------------------------------------------------

def test_backpressure_bound():
    with criterion("backpressure-bound"):
        for workers in (1, 4):
            for prefetch in (1, 2, 4):
                bound = workers * prefetch
                clock = VirtualClock()
                n_batches = bound + 6
                spec = make_dataset(8 * n_batches, size=64)
                store = sim_store(spec, clock, latency=0.01)
                plan = make_epoch_plan(len(spec.items), 8, shuffle=False)
                loader = Loader(
                    LoaderConfig(num_workers=workers, prefetch_factor=prefetch),
                    spec, store, plan, clock=clock,
                )

                async def run():
                    while True:
                        batch = await loader.next_batch()
                        if batch is None:
                            break
                        await clock.sleep(1.0)  # stalled consumer
                    await loader.shutdown()

                clock.run(run())
                assert loader.high_water_ready == bound


# -- 4. within-batch speedup -------------------------------------------------------

def _speedup_config(strategy, clock_kind, items):
    return ExperimentConfig(
        synthetic_items=items,
        item_size_bytes=1000,
        store=StoreSpec(kind="latency_sim",
                        latency_model=LatencyModel(params=(0.05,))),
        loader=LoaderConfig(num_workers=1, prefetch_factor=2, strategy=strategy),
        batch_size=64,
        epochs=1,
        shuffle=False,
        consumer=ConsumerModel(to_device_delay=0.0, train_delay=0.0),
        clock=clock_kind,
    )


def test_within_batch_speedup_virtual_exact():
    with criterion("within-batch-speedup-virtual"):
        seq = run_experiment(
            _speedup_config(StrategyConfig(kind="sequential"), "virtual", 256),
            write_outputs=False,
        )
        conc = run_experiment(
            _speedup_config(
                StrategyConfig(kind="intra_batch", num_fetch_workers=16),
                "virtual", 256,
            ),
            write_outputs=False,
        )
        seq_med = seq.summary.medians["get_batch"]
        conc_med = conc.summary.medians["get_batch"]
        assert seq_med == pytest.approx(64 * 0.05, rel=1e-9)
        assert conc_med == pytest.approx(4 * 0.05, rel=1e-9)
        assert seq_med / conc_med == pytest.approx(16.0, rel=1e-9)


def test_within_batch_speedup_real_clock():
    with criterion("within-batch-speedup-real"):
        seq = run_experiment(
            _speedup_config(StrategyConfig(kind="sequential"), "monotonic", 128),
            write_outputs=False,
        )
        conc = run_experiment(
            _speedup_config(
                StrategyConfig(kind="intra_batch", num_fetch_workers=16),
                "monotonic", 128,
            ),
            write_outputs=False,
        )
        ratio = seq.summary.medians["get_batch"] / conc.summary.medians["get_batch"]
        assert ratio >= 8.0


# -- 5. disassembly parity -----------------------------------------------------------

def test_disassembly_parity():
    with criterion("disassembly-parity"):
        def run(strategy):
            cfg = ExperimentConfig(
                synthetic_items=256,
                item_size_bytes=1000,
                store=StoreSpec(
                    kind="latency_sim",
                    latency_model=LatencyModel(distribution="uniform",
                                               params=(0.05, 0.15), seed=3),
                ),
                loader=LoaderConfig(num_workers=2, prefetch_factor=2,
                                    strategy=strategy),
                batch_size=16,
                epochs=1,
                seed=42,
                consumer=ConsumerModel(to_device_delay=0.0, train_delay=0.0),
                clock="virtual",
            )
            result = run_experiment(cfg, write_outputs=False)
            content = sorted(
                (e.batch_id, idx, digest)
                for e in result.log.events("get_batch")
                for idx, digest in zip(e.indices, e.digests)
            )
            return content, result.summary.throughput_mbit_s

        intra_content, intra_rate = run(
            StrategyConfig(kind="intra_batch", num_fetch_workers=8)
        )
        pooled_content, pooled_rate = run(
            StrategyConfig(kind="pooled_disassembly", num_fetch_workers=8,
                           batch_pool=32)
        )
        assert intra_content == pooled_content
        assert 0.8 <= pooled_rate / intra_rate <= 1.2


# -- 6. lazy initialization -----------------------------------------------------------

def test_lazy_initialization_real_clock():
    with criterion("lazy-initialization"):
        clock = MonotonicClock()
        spec = make_dataset(32, size=64)
        store = sim_store(spec, clock, latency=0.05)
        config = LoaderConfig(num_workers=8, prefetch_factor=2,
                              worker_startup_delay=0.2)
        plan = make_epoch_plan(32, 4, shuffle=False)
        log = EventLog()

        t0 = time.monotonic()
        loader = Loader(config, spec, store, plan, clock=clock, log=log)
        construction = time.monotonic() - t0
        assert construction < 0.05

        async def lazy():
            t_next = clock.now()
            await loader.next_batch()
            await loader.shutdown()
            first_dispatch = min(e.t_start for e in log.events("get_item"))
            return first_dispatch - t_next

        assert clock.run(lazy()) < 0.3

        # Blocking reference: every worker must finish spawning before any
        # fetch is dispatched.
        async def blocking_reference():
            t_start = clock.now()
            for _ in range(config.num_workers):
                await clock.sleep(config.worker_startup_delay)
            ref_log = EventLog()
            ref_loader = Loader(replace(config, worker_startup_delay=0.0),
                                spec, store, plan, clock=clock, log=ref_log)
            await ref_loader.next_batch()
            await ref_loader.shutdown()
            first = min(e.t_start for e in ref_log.events("get_item"))
            return first - t_start

        assert clock.run(blocking_reference()) >= 1.6


# -- 7. cache semantics ----------------------------------------------------------------

def test_cache_hit_semantics():
    with criterion("cache-semantics"):
        n, size = 64, 1000
        cfg = ExperimentConfig(
            synthetic_items=n,
            item_size_bytes=size,
            store=StoreSpec(kind="latency_sim",
                            latency_model=LatencyModel(params=(0.1,))),
            cache=CacheConfig(capacity_bytes=n * size),
            loader=LoaderConfig(num_workers=2, prefetch_factor=2),
            batch_size=8,
            epochs=2,
            consumer=ConsumerModel(to_device_delay=0.0, train_delay=0.0),
            clock="virtual",
        )
        result = run_experiment(cfg, write_outputs=False)
        assert result.summary.cache["hits"] == n
        assert result.summary.cache["misses"] == n

        by_epoch = {0: [], 1: []}
        for e in result.log.events("get_item"):
            by_epoch[e.epoch].append(e.duration)
        epoch1_median = statistics.median(by_epoch[0])
        epoch2_median = statistics.median(by_epoch[1])
        assert epoch2_median <= 0.1 * epoch1_median

        hits = sum(1 for e in result.log.events("cache_hit") if e.epoch == 1)
        assert hits == n  # epoch-2 hit rate 100%

        # Capacity invariant under 64-way concurrency, 10^4 operations.
        clock = VirtualClock()
        spec = make_dataset(128, size=97)
        store = sim_store(spec, clock, distribution="uniform",
                          params=(0.0, 0.005), seed=1)
        cache = ByteCache(CacheConfig(capacity_bytes=13 * 97))
        rng = SplitMix64(5)
        ops_per_task = 157  # 64 x 157 > 10^4

        async def hammer():
            for _ in range(ops_per_task):
                key = spec.items[rng.randbelow(128)].key
                await cached_fetch(cache, store, key)
                assert cache.stats.resident_bytes <= cache.config.capacity_bytes

        async def run_all():
            await asyncio.gather(*[hammer() for _ in range(64)])

        clock.run(run_all())
        assert cache.stats.hits + cache.stats.misses == 64 * ops_per_task


# -- 8. pool-bench plateau ---------------------------------------------------------------

def test_pool_bench_plateau():
    with criterion("pool-bench-plateau"):
        size = 10_000
        bandwidth = 1_000_000.0  # tx = 0.01 s
        latency = 0.29           # saturation at latency/tx + 1 = 30 tasks
        base = ExperimentConfig(
            synthetic_items=500,
            item_size_bytes=size,
            store=StoreSpec(
                kind="latency_sim",
                latency_model=LatencyModel(params=(latency,),
                                           bandwidth_bytes_per_s=bandwidth),
            ),
            loader=LoaderConfig(num_workers=1),
            batch_size=8,
            epochs=1,
            consumer=ConsumerModel(to_device_delay=0.0, train_delay=0.0),
            clock="virtual",
        )
        pool_sizes = [1, 2, 3, 4, 5, 6, 7, 10, 15, 20, 30, 40, 50, 60, 80]
        rows = run_dataset_pool_bench(pool_sizes, groups=1,
                                      draws_per_group=3000, base=base)
        assert len(rows) == len(pool_sizes)

        rates = [r["throughput_mbit_s"] for r in rows]
        cap_mbit = bandwidth / (1024 * 1024) * 8
        cap_point = 30
        for prev, cur, pool in zip(rates, rates[1:], pool_sizes[1:]):
            if pool <= cap_point:
                assert cur >= prev * 0.999  # non-decreasing up to the cap
        for pool, rate in zip(pool_sizes, rates):
            if pool > cap_point:
                assert rate == pytest.approx(cap_mbit, rel=0.05)

        serial = rows[0]
        mean_item_mbit = size / (1024 * 1024) * 8
        ideal = mean_item_mbit / serial["mean_request_s"]
        assert serial["throughput_mbit_s"] == pytest.approx(ideal, rel=0.02)


# -- 9. fade analysis -----------------------------------------------------------------------

def test_fade_analysis_shape():
    with criterion("fade-analysis"):
        rng = random.Random(2)
        log = EventLog()
        n = 5000
        for k in range(n):
            # Quadratic ramp: arrivals concentrate toward the end of the run.
            t = 100.0 * math.sqrt((k + rng.random()) / n)
            log.record("get_item", t, min(t + 0.05, 100.0), bytes=1)
        log.record("get_item", 0.0, 0.0, bytes=1)      # pin t_i
        log.record("get_item", 100.0, 100.0, bytes=1)  # pin t_f
        fade = fade_analysis(log, bins=400)
        total = n + 2
        assert fade.starts_hist.sum() == total
        assert fade.finishes_hist.sum() == total

        decile = 400 // 10
        first_decile = fade.starts_hist[:decile].sum()
        last_decile = fade.starts_hist[-decile:].sum()
        assert first_decile < last_decile


# -- 10. metrics oracles ----------------------------------------------------------------------

def _discretized_idle(intervals, runtime, cell=0.001):
    cells = int(round(runtime / cell))
    busy = np.zeros(cells, dtype=bool)
    for start, end in intervals:
        # Mark cells whose center falls inside [start, end).
        lo = max(0, int(math.ceil(start / cell - 0.5)))
        hi = min(cells, int(math.ceil(end / cell - 0.5)))
        busy[lo:hi] = True
    return 100.0 * (cells - int(busy.sum())) / cells


def test_metrics_oracles():
    with criterion("metrics-oracles"):
        rng = random.Random(99)
        for _ in range(100):
            runtime = 100.0
            log = EventLog()
            log.record("get_item", 0.0, runtime, bytes=1)
            intervals = []
            for _ in range(rng.randint(1, 25)):
                start = rng.uniform(0.0, runtime - 4.0)
                end = start + rng.uniform(0.01, 4.0)
                intervals.append((start, end))
                log.record("train_step", start, end)
            got = idle_fraction(log)
            oracle = _discretized_idle(intervals, runtime)
            assert got == pytest.approx(oracle, abs=0.1)

        spans = [rng.uniform(1e-4, 3.0) for _ in range(1001)]
        log = EventLog()
        for s in spans:
            log.record("get_batch", 0.0, s)
        assert median_span(log, "get_batch") == sorted(spans)[500]
