"""Batch-fetch strategies.

Three ways to turn a batch plan into a loaded batch:

* sequential: items one after another (the vanilla baseline),
* intra_batch: up to num_fetch_workers item fetches in flight per batch,
* pooled_disassembly: a rolling window of consecutive plans is disassembled
  into one shared item pool; batches are reassembled in plan order and
  emitted in ascending batch_id as their items complete.

All three are scheduling policies over the same async engine: regardless
of completion order, each emitted batch carries its samples in plan order.
"""

from __future__ import annotations

import asyncio
import math
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Sequence

from .clock import Clock, MonotonicClock
from .core import DatasetSpec, RetryPolicy, Sample, get_item
from .errors import BatchFailed, InvalidConfig
from .metrics import EventLog
from .sampler import BatchPlan
from .storage import ByteCache, Store

STRATEGY_KINDS = ("sequential", "intra_batch", "pooled_disassembly")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "intra_batch"
    num_fetch_workers: int = 16
    batch_pool: int = 0

    def validate(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise InvalidConfig(f"strategy kind must be one of {STRATEGY_KINDS}")
        if self.kind != "sequential" and self.num_fetch_workers < 1:
            raise InvalidConfig("num_fetch_workers must be at least 1")
        if self.batch_pool < 0:
            raise InvalidConfig("batch_pool must be non-negative")


@dataclass(frozen=True)
class Batch:
    batch_id: int
    samples: tuple[Sample, ...]
    assembled_at: float
    load_span: tuple[float, float]

    def indices(self) -> tuple[int, ...]:
        return tuple(s.item.index for s in self.samples)

    def digests(self) -> tuple[str, ...]:
        return tuple(s.payload_digest for s in self.samples)

    def total_bytes(self) -> int:
        return sum(s.item.size_bytes for s in self.samples)


class ConcurrencyProbe:
    """Test instrumentation: high-water marks for in-flight item fetches and
    for the number of distinct batches with items in flight.
    """

    def __init__(self) -> None:
        self.in_flight = 0
        self.high_water = 0
        self._active_plans: dict[int, int] = {}
        self.plan_high_water = 0

    def enter(self, batch_id: int) -> None:
        self.in_flight += 1
        self.high_water = max(self.high_water, self.in_flight)
        self._active_plans[batch_id] = self._active_plans.get(batch_id, 0) + 1
        self.plan_high_water = max(self.plan_high_water, len(self._active_plans))

    def exit(self, batch_id: int) -> None:
        self.in_flight -= 1
        remaining = self._active_plans[batch_id] - 1
        if remaining:
            self._active_plans[batch_id] = remaining
        else:
            del self._active_plans[batch_id]


@dataclass
class FetchContext:
    """Shared plumbing threaded through a strategy run."""

    dataset: DatasetSpec
    store: Store
    cache: ByteCache | None = None
    clock: Clock = field(default_factory=MonotonicClock)
    log: EventLog | None = None
    retry: RetryPolicy | None = None
    epoch: int | None = None
    probe: ConcurrencyProbe | None = None

    async def fetch_item(self, plan: BatchPlan, index: int) -> Sample:
        if self.probe is not None:
            self.probe.enter(plan.batch_id)
        try:
            return await get_item(
                self.dataset, self.store, index,
                cache=self.cache, clock=self.clock, log=self.log,
                retry=self.retry, epoch=self.epoch, batch_id=plan.batch_id,
            )
        finally:
            if self.probe is not None:
                self.probe.exit(plan.batch_id)

    def _record_batch(self, plan: BatchPlan, samples: Sequence[Sample],
                      t_start: float, t_end: float) -> Batch:
        batch = Batch(
            batch_id=plan.batch_id,
            samples=tuple(samples),
            assembled_at=t_end,
            load_span=(t_start, t_end),
        )
        if self.log is not None:
            self.log.record(
                "get_batch", t_start, t_end,
                epoch=self.epoch, batch_id=plan.batch_id,
                bytes=batch.total_bytes(),
                indices=list(batch.indices()),
                digests=list(batch.digests()),
            )
        return batch


async def fetch_batch_sequential(plan: BatchPlan, ctx: FetchContext) -> Batch:
    """Fetch the plan's items strictly one after another, in plan order."""
    t_start = ctx.clock.now()
    samples: list[Sample] = []
    for index in plan.indices:
        try:
            samples.append(await ctx.fetch_item(plan, index))
        except Exception as exc:
            raise BatchFailed(plan.batch_id, exc) from exc
    return ctx._record_batch(plan, samples, t_start, ctx.clock.now())


async def fetch_batch_concurrent(
    plan: BatchPlan, ctx: FetchContext, num_fetch_workers: int
) -> Batch:
    """Fetch the plan's items with at most num_fetch_workers in flight.

    Results land in plan order whatever the completion order. The first
    failure cancels the rest (best effort: stragglers may finish and are
    discarded) and aborts the batch.
    """
    if num_fetch_workers < 1:
        raise InvalidConfig("num_fetch_workers must be at least 1")
    t_start = ctx.clock.now()
    gate = asyncio.Semaphore(num_fetch_workers)

    async def bounded(index: int) -> Sample:
        async with gate:
            return await ctx.fetch_item(plan, index)

    tasks = [asyncio.create_task(bounded(i)) for i in plan.indices]
    try:
        samples = await asyncio.gather(*tasks)
    except Exception as exc:
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        raise BatchFailed(plan.batch_id, exc) from exc
    return ctx._record_batch(plan, samples, t_start, ctx.clock.now())


EmitFn = Callable[[Batch | BatchFailed], Awaitable[None]]


async def run_pooled_disassembly(
    plans: Sequence[BatchPlan],
    ctx: FetchContext,
    num_fetch_workers: int,
    batch_pool: int,
    emit: EmitFn,
    acquire_slot: Callable[[], Awaitable[None]] | None = None,
) -> None:
    """Disassemble consecutive plans into one shared fetch pool.

    Up to ceil(batch_pool / batch_size) plans have items in flight at once
    (batch_pool counts items; 0 disables disassembly, reducing to one plan
    at a time, i.e. fetch_batch_concurrent per plan). Each plan's batch is
    reassembled when its items finish and emitted in ascending batch_id.
    A failed batch is emitted as its BatchFailed; other pooled batches
    proceed. *acquire_slot*, when given, is awaited before each plan is
    admitted (the loader's backpressure hook).
    """
    if num_fetch_workers < 1:
        raise InvalidConfig("num_fetch_workers must be at least 1")
    if batch_pool < 0:
        raise InvalidConfig("batch_pool must be non-negative")
    if not plans:
        return

    batch_size = max(len(p.indices) for p in plans)
    if batch_pool > 0 and batch_size > 0:
        window = max(1, math.ceil(batch_pool / batch_size))
    else:
        window = 1

    gate = asyncio.Semaphore(num_fetch_workers)
    window_slots = asyncio.Semaphore(window)
    done: dict[int, Batch | BatchFailed] = {}
    done_cond = asyncio.Condition()

    async def bounded(plan: BatchPlan, index: int) -> Sample:
        async with gate:
            return await ctx.fetch_item(plan, index)

    async def run_plan(pos: int, plan: BatchPlan) -> None:
        t_start = ctx.clock.now()
        item_tasks = [asyncio.create_task(bounded(plan, i)) for i in plan.indices]
        result: Batch | BatchFailed
        try:
            samples = await asyncio.gather(*item_tasks)
            result = ctx._record_batch(plan, samples, t_start, ctx.clock.now())
        except Exception as exc:
            for task in item_tasks:
                task.cancel()
            await asyncio.gather(*item_tasks, return_exceptions=True)
            result = BatchFailed(plan.batch_id, exc)
        finally:
            window_slots.release()
        async with done_cond:
            done[pos] = result
            done_cond.notify_all()

    async def emitter() -> None:
        for pos in range(len(plans)):
            async with done_cond:
                while pos not in done:
                    await done_cond.wait()
                result = done.pop(pos)
            await emit(result)

    plan_tasks: list[asyncio.Task] = []
    emitter_task = asyncio.create_task(emitter())
    try:
        for pos, plan in enumerate(plans):
            if acquire_slot is not None:
                await acquire_slot()
            await window_slots.acquire()
            plan_tasks.append(asyncio.create_task(run_plan(pos, plan)))
        await asyncio.gather(*plan_tasks)
        await emitter_task
    except BaseException:
        for task in plan_tasks:
            task.cancel()
        emitter_task.cancel()
        await asyncio.gather(*plan_tasks, emitter_task, return_exceptions=True)
        raise
