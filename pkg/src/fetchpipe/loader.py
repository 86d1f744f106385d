"""The batch loader: a worker pool driving fetch strategies behind a
bounded ready-buffer.

Construction is lazy and cheap: nothing runs until the first next_batch
call, which starts workers incrementally so the first worker begins
fetching while later ones are still being created. Plans are assigned
round-robin by batch_id. A global slot semaphore of size
num_workers * prefetch_factor bounds dispatched-but-unconsumed batches,
which is exactly the backpressure rule: a new batch may start loading only
once the consumer has taken an earlier one.
"""

from __future__ import annotations

import asyncio
from collections import deque
from dataclasses import dataclass, field

from .clock import Clock, MonotonicClock
from .core import DatasetSpec, RetryPolicy
from .errors import BatchFailed, InvalidConfig
from .metrics import EventLog
from .sampler import BatchPlan, EpochPlan
from .storage import ByteCache, Store
from .strategy import (
    Batch,
    ConcurrencyProbe,
    FetchContext,
    StrategyConfig,
    fetch_batch_concurrent,
    fetch_batch_sequential,
    run_pooled_disassembly,
)

PHASES = ("constructed", "running", "draining", "shutdown")


@dataclass(frozen=True)
class LoaderConfig:
    num_workers: int = 4
    prefetch_factor: int = 4
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    worker_startup_delay: float = 0.0
    in_order: bool = True

    def validate(self) -> None:
        if self.num_workers < 1:
            raise InvalidConfig("num_workers must be at least 1")
        if self.prefetch_factor < 1:
            raise InvalidConfig("prefetch_factor must be at least 1")
        if self.worker_startup_delay < 0:
            raise InvalidConfig("worker_startup_delay must be non-negative")
        self.strategy.validate()

    @property
    def max_ready(self) -> int:
        return self.num_workers * self.prefetch_factor


@dataclass(frozen=True)
class LoaderState:
    phase: str
    dispatched_batches: int
    delivered_batches: int
    resident_ready: int


class Loader:
    """Single-consumer batch loader over one epoch plan.

    The constructor starts nothing; the first next_batch call spawns the
    workers. next_batch returns batches (ascending batch_id when in_order)
    and None once the epoch is exhausted; a failed batch raises BatchFailed
    in its position and the loader stays usable for the rest.
    """

    def __init__(
        self,
        config: LoaderConfig,
        dataset: DatasetSpec,
        store: Store,
        plan: EpochPlan,
        *,
        cache: ByteCache | None = None,
        clock: Clock | None = None,
        log: EventLog | None = None,
        retry: RetryPolicy | None = None,
        probe: ConcurrencyProbe | None = None,
    ):
        config.validate()
        self.config = config
        self.plan = plan
        self._clock = clock or MonotonicClock()
        self._ctx = FetchContext(
            dataset=dataset, store=store, cache=cache, clock=self._clock,
            log=log, retry=retry, epoch=plan.epoch, probe=probe,
        )
        self._log = log

        self._phase = "constructed"
        self._total = len(plan.plans)
        self._dispatched = 0
        self._delivered = 0
        self._next_bid = 0
        self._buffer: dict[int, Batch | BatchFailed] = {}
        self._completion_order: deque[int] = deque()
        self.high_water_ready = 0

        self._slots = asyncio.Semaphore(config.max_ready)
        self._cond = asyncio.Condition()
        self._starter_task: asyncio.Task | None = None
        self._worker_tasks: list[asyncio.Task] = []
        self._fatal: BaseException | None = None

    # -- public API ---------------------------------------------------------

    @property
    def state(self) -> LoaderState:
        return LoaderState(
            phase=self._phase,
            dispatched_batches=self._dispatched,
            delivered_batches=self._delivered,
            resident_ready=len(self._buffer),
        )

    def __aiter__(self):
        return self

    async def __anext__(self) -> Batch:
        batch = await self.next_batch()
        if batch is None:
            raise StopAsyncIteration
        return batch

    async def next_batch(self) -> Batch | None:
        if self._phase == "shutdown":
            raise RuntimeError("loader is shut down")
        if self._phase == "constructed":
            self._phase = "running"
            self._starter_task = asyncio.create_task(self._start_workers())

        async with self._cond:
            while True:
                if self._fatal is not None:
                    raise self._fatal
                if self._delivered >= self._total:
                    self._phase = "draining"
                    return None
                item = self._pop_deliverable()
                if item is not None:
                    break
                await self._cond.wait()

        self._slots.release()
        self._delivered += 1
        if isinstance(item, BatchFailed):
            raise item
        return item

    async def shutdown(self) -> LoaderState:
        """Cancel outstanding work and join the workers; idempotent."""
        if self._phase != "shutdown":
            tasks = list(self._worker_tasks)
            if self._starter_task is not None:
                tasks.append(self._starter_task)
            for task in tasks:
                task.cancel()
            if tasks:
                await asyncio.gather(*tasks, return_exceptions=True)
            self._phase = "shutdown"
        return self.state

    # -- internals ----------------------------------------------------------

    def _pop_deliverable(self) -> Batch | BatchFailed | None:
        if self.config.in_order:
            item = self._buffer.pop(self._next_bid, None)
            if item is not None:
                self._next_bid += 1
            return item
        if self._completion_order:
            return self._buffer.pop(self._completion_order.popleft())
        return None

    async def _start_workers(self) -> None:
        # Worker creation is modeled as sequential and expensive (the
        # startup delay), but each worker starts fetching the moment it
        # exists instead of waiting for the full pool.
        delay = self.config.worker_startup_delay
        for wid in range(self.config.num_workers):
            if delay > 0:
                await self._clock.sleep(delay)
            now = self._clock.now()
            if self._log is not None:
                self._log.record("worker_start", now, now,
                                 epoch=self.plan.epoch, worker=wid)
            plans = list(self.plan.plans[wid :: self.config.num_workers])
            self._worker_tasks.append(
                asyncio.create_task(self._worker(wid, plans))
            )

    async def _acquire_slot(self) -> None:
        await self._slots.acquire()
        self._dispatched += 1

    async def _deliver(self, item: Batch | BatchFailed) -> None:
        bid = item.batch_id
        async with self._cond:
            self._buffer[bid] = item
            if not self.config.in_order:
                self._completion_order.append(bid)
            self.high_water_ready = max(self.high_water_ready, len(self._buffer))
            self._cond.notify_all()

    async def _worker(self, wid: int, plans: list[BatchPlan]) -> None:
        cfg = self.config.strategy
        try:
            if cfg.kind == "pooled_disassembly":
                await run_pooled_disassembly(
                    plans, self._ctx, cfg.num_fetch_workers, cfg.batch_pool,
                    emit=self._deliver, acquire_slot=self._acquire_slot,
                )
                return
            for plan in plans:
                await self._acquire_slot()
                try:
                    if cfg.kind == "sequential":
                        batch = await fetch_batch_sequential(plan, self._ctx)
                    else:
                        batch = await fetch_batch_concurrent(
                            plan, self._ctx, cfg.num_fetch_workers
                        )
                except BatchFailed as failure:
                    await self._deliver(failure)
                else:
                    await self._deliver(batch)
        except asyncio.CancelledError:
            raise
        except BaseException as exc:  # defensive: never strand the consumer
            async with self._cond:
                self._fatal = exc
                self._cond.notify_all()
