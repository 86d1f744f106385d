"""Injectable clocks: real monotonic time or deterministic virtual time.

Every timed operation in the pipeline (latency injection, transform cost,
consumer delays, event timestamps) goes through a :class:`Clock`, so the
whole engine can run either against wall time or on a virtual timeline
where sleeps are free and scheduling is fully deterministic.
"""

from __future__ import annotations

import asyncio
import selectors
import time
from typing import Any, Awaitable, Coroutine, Protocol, TypeVar

T = TypeVar("T")


class Clock(Protocol):
    """Monotonic time source plus an async sleep bound to it."""

    def now(self) -> float: ...

    async def sleep(self, delay: float) -> None: ...

    def run(self, coro: Coroutine[Any, Any, T]) -> T:
        """Drive *coro* to completion on an event loop owned by this clock."""
        ...


class MonotonicClock:
    """Wall-clock implementation backed by ``time.monotonic`` and asyncio."""

    def now(self) -> float:
        return time.monotonic()

    async def sleep(self, delay: float) -> None:
        await asyncio.sleep(delay)

    def run(self, coro: Coroutine[Any, Any, T]) -> T:
        return asyncio.run(coro)


class _VirtualSelector:
    """Selector that never blocks: waiting time is converted into clock jumps.

    The event loop asks the selector to wait ``timeout`` seconds for I/O.
    Under virtual time there is no real I/O, so instead of sleeping we
    advance the clock by exactly that amount and report no events, which
    makes the loop fire the due timers immediately.
    """

    def __init__(self, inner: selectors.BaseSelector, clock: "VirtualClock"):
        self._inner = inner
        self._clock = clock

    def register(self, *args, **kwargs):
        return self._inner.register(*args, **kwargs)

    def unregister(self, *args, **kwargs):
        return self._inner.unregister(*args, **kwargs)

    def modify(self, *args, **kwargs):
        return self._inner.modify(*args, **kwargs)

    def close(self) -> None:
        self._inner.close()

    def get_map(self):
        return self._inner.get_map()

    def get_key(self, fileobj):
        return self._inner.get_key(fileobj)

    def select(self, timeout: float | None = None):
        if timeout is None:
            # No ready callbacks and no timers: nothing can ever wake us.
            raise RuntimeError(
                "virtual clock deadlock: event loop is idle with no scheduled timers"
            )
        if timeout > 0:
            self._clock._now += timeout
        return []


class _VirtualTimeLoop(asyncio.SelectorEventLoop):
    def __init__(self, clock: "VirtualClock"):
        super().__init__(_VirtualSelector(selectors.DefaultSelector(), clock))
        self._virtual_clock = clock

    def time(self) -> float:
        return self._virtual_clock._now


class VirtualClock:
    """Deterministic clock: time advances only when every task is waiting.

    Runs coroutines on a private event loop whose notion of time is this
    clock; ``asyncio.sleep`` and timeouts jump instantly to the next due
    timer. A run that would block forever raises instead of hanging.

    Only for in-memory workloads (e.g. the latency-sim store). Real file or
    socket I/O would never be reported ready by the virtual selector.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    async def sleep(self, delay: float) -> None:
        await asyncio.sleep(delay)

    def run(self, coro: Coroutine[Any, Any, T]) -> T:
        loop = _VirtualTimeLoop(self)
        try:
            return loop.run_until_complete(coro)
        finally:
            try:
                _cancel_pending(loop)
            finally:
                loop.close()


def _cancel_pending(loop: asyncio.AbstractEventLoop) -> None:
    pending = [t for t in asyncio.all_tasks(loop) if not t.done()]
    for task in pending:
        task.cancel()
    if pending:
        loop.run_until_complete(asyncio.gather(*pending, return_exceptions=True))
