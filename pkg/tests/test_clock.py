import asyncio
import time

import pytest

from fetchpipe import MonotonicClock, VirtualClock


def test_virtual_time_starts_at_zero():
    clock = VirtualClock()
    assert clock.now() == 0.0


def test_virtual_sleep_advances_exactly():
    clock = VirtualClock()

    async def main():
        await clock.sleep(12.5)
        return clock.now()

    assert clock.run(main()) == pytest.approx(12.5, abs=1e-9)


def test_concurrent_sleeps_overlap():
    clock = VirtualClock()

    async def main():
        await asyncio.gather(*[clock.sleep(0.1) for _ in range(50)])
        return clock.now()

    assert clock.run(main()) == pytest.approx(0.1, abs=1e-9)


def test_virtual_run_is_instant_in_wall_time():
    clock = VirtualClock()

    async def main():
        await clock.sleep(3600.0)

    t0 = time.monotonic()
    clock.run(main())
    assert time.monotonic() - t0 < 1.0
    assert clock.now() == pytest.approx(3600.0)


def test_deadlock_raises_instead_of_hanging():
    clock = VirtualClock()

    async def stuck():
        await asyncio.Event().wait()

    with pytest.raises(RuntimeError, match="deadlock"):
        clock.run(stuck())


def test_sequential_tasks_serialize_time():
    clock = VirtualClock()

    async def main():
        gate = asyncio.Semaphore(1)

        async def one():
            async with gate:
                await clock.sleep(0.25)

        await asyncio.gather(*[one() for _ in range(4)])
        return clock.now()

    assert clock.run(main()) == pytest.approx(1.0, abs=1e-9)


def test_monotonic_clock_tracks_wall_time():
    clock = MonotonicClock()

    async def main():
        t0 = clock.now()
        await clock.sleep(0.05)
        return clock.now() - t0

    elapsed = clock.run(main())
    assert elapsed >= 0.05
