import asyncio
import threading
from collections import OrderedDict
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fetchpipe import (
    ByteCache,
    CacheConfig,
    KeyNotFound,
    LatencyModel,
    LatencySimStore,
    MonotonicClock,
    StoreSpec,
    StoreUnavailable,
    VirtualClock,
    cached_fetch,
    open_store,
    payload_digest,
    synthetic_payload,
)

from conftest import make_dataset, sim_store


# -- open_store ---------------------------------------------------------------

def test_local_dir_store_reads_files(tmp_path):
    for i in range(16):
        (tmp_path / f"f{i}.bin").write_bytes(b"x" * i)
    store = open_store(StoreSpec(kind="local_dir", root_or_endpoint=str(tmp_path)))
    clock = MonotonicClock()

    async def read_all():
        return [await store.fetch(f"f{i}.bin") for i in range(16)]

    payloads = clock.run(read_all())
    assert [len(p) for p in payloads] == list(range(16))


def test_local_dir_missing_key(tmp_path):
    store = open_store(StoreSpec(kind="local_dir", root_or_endpoint=str(tmp_path)))
    with pytest.raises(KeyNotFound):
        MonotonicClock().run(store.fetch("nope.bin"))


def test_local_dir_missing_root(tmp_path):
    with pytest.raises(StoreUnavailable):
        open_store(StoreSpec(kind="local_dir",
                             root_or_endpoint=str(tmp_path / "absent")))


def test_http_unreachable_endpoint():
    with pytest.raises(StoreUnavailable):
        open_store(StoreSpec(kind="http_object",
                             root_or_endpoint="http://127.0.0.1:9"))


@pytest.fixture
def http_root(tmp_path):
    (tmp_path / "obj1").write_bytes(b"hello object store")
    handler = partial(SimpleHTTPRequestHandler, directory=str(tmp_path))
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join()


def test_http_store_round_trip(http_root):
    store = open_store(StoreSpec(kind="http_object", root_or_endpoint=http_root))
    clock = MonotonicClock()

    async def run():
        data = await store.fetch("obj1")
        with pytest.raises(KeyNotFound):
            await store.fetch("missing")
        await store.aclose()
        return data

    assert clock.run(run()) == b"hello object store"


def test_latency_sim_spec_requires_model():
    with pytest.raises(ValueError):
        StoreSpec(kind="latency_sim")
    with pytest.raises(ValueError):
        StoreSpec(kind="local_dir", root_or_endpoint="/",
                  latency_model=LatencyModel())


# -- latency simulation -------------------------------------------------------

def test_fixed_latency_observed(vclock):
    spec = make_dataset(4)
    store = sim_store(spec, vclock, latency=0.05)

    async def one():
        t0 = vclock.now()
        await store.fetch(spec.items[0].key)
        return vclock.now() - t0

    for _ in range(3):
        assert vclock.run(one()) >= 0.05


def test_bandwidth_cap_shapes_duration(vclock):
    spec = make_dataset(1, size=1024 * 1024)
    store = sim_store(spec, vclock, latency=0.0, bandwidth=1024 * 1024)

    async def one():
        t0 = vclock.now()
        await store.fetch(spec.items[0].key)
        return vclock.now() - t0

    assert vclock.run(one()) == pytest.approx(1.0, rel=1e-9)


def test_concurrent_fetches_share_latency_window(vclock):
    spec = make_dataset(2)
    store = sim_store(spec, vclock, latency=0.1)

    async def run():
        t0 = vclock.now()
        await asyncio.gather(store.fetch(spec.items[0].key),
                             store.fetch(spec.items[1].key))
        return vclock.now() - t0

    # Latency is per request, not serialized.
    assert vclock.run(run()) == pytest.approx(0.1, abs=1e-9)


def test_bandwidth_is_shared_fifo(vclock):
    spec = make_dataset(4, size=1000)
    store = sim_store(spec, vclock, latency=0.0, bandwidth=1000)

    async def run():
        t0 = vclock.now()
        await asyncio.gather(*[store.fetch(it.key) for it in spec.items])
        return vclock.now() - t0

    # Four 1s transmissions over one link serialize to 4s even if concurrent.
    assert vclock.run(run()) == pytest.approx(4.0, rel=1e-9)


def test_seeded_latency_replays_per_request_index():
    def spans(seed):
        clock = VirtualClock()
        spec = make_dataset(10)
        store = sim_store(spec, clock, distribution="uniform",
                          params=(0.01, 0.2), seed=seed)

        async def run():
            out = []
            for it in spec.items:
                t0 = clock.now()
                await store.fetch(it.key)
                out.append(clock.now() - t0)
            return out

        return clock.run(run())

    assert spans(5) == spans(5)
    assert spans(5) != spans(6)


def test_uniform_latency_within_bounds(vclock):
    model = LatencyModel(distribution="uniform", params=(0.01, 0.43), seed=9)
    values = [model.sample(i) for i in range(500)]
    assert all(0.01 <= v <= 0.43 for v in values)


def test_lognormal_latency_nonnegative():
    model = LatencyModel(distribution="lognormal", params=(0.1, 0.7), seed=2)
    values = [model.sample(i) for i in range(500)]
    assert all(v >= 0 for v in values)
    assert min(values) < 0.1 < max(values)


def test_synthetic_payload_deterministic():
    assert synthetic_payload("k", 100) == synthetic_payload("k", 100)
    assert synthetic_payload("k", 100) != synthetic_payload("j", 100)
    assert len(synthetic_payload("k", 12345)) == 12345


def test_sim_missing_key(vclock):
    store = sim_store(make_dataset(1), vclock, latency=0.0)
    with pytest.raises(KeyNotFound):
        vclock.run(store.fetch("absent"))


# -- cache --------------------------------------------------------------------

def _sized_store(vclock, n=8, size=100):
    spec = make_dataset(n, size=size)
    return spec, sim_store(spec, vclock, latency=0.0)


def test_everything_fits_second_pass_all_hits(vclock):
    spec, store = _sized_store(vclock)
    cache = ByteCache(CacheConfig(capacity_bytes=8 * 100))

    async def run():
        for _ in range(2):
            for it in spec.items:
                await cached_fetch(cache, store, it.key)

    vclock.run(run())
    assert cache.stats.misses == 8
    assert cache.stats.hits == 8
    assert cache.stats.evictions == 0


def test_zero_capacity_never_hits(vclock):
    spec, store = _sized_store(vclock)
    cache = ByteCache(CacheConfig(capacity_bytes=0))

    async def run():
        for _ in range(3):
            for it in spec.items:
                await cached_fetch(cache, store, it.key)

    vclock.run(run())
    assert cache.stats.hits == 0
    assert cache.stats.resident_bytes == 0


def test_lru_thrashes_on_cyclic_access(vclock):
    spec, store = _sized_store(vclock, n=8, size=100)
    cache = ByteCache(CacheConfig(capacity_bytes=400))  # half the dataset

    async def run():
        for _ in range(2):
            for it in spec.items:
                await cached_fetch(cache, store, it.key)

    vclock.run(run())
    assert cache.stats.hits == 0
    assert cache.stats.misses == 16


def test_cached_bytes_identical_to_direct(vclock):
    spec, store = _sized_store(vclock)
    cache = ByteCache(CacheConfig(capacity_bytes=800))

    async def run():
        for it in spec.items:
            direct = await store.fetch(it.key)
            via_cache, _ = await cached_fetch(cache, store, it.key)
            assert payload_digest(direct) == payload_digest(via_cache)
            again, hit = await cached_fetch(cache, store, it.key)
            assert hit and again == direct

    vclock.run(run())


class _OracleLRU:
    """Reference byte-LRU used to cross-check the engine's cache."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.entries = OrderedDict()
        self.hits = self.misses = self.evictions = 0

    def access(self, key, size):
        if key in self.entries:
            self.entries.move_to_end(key)
            self.hits += 1
            return
        self.misses += 1
        if size > self.capacity:
            return
        while sum(self.entries.values()) + size > self.capacity:
            self.entries.popitem(last=False)
            self.evictions += 1
        self.entries[key] = size


@settings(deadline=None, max_examples=50)
@given(
    capacity=st.integers(min_value=0, max_value=1000),
    trace=st.lists(st.integers(min_value=0, max_value=9), max_size=60),
)
def test_cache_matches_reference_lru(capacity, trace):
    clock = VirtualClock()
    spec = make_dataset(10, size=150)
    store = sim_store(spec, clock, latency=0.0)
    cache = ByteCache(CacheConfig(capacity_bytes=capacity))
    oracle = _OracleLRU(capacity)

    async def run():
        for idx in trace:
            await cached_fetch(cache, store, spec.items[idx].key)
            oracle.access(spec.items[idx].key, 150)
            assert cache.stats.resident_bytes <= capacity

    clock.run(run())
    assert cache.stats.hits == oracle.hits
    assert cache.stats.misses == oracle.misses
    assert cache.stats.evictions == oracle.evictions
    assert cache.stats.resident_bytes == sum(oracle.entries.values())


def test_capacity_bound_under_concurrent_access(vclock):
    spec = make_dataset(64, size=97)
    store = sim_store(spec, vclock, distribution="uniform", params=(0.0, 0.01))
    cache = ByteCache(CacheConfig(capacity_bytes=10 * 97))
    from fetchpipe import SplitMix64

    rng = SplitMix64(3)

    async def worker():
        for _ in range(40):
            key = spec.items[rng.randbelow(64)].key
            await cached_fetch(cache, store, key)
            assert cache.stats.resident_bytes <= cache.config.capacity_bytes

    async def run():
        await asyncio.gather(*[worker() for _ in range(64)])

    vclock.run(run())
    total = cache.stats.hits + cache.stats.misses
    assert total == 64 * 40
