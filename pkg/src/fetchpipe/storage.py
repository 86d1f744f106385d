"""Byte stores and the bounded in-process cache.

Three backends share one async fetch contract: a local directory, a plain
HTTP object store (GET {endpoint}/{key}), and an in-memory latency
simulator whose per-request delays replay bit-identically from a seed.
All backends accept unbounded concurrent fetches.
"""

from __future__ import annotations

import asyncio
import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .clock import Clock, MonotonicClock
from .errors import ConfigError, FetchFailed, KeyNotFound, StoreUnavailable
from .rng import SplitMix64, derive_seed

STORE_KINDS = ("local_dir", "http_object", "latency_sim")


@dataclass(frozen=True)
class LatencyModel:
    """Per-request latency distribution plus an optional shared bandwidth cap.

    distribution: "fixed" (params: [seconds]), "uniform" (params: [lo, hi]),
    or "lognormal" (params: [median_seconds, sigma]). Sampled values are
    clamped at zero. The latency of request i is a pure function of
    (seed, i), so a run replays exactly regardless of wall time.

    bandwidth_bytes_per_s models one shared link: payloads occupy the link
    for size/bandwidth seconds, first come first served. Latency is
    per-request and independent; only transmission serializes.
    """

    distribution: str = "fixed"
    params: tuple[float, ...] = (0.1,)
    bandwidth_bytes_per_s: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        expected = {"fixed": 1, "uniform": 2, "lognormal": 2}
        if self.distribution not in expected:
            raise ValueError(f"unknown latency distribution: {self.distribution!r}")
        if len(self.params) != expected[self.distribution]:
            raise ValueError(
                f"{self.distribution} latency needs {expected[self.distribution]} params"
            )
        if self.bandwidth_bytes_per_s is not None and self.bandwidth_bytes_per_s <= 0:
            raise ValueError("bandwidth cap must be positive")

    def sample(self, request_index: int) -> float:
        rng = SplitMix64(derive_seed("latency", self.seed, request_index))
        if self.distribution == "fixed":
            value = self.params[0]
        elif self.distribution == "uniform":
            value = rng.uniform(self.params[0], self.params[1])
        else:
            median, sigma = self.params
            # Box-Muller on two uniforms in (0, 1].
            u1 = (rng.next_u64() + 1) / 2**64
            u2 = (rng.next_u64() + 1) / 2**64
            z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
            value = math.exp(math.log(median) + sigma * z)
        return max(0.0, value)


@dataclass(frozen=True)
class StoreSpec:
    kind: str
    root_or_endpoint: str = ""
    latency_model: LatencyModel | None = None
    auth: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in STORE_KINDS:
            raise ValueError(f"store kind must be one of {STORE_KINDS}")
        if (self.latency_model is not None) != (self.kind == "latency_sim"):
            raise ValueError("latency_model is required for latency_sim and only there")


class Store:
    """Async byte store. Implementations must tolerate unbounded concurrency."""

    async def fetch(self, key: str) -> bytes:
        raise NotImplementedError

    async def aclose(self) -> None:
        pass


async def fetch(store: Store, key: str) -> bytes:
    return await store.fetch(key)


def synthetic_payload(key: str, size: int) -> bytes:
    """Deterministic filler bytes for simulated objects: unique per key,
    cheap to regenerate, so multi-GB sweeps never hold a dataset in memory.
    """
    pattern = hashlib.blake2b(key.encode(), digest_size=32).digest()
    reps = size // len(pattern) + 1
    return (pattern * reps)[:size]


class LocalDirStore(Store):
    """Files under a root directory; key = relative path."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    async def fetch(self, key: str) -> bytes:
        path = self.root / key
        try:
            return await asyncio.to_thread(path.read_bytes)
        except FileNotFoundError:
            raise KeyNotFound(key) from None
        except OSError as exc:
            raise FetchFailed(key, exc) from exc


class HttpObjectStore(Store):
    """Plain GET {endpoint}/{key}. 404 maps to KeyNotFound; transport and
    non-200 responses map to FetchFailed. *auth*, when set, is sent verbatim
    as the Authorization header.
    """

    def __init__(self, endpoint: str, auth: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.auth = auth
        self.timeout = timeout
        self._client = None

    def _ensure_client(self):
        # Created lazily so it binds to the running event loop.
        if self._client is None:
            import httpx

            headers = {"Authorization": self.auth} if self.auth else None
            self._client = httpx.AsyncClient(timeout=self.timeout, headers=headers)
        return self._client

    async def fetch(self, key: str) -> bytes:
        import httpx

        client = self._ensure_client()
        url = f"{self.endpoint}/{key}"
        try:
            resp = await client.get(url)
        except httpx.HTTPError as exc:
            raise FetchFailed(key, exc) from exc
        if resp.status_code == 404:
            raise KeyNotFound(key)
        if resp.status_code != 200:
            raise FetchFailed(key, f"HTTP {resp.status_code}")
        return resp.content

    async def aclose(self) -> None:
        if self._client is not None:
            await self._client.aclose()
            self._client = None


class _SharedLink:
    """FIFO transmission queue modelling one saturable link."""

    def __init__(self, rate_bytes_per_s: float, clock: Clock):
        self._rate = rate_bytes_per_s
        self._clock = clock
        self._busy_until = 0.0

    async def transmit(self, nbytes: int) -> None:
        # Reservation is atomic (no awaits between read and update), so
        # concurrent callers queue in arrival order.
        start = max(self._clock.now(), self._busy_until)
        self._busy_until = start + nbytes / self._rate
        wait = self._busy_until - self._clock.now()
        if wait > 0:
            await self._clock.sleep(wait)


class LatencySimStore(Store):
    """In-memory store that injects sampled latency per request.

    Payload bytes are synthesized deterministically from the key; request i
    observes latency sample(i). Latency is concurrent (two overlapping
    fetches both finish one latency after they start); only the optional
    bandwidth cap serializes.
    """

    def __init__(self, sizes: Mapping[str, int], model: LatencyModel,
                 clock: Clock | None = None):
        self._sizes = dict(sizes)
        self.model = model
        self._clock = clock or MonotonicClock()
        self._request_counter = 0
        self._link = (
            _SharedLink(model.bandwidth_bytes_per_s, self._clock)
            if model.bandwidth_bytes_per_s
            else None
        )

    @property
    def request_count(self) -> int:
        return self._request_counter

    async def fetch(self, key: str) -> bytes:
        size = self._sizes.get(key)
        if size is None:
            raise KeyNotFound(key)
        index = self._request_counter
        self._request_counter += 1
        latency = self.model.sample(index)
        if latency > 0:
            await self._clock.sleep(latency)
        if self._link is not None:
            await self._link.transmit(size)
        return synthetic_payload(key, size)


def open_store(
    spec: StoreSpec,
    *,
    sizes: Mapping[str, int] | None = None,
    clock: Clock | None = None,
) -> Store:
    """Open a store handle, failing fast when the backend is unreachable.

    latency_sim needs *sizes* (key -> byte length), normally derived from
    the dataset manifest.
    """
    if spec.kind == "local_dir":
        root = Path(spec.root_or_endpoint)
        if not root.is_dir():
            raise StoreUnavailable(f"no such directory: {root}")
        return LocalDirStore(root)
    if spec.kind == "http_object":
        _probe_http(spec.root_or_endpoint)
        return HttpObjectStore(spec.root_or_endpoint, auth=spec.auth)
    if sizes is None:
        raise ConfigError("latency_sim store needs a manifest to size its objects")
    assert spec.latency_model is not None
    return LatencySimStore(sizes, spec.latency_model, clock=clock)


def _probe_http(endpoint: str, timeout: float = 5.0) -> None:
    import httpx

    try:
        # Any HTTP response at all means the endpoint is alive.
        httpx.get(endpoint, timeout=timeout)
    except httpx.HTTPError as exc:
        raise StoreUnavailable(f"cannot reach {endpoint}: {exc}") from exc


# ---------------------------------------------------------------------------
# Bounded cache
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CacheConfig:
    #: Default mirrors a small web-cache deployment: 2 GiB.
    capacity_bytes: int = 2 * 1024**3
    policy: str = "lru"

    def __post_init__(self) -> None:
        if self.capacity_bytes < 0:
            raise ValueError("capacity must be non-negative")
        if self.policy != "lru":
            raise ValueError("only the lru policy is supported")


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    resident_bytes: int = 0

    def snapshot(self) -> dict:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "resident_bytes": self.resident_bytes,
        }


class ByteCache:
    """Strict-LRU cache bounded by total payload bytes.

    Mutations happen between awaits of a single event loop, so concurrent
    callers never observe a torn insert or evict; the capacity invariant
    holds after every operation. Entries larger than the capacity are never
    admitted (a zero-capacity cache caches nothing).
    """

    def __init__(self, config: CacheConfig):
        self.config = config
        self.stats = CacheStats()
        self._entries: OrderedDict[str, bytes] = OrderedDict()

    @property
    def resident_bytes(self) -> int:
        return self.stats.resident_bytes

    async def fetch_through(self, store: Store, key: str) -> tuple[bytes, bool]:
        cached = self._entries.get(key)
        if cached is not None:
            self._entries.move_to_end(key)
            self.stats.hits += 1
            return cached, True
        self.stats.misses += 1
        data = await store.fetch(key)
        self._insert(key, data)
        return data, False

    def _insert(self, key: str, data: bytes) -> None:
        size = len(data)
        if size > self.config.capacity_bytes:
            return
        old = self._entries.pop(key, None)
        if old is not None:
            # Concurrent misses on one key can race to insert; keep the newest.
            self.stats.resident_bytes -= len(old)
        while self.stats.resident_bytes + size > self.config.capacity_bytes:
            _, evicted = self._entries.popitem(last=False)
            self.stats.resident_bytes -= len(evicted)
            self.stats.evictions += 1
        self._entries[key] = data
        self.stats.resident_bytes += size


async def cached_fetch(cache: ByteCache, store: Store, key: str) -> tuple[bytes, bool]:
    """Fetch through the cache; returns (payload, was_hit)."""
    return await cache.fetch_through(store, key)
