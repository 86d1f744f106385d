"""Dataset model and single-item access.

A dataset is an ordered list of addressable items (key + expected size) on
some byte store. Item access is async: it fetches the payload, optionally
through a bounded cache, applies the synthetic transform-cost model, and
returns a digest-carrying :class:`Sample` with its timing span.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .clock import Clock, MonotonicClock
from .errors import EmptyDataset, FetchFailed, IndexOutOfRange, KeyNotFound
from .metrics import EventLog
from .rng import SplitMix64

if TYPE_CHECKING:
    from .storage import ByteCache, Store

#: Default synthetic item size: 115 KiB, a stand-in for a typical JPEG.
DEFAULT_ITEM_SIZE = 115 * 1024

_DEFAULT_CLOCK = MonotonicClock()


def payload_digest(data: bytes) -> str:
    """64-bit content checksum, rendered as 16 hex chars."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


@dataclass(frozen=True)
class ItemRef:
    index: int
    key: str
    size_bytes: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("item index must be non-negative")
        if self.size_bytes < 0:
            raise ValueError("size_bytes must be non-negative")


@dataclass(frozen=True)
class TransformModel:
    """Synthetic per-item processing cost standing in for decode/augment.

    mode "none" adds nothing; "fixed_busy" adds *cost* seconds per item;
    "per_byte_busy" adds *cost* seconds per payload byte. The cost is
    modeled as clock time (an awaitable delay), so it is exact on the
    virtual clock.
    """

    mode: str = "none"
    cost: float = 0.0

    _MODES = ("none", "fixed_busy", "per_byte_busy")

    def __post_init__(self) -> None:
        if self.mode not in self._MODES:
            raise ValueError(f"transform mode must be one of {self._MODES}")
        if self.cost < 0:
            raise ValueError("transform cost must be non-negative")

    def delay_for(self, size_bytes: int) -> float:
        if self.mode == "none":
            return 0.0
        if self.mode == "fixed_busy":
            return self.cost
        return self.cost * size_bytes


@dataclass(frozen=True)
class Sample:
    item: ItemRef
    payload_digest: str
    fetch_span: tuple[float, float]
    cache_hit: bool = False

    def __post_init__(self) -> None:
        if self.fetch_span[1] < self.fetch_span[0]:
            raise ValueError("fetch span ends before it starts")


@dataclass(frozen=True)
class RetryPolicy:
    """Retries around transient fetch failures; default off so benchmark
    timing stays deterministic. Backoff is exponential: base * 2^attempt.
    """

    max_retries: int = 0
    backoff_base: float = 0.1

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt)


@dataclass
class DatasetSpec:
    items: list[ItemRef]
    limit: int | None = None
    transform_cost: TransformModel = field(default_factory=TransformModel)

    def __post_init__(self) -> None:
        for i, item in enumerate(self.items):
            if item.index != i:
                raise ValueError(
                    f"item indices must be contiguous from 0; got {item.index} at {i}"
                )
        if self.limit is not None and self.limit < 0:
            raise ValueError("limit must be non-negative")

    def __len__(self) -> int:
        return dataset_len(self)

    def total_bytes(self) -> int:
        return sum(it.size_bytes for it in self.items[: dataset_len(self)])

    @classmethod
    def from_manifest(
        cls,
        path: str | Path,
        limit: int | None = None,
        transform_cost: TransformModel | None = None,
    ) -> "DatasetSpec":
        return cls(
            items=load_manifest(path),
            limit=limit,
            transform_cost=transform_cost or TransformModel(),
        )


def dataset_len(spec: DatasetSpec) -> int:
    """Effective item count: min(|items|, limit) when a limit is set."""
    n = len(spec.items)
    if spec.limit is not None:
        n = min(n, spec.limit)
    return n


async def get_item(
    spec: DatasetSpec,
    store: "Store",
    index: int,
    *,
    cache: "ByteCache | None" = None,
    clock: Clock | None = None,
    log: EventLog | None = None,
    retry: RetryPolicy | None = None,
    epoch: int | None = None,
    batch_id: int | None = None,
) -> Sample:
    """Fetch one item by index and return its Sample.

    The fetch goes through *cache* when given; transform-model delay is
    applied after the payload arrives and is included in the fetch span.
    KeyNotFound is treated as permanent; other failures are retried per
    *retry* and surface as FetchFailed once exhausted.
    """
    n = dataset_len(spec)
    if not 0 <= index < n:
        raise IndexOutOfRange(f"index {index} outside [0, {n})")
    item = spec.items[index]
    clock = clock or _DEFAULT_CLOCK
    retry = retry or RetryPolicy()

    t_start = clock.now()
    cache_hit = False
    attempt = 0
    while True:
        try:
            if cache is not None:
                data, cache_hit = await cache.fetch_through(store, item.key)
            else:
                data = await store.fetch(item.key)
            break
        except KeyNotFound as exc:
            raise FetchFailed(item.key, exc) from exc
        except FetchFailed:
            raise
        except Exception as exc:
            if attempt >= retry.max_retries:
                raise FetchFailed(item.key, exc) from exc
            await clock.sleep(retry.delay(attempt))
            attempt += 1

    if len(data) != item.size_bytes:
        raise FetchFailed(
            item.key,
            f"size mismatch: manifest says {item.size_bytes}, store returned {len(data)}",
        )

    if log is not None and cache is not None:
        kind = "cache_hit" if cache_hit else "cache_miss"
        now = clock.now()
        log.record(kind, now, now, epoch=epoch, batch_id=batch_id, item_index=index)

    delay = spec.transform_cost.delay_for(item.size_bytes)
    if delay > 0:
        await clock.sleep(delay)

    t_end = clock.now()
    digest = payload_digest(data)
    if log is not None:
        log.record(
            "get_item", t_start, t_end,
            epoch=epoch, batch_id=batch_id, item_index=index,
            bytes=item.size_bytes, digest=digest,
        )
    return Sample(item=item, payload_digest=digest, fetch_span=(t_start, t_end),
                  cache_hit=cache_hit)


async def get_random_item(
    spec: DatasetSpec,
    store: "Store",
    rng: SplitMix64,
    **kwargs,
) -> Sample:
    """Fetch a uniformly random item; the drawn index replays from the seed."""
    n = dataset_len(spec)
    if n == 0:
        raise EmptyDataset("cannot draw from an empty dataset")
    return await get_item(spec, store, rng.randbelow(n), **kwargs)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def load_manifest(path: str | Path) -> list[ItemRef]:
    """Read a JSON manifest: an array of {"key": str, "size_bytes": int}."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("manifest must be a JSON array")
    return [
        ItemRef(index=i, key=entry["key"], size_bytes=int(entry["size_bytes"]))
        for i, entry in enumerate(raw)
    ]


def write_manifest(items: list[ItemRef], path: str | Path) -> None:
    payload = [{"key": it.key, "size_bytes": it.size_bytes} for it in items]
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def synthetic_manifest(
    n: int,
    *,
    size_dist: str = "fixed",
    size_bytes: int = DEFAULT_ITEM_SIZE,
    size_median: int = DEFAULT_ITEM_SIZE,
    size_sigma: float = 0.5,
    seed: int = 0,
) -> list[ItemRef]:
    """Generate item refs with fixed or lognormal (by median) sizes."""
    if size_dist == "fixed":
        sizes = [size_bytes] * n
    elif size_dist == "lognormal":
        gen = np.random.default_rng(seed)
        draws = gen.lognormal(mean=math.log(size_median), sigma=size_sigma, size=n)
        sizes = [max(1, int(round(s))) for s in draws]
    else:
        raise ValueError(f"unknown size distribution: {size_dist!r}")
    return [
        ItemRef(index=i, key=f"{i:08d}.bin", size_bytes=sizes[i]) for i in range(n)
    ]
