"""Event log and derived statistics.

Every pipeline layer appends timestamped spans to an :class:`EventLog`;
all reported numbers (runtime, throughput, idle fraction, per-kind medians,
fade histograms) are pure functions of the finished log, so a run can be
re-analyzed offline from its JSONL file.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyLog, NoSuchKind, NonPositiveDuration

SCHEMA_VERSION = 1

EVENT_KINDS = (
    "get_item",
    "get_batch",
    "to_device",
    "train_step",
    "cache_hit",
    "cache_miss",
    "worker_start",
)

#: Consumer-side kinds whose union of spans counts as "busy" time. The
#: complement is the idle fraction, the software analog of a GPU sitting
#: unused while batches load.
DEFAULT_BUSY_KINDS = frozenset({"train_step", "to_device"})


@dataclass(slots=True)
class EventRecord:
    kind: str
    t_start: float
    t_end: float
    epoch: int | None = None
    batch_id: int | None = None
    item_index: int | None = None
    bytes: int | None = None
    digest: str | None = None
    indices: list[int] | None = None
    digests: list[str] | None = None
    worker: int | None = None
    seq: int = 0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_json_dict(self) -> dict:
        out: dict = {"v": SCHEMA_VERSION, "kind": self.kind}
        for name in ("epoch", "batch_id", "item_index"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["t_start"] = self.t_start
        out["t_end"] = self.t_end
        for name in ("bytes", "digest", "indices", "digests", "worker"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "EventRecord":
        return cls(
            kind=data["kind"],
            t_start=data["t_start"],
            t_end=data["t_end"],
            epoch=data.get("epoch"),
            batch_id=data.get("batch_id"),
            item_index=data.get("item_index"),
            bytes=data.get("bytes"),
            digest=data.get("digest"),
            indices=data.get("indices"),
            digests=data.get("digests"),
            worker=data.get("worker"),
        )


class EventLog:
    """Append-only event collection; analysis happens at quiescence.

    Appends may come from any task on the driving event loop. The logical
    order of the finished log is (t_start, insertion sequence).
    """

    def __init__(self) -> None:
        self._events: list[EventRecord] = []

    def record(self, kind: str, t_start: float, t_end: float, **fields) -> EventRecord:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {kind!r}")
        if t_end < t_start:
            raise ValueError(f"event ends before it starts: {t_start} > {t_end}")
        rec = EventRecord(kind=kind, t_start=t_start, t_end=t_end,
                          seq=len(self._events), **fields)
        self._events.append(rec)
        return rec

    def events(self, kind: str | None = None) -> list[EventRecord]:
        evs = self._events if kind is None else [e for e in self._events if e.kind == kind]
        return sorted(evs, key=lambda e: (e.t_start, e.seq))

    def __len__(self) -> int:
        return len(self._events)

    def bounds(self) -> tuple[float, float]:
        """(t_i, t_f): earliest start and latest end over all events."""
        if not self._events:
            raise EmptyLog("event log is empty")
        t_i = min(e.t_start for e in self._events)
        t_f = max(e.t_end for e in self._events)
        return t_i, t_f

    def total_bytes(self, kind: str = "get_item") -> int:
        return sum(e.bytes or 0 for e in self._events if e.kind == kind)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for event in self.events():
                fh.write(json.dumps(event.to_json_dict(), separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "EventLog":
        log = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = EventRecord.from_json_dict(json.loads(line))
                log.record(
                    rec.kind, rec.t_start, rec.t_end,
                    epoch=rec.epoch, batch_id=rec.batch_id, item_index=rec.item_index,
                    bytes=rec.bytes, digest=rec.digest, indices=rec.indices,
                    digests=rec.digests, worker=rec.worker,
                )
        return log


def throughput_images(n_items: int, n_epochs: int, t_i: float, t_f: float) -> float:
    """Items per second over the run: (n_epochs * n_items) / (t_f - t_i)."""
    if t_f <= t_i:
        raise NonPositiveDuration(f"t_f ({t_f}) must exceed t_i ({t_i})")
    return (n_epochs * n_items) / (t_f - t_i)


def throughput_mbits(total_bytes: int, t_i: float, t_f: float) -> float:
    """Mbit/s over the run: (total_bytes / (t_f - t_i) / 1024^2) * 8.

    The divisor is deliberately 1024^2 (not SI 10^6) so the numbers line up
    with the rest of the reporting convention used here.
    """
    if t_f <= t_i:
        raise NonPositiveDuration(f"t_f ({t_f}) must exceed t_i ({t_i})")
    return total_bytes / (t_f - t_i) / (1024 * 1024) * 8


def idle_fraction(log: EventLog, busy_kinds: Iterable[str] = DEFAULT_BUSY_KINDS) -> float:
    """Percent of [t_i, t_f] not covered by any busy-kind interval."""
    t_i, t_f = log.bounds()
    runtime = t_f - t_i
    if runtime <= 0.0:
        return 0.0
    busy_kinds = frozenset(busy_kinds)
    intervals = sorted(
        (e.t_start, e.t_end) for e in log.events() if e.kind in busy_kinds
    )
    covered = 0.0
    cur_start: float | None = None
    cur_end = 0.0
    for start, end in intervals:
        if cur_start is None:
            cur_start, cur_end = start, end
        elif start <= cur_end:
            cur_end = max(cur_end, end)
        else:
            covered += cur_end - cur_start
            cur_start, cur_end = start, end
    if cur_start is not None:
        covered += cur_end - cur_start
    return 100.0 * (runtime - covered) / runtime


def median_span(log: EventLog, kind: str) -> float:
    """Median duration of events of *kind* (mean-of-middle-two for even n)."""
    spans = [e.duration for e in log.events(kind)]
    if not spans:
        raise NoSuchKind(f"no events of kind {kind!r}")
    return statistics.median(spans)


@dataclass
class FadeAnalysis:
    """Start/finish histograms and a (t_start, duration) scatter of get_item
    events; shows the concurrency ramp at experiment boundaries.
    """

    starts_hist: np.ndarray
    finishes_hist: np.ndarray
    scatter: list[tuple[float, float]]
    bin_edges: np.ndarray


def fade_analysis(log: EventLog, bins: int = 400) -> FadeAnalysis:
    events = log.events("get_item")
    if not events:
        raise EmptyLog("no get_item events to analyze")
    t_i, t_f = log.bounds()
    starts = np.array([e.t_start for e in events])
    finishes = np.array([e.t_end for e in events])
    if t_f <= t_i:
        # Degenerate run: everything lands in the first bin.
        starts_hist = np.zeros(bins, dtype=int)
        finishes_hist = np.zeros(bins, dtype=int)
        starts_hist[0] = len(events)
        finishes_hist[0] = len(events)
        edges = np.linspace(t_i, t_i + 1.0, bins + 1)
    else:
        starts_hist, edges = np.histogram(starts, bins=bins, range=(t_i, t_f))
        finishes_hist, _ = np.histogram(finishes, bins=bins, range=(t_i, t_f))
    scatter = [(e.t_start, e.duration) for e in events]
    return FadeAnalysis(starts_hist, finishes_hist, scatter, edges)


@dataclass
class MetricsSummary:
    runtime_s: float
    throughput_img_s: float
    throughput_mbit_s: float
    idle_fraction_pct: float
    busy_util_pct: float
    medians: dict[str, float]
    counts: dict[str, int]
    cache: dict | None = None
    v: int = SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        return {
            "v": self.v,
            "runtime_s": self.runtime_s,
            "throughput_img_s": self.throughput_img_s,
            "throughput_mbit_s": self.throughput_mbit_s,
            "idle_fraction_pct": self.idle_fraction_pct,
            "busy_util_pct": self.busy_util_pct,
            "medians": self.medians,
            "counts": self.counts,
            "cache": self.cache,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def from_json_dict(cls, data: dict) -> "MetricsSummary":
        return cls(
            runtime_s=data["runtime_s"],
            throughput_img_s=data["throughput_img_s"],
            throughput_mbit_s=data["throughput_mbit_s"],
            idle_fraction_pct=data["idle_fraction_pct"],
            busy_util_pct=data["busy_util_pct"],
            medians=dict(data["medians"]),
            counts=dict(data["counts"]),
            cache=data.get("cache"),
            v=data.get("v", SCHEMA_VERSION),
        )

    @classmethod
    def read_json(cls, path: str | Path) -> "MetricsSummary":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def build_summary(log: EventLog, cache_stats: dict | None = None) -> MetricsSummary:
    """Reduce a finished event log to the reported metrics.

    busy_util_pct is simply 100 - idle_fraction: an occupancy analog, not a
    hardware utilization measurement.
    """
    t_i, t_f = log.bounds()
    runtime = t_f - t_i
    item_events = log.events("get_item")
    n_items = len(item_events)
    n_batches = len(log.events("get_batch"))
    total_bytes = log.total_bytes("get_item")
    epochs = sorted({e.epoch for e in item_events if e.epoch is not None})
    n_epochs = len(epochs) if epochs else (1 if n_items else 0)

    if runtime > 0:
        img_s = throughput_images(n_items, 1, t_i, t_f)
        mbit_s = throughput_mbits(total_bytes, t_i, t_f)
    else:
        img_s = 0.0
        mbit_s = 0.0
    idle = idle_fraction(log)

    medians: dict[str, float] = {}
    for kind in EVENT_KINDS:
        try:
            medians[kind] = median_span(log, kind)
        except NoSuchKind:
            continue

    return MetricsSummary(
        runtime_s=runtime,
        throughput_img_s=img_s,
        throughput_mbit_s=mbit_s,
        idle_fraction_pct=idle,
        busy_util_pct=100.0 - idle,
        medians=medians,
        counts={
            "items": n_items,
            "batches": n_batches,
            "bytes": total_bytes,
            "epochs": n_epochs,
        },
        cache=cache_stats,
    )
