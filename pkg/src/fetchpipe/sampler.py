"""Epoch planning: shuffle the index space and cut it into batch plans.

Pure functions of (n, batch_size, shuffle, drop_last, seed, epoch); the
shuffle is an explicit Fisher-Yates over a fully specified PRNG so plans
reproduce anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class BatchPlan:
    batch_id: int
    indices: tuple[int, ...]


@dataclass(frozen=True)
class EpochPlan:
    epoch: int
    plans: tuple[BatchPlan, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.plans)

    def all_indices(self) -> list[int]:
        return [i for plan in self.plans for i in plan.indices]


def make_epoch_plan(
    n: int,
    batch_size: int,
    *,
    shuffle: bool = True,
    drop_last: bool = False,
    seed: int = 0,
    epoch: int = 0,
) -> EpochPlan:
    """Partition (a permutation of) 0..n-1 into consecutive batch plans.

    Each (seed, epoch) pair reseeds the shuffle, so epochs differ but any
    run replays identically.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")

    order = list(range(n))
    if shuffle:
        SplitMix64(derive_seed("epoch-plan", seed, epoch)).shuffle(order)

    plans: list[BatchPlan] = []
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        if drop_last and len(chunk) < batch_size:
            break
        plans.append(BatchPlan(batch_id=len(plans), indices=tuple(chunk)))
    return EpochPlan(epoch=epoch, plans=tuple(plans), seed=seed)
