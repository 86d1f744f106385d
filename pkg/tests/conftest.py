import pytest

from fetchpipe import (
    DatasetSpec,
    LatencyModel,
    LatencySimStore,
    VirtualClock,
    synthetic_manifest,
)


def make_dataset(n, size=1000, transform=None, limit=None):
    kwargs = {}
    if transform is not None:
        kwargs["transform_cost"] = transform
    return DatasetSpec(items=synthetic_manifest(n, size_bytes=size), limit=limit,
                       **kwargs)


def sim_store(dataset, clock, *, latency=0.1, distribution="fixed", params=None,
              bandwidth=None, seed=0):
    model = LatencyModel(
        distribution=distribution,
        params=tuple(params) if params is not None else (latency,),
        bandwidth_bytes_per_s=bandwidth,
        seed=seed,
    )
    sizes = {it.key: it.size_bytes for it in dataset.items}
    return LatencySimStore(sizes, model, clock=clock)


@pytest.fixture
def vclock():
    return VirtualClock()
