"""Config-file (JSON) serialization of ExperimentConfig.

The file mirrors the config dataclasses section by section; CLI flags
override individual values via dotted paths into the same dict.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .core import TransformModel
from .errors import ConfigError
from .harness import ConsumerModel, ExperimentConfig
from .loader import LoaderConfig
from .storage import CacheConfig, LatencyModel, StoreSpec
from .strategy import StrategyConfig


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    store: dict[str, Any] = {
        "kind": cfg.store.kind,
        "root_or_endpoint": cfg.store.root_or_endpoint,
        "auth": cfg.store.auth,
    }
    if cfg.store.latency_model is not None:
        lm = cfg.store.latency_model
        store["latency"] = {
            "distribution": lm.distribution,
            "params": list(lm.params),
            "bandwidth_bytes_per_s": lm.bandwidth_bytes_per_s,
            "seed": lm.seed,
        }
    return {
        "manifest": cfg.manifest,
        "synthetic_items": cfg.synthetic_items,
        "size_dist": cfg.size_dist,
        "item_size_bytes": cfg.item_size_bytes,
        "size_median": cfg.size_median,
        "size_sigma": cfg.size_sigma,
        "transform": {"mode": cfg.transform.mode, "cost": cfg.transform.cost},
        "store": store,
        "cache": (
            {"capacity_bytes": cfg.cache.capacity_bytes} if cfg.cache else None
        ),
        "loader": {
            "num_workers": cfg.loader.num_workers,
            "prefetch_factor": cfg.loader.prefetch_factor,
            "worker_startup_delay": cfg.loader.worker_startup_delay,
            "in_order": cfg.loader.in_order,
            "strategy": {
                "kind": cfg.loader.strategy.kind,
                "num_fetch_workers": cfg.loader.strategy.num_fetch_workers,
                "batch_pool": cfg.loader.strategy.batch_pool,
            },
        },
        "batch_size": cfg.batch_size,
        "dataset_limit": cfg.dataset_limit,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "shuffle": cfg.shuffle,
        "drop_last": cfg.drop_last,
        "consumer": {
            "to_device_delay": cfg.consumer.to_device_delay,
            "train_delay": cfg.consumer.train_delay,
        },
        "clock": cfg.clock,
        "output_dir": cfg.output_dir,
        "run_id": cfg.run_id,
    }


def experiment_config_from_dict(data: dict) -> ExperimentConfig:
    try:
        return _parse(data)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _parse(data: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()

    store_data = data.get("store")
    if store_data is None:
        store = defaults.store
    else:
        latency = None
        if store_data.get("latency") is not None:
            ld = store_data["latency"]
            latency = LatencyModel(
                distribution=ld.get("distribution", "fixed"),
                params=tuple(ld.get("params", (0.1,))),
                bandwidth_bytes_per_s=ld.get("bandwidth_bytes_per_s"),
                seed=int(ld.get("seed", 0)),
            )
        kind = store_data.get("kind", "latency_sim")
        if kind == "latency_sim" and latency is None:
            latency = LatencyModel()
        store = StoreSpec(
            kind=kind,
            root_or_endpoint=store_data.get("root_or_endpoint", ""),
            latency_model=latency,
            auth=store_data.get("auth"),
        )

    cache_data = data.get("cache")
    cache = (
        CacheConfig(capacity_bytes=int(cache_data["capacity_bytes"]))
        if cache_data is not None
        else None
    )

    loader_data = data.get("loader", {})
    strat_data = loader_data.get("strategy", {})
    loader = LoaderConfig(
        num_workers=int(loader_data.get("num_workers", 4)),
        prefetch_factor=int(loader_data.get("prefetch_factor", 4)),
        worker_startup_delay=float(loader_data.get("worker_startup_delay", 0.0)),
        in_order=bool(loader_data.get("in_order", True)),
        strategy=StrategyConfig(
            kind=strat_data.get("kind", "intra_batch"),
            num_fetch_workers=int(strat_data.get("num_fetch_workers", 16)),
            batch_pool=int(strat_data.get("batch_pool", 0)),
        ),
    )

    transform_data = data.get("transform", {})
    consumer_data = data.get("consumer", {})
    limit = data.get("dataset_limit")
    return ExperimentConfig(
        manifest=data.get("manifest"),
        synthetic_items=int(data.get("synthetic_items", defaults.synthetic_items)),
        size_dist=data.get("size_dist", "fixed"),
        item_size_bytes=int(data.get("item_size_bytes", defaults.item_size_bytes)),
        size_median=int(data.get("size_median", defaults.size_median)),
        size_sigma=float(data.get("size_sigma", defaults.size_sigma)),
        transform=TransformModel(
            mode=transform_data.get("mode", "none"),
            cost=float(transform_data.get("cost", 0.0)),
        ),
        store=store,
        cache=cache,
        loader=loader,
        batch_size=int(data.get("batch_size", defaults.batch_size)),
        dataset_limit=int(limit) if limit is not None else None,
        epochs=int(data.get("epochs", defaults.epochs)),
        seed=int(data.get("seed", defaults.seed)),
        shuffle=bool(data.get("shuffle", True)),
        drop_last=bool(data.get("drop_last", False)),
        consumer=ConsumerModel(
            to_device_delay=float(
                consumer_data.get("to_device_delay", defaults.consumer.to_device_delay)
            ),
            train_delay=float(
                consumer_data.get("train_delay", defaults.consumer.train_delay)
            ),
        ),
        clock=data.get("clock", "monotonic"),
        output_dir=data.get("output_dir", "runs"),
        run_id=data.get("run_id"),
    )


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def set_path(data: dict, path: tuple[str, ...], value: Any) -> None:
    """Set a dotted-path override, creating intermediate sections."""
    node = data
    for part in path[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[path[-1]] = value
