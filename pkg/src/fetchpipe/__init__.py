"""fetchpipe: concurrent data-loading engine and throughput benchmark harness."""

from .clock import Clock, MonotonicClock, VirtualClock
from .core import (
    DatasetSpec,
    ItemRef,
    RetryPolicy,
    Sample,
    TransformModel,
    dataset_len,
    get_item,
    get_random_item,
    load_manifest,
    payload_digest,
    synthetic_manifest,
    write_manifest,
)
from .errors import (
    BatchFailed,
    ConfigError,
    EmptyDataset,
    EmptyLog,
    FetchFailed,
    FetchPipeError,
    IndexOutOfRange,
    InvalidConfig,
    KeyNotFound,
    NonPositiveDuration,
    NoSuchKind,
    StoreUnavailable,
)
from .harness import (
    ConsumerModel,
    ExperimentConfig,
    RunResult,
    SweepSpec,
    compare_report,
    run_dataset_pool_bench,
    run_experiment,
    run_sweep,
)
from .loader import Loader, LoaderConfig, LoaderState
from .metrics import (
    EventLog,
    EventRecord,
    MetricsSummary,
    build_summary,
    fade_analysis,
    idle_fraction,
    median_span,
    throughput_images,
    throughput_mbits,
)
from .rng import SplitMix64, derive_seed
from .sampler import BatchPlan, EpochPlan, make_epoch_plan
from .storage import (
    ByteCache,
    CacheConfig,
    CacheStats,
    HttpObjectStore,
    LatencyModel,
    LatencySimStore,
    LocalDirStore,
    Store,
    StoreSpec,
    cached_fetch,
    open_store,
    synthetic_payload,
)
from .strategy import (
    Batch,
    ConcurrencyProbe,
    FetchContext,
    StrategyConfig,
    fetch_batch_concurrent,
    fetch_batch_sequential,
    run_pooled_disassembly,
)

__version__ = "0.1.0"
