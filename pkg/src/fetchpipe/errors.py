"""Exception hierarchy shared across the pipeline layers."""

from __future__ import annotations


class FetchPipeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FetchPipeError):
    """Invalid experiment or harness configuration."""


class InvalidConfig(ConfigError):
    """Invalid loader/strategy configuration."""


class IndexOutOfRange(FetchPipeError, IndexError):
    """Item index outside the effective dataset range."""


class EmptyDataset(FetchPipeError):
    """Operation requires a non-empty dataset."""


class StoreUnavailable(FetchPipeError):
    """Store endpoint or root cannot be reached or does not exist."""


class KeyNotFound(FetchPipeError, KeyError):
    """Requested key does not exist in the store."""

    def __init__(self, key: str):
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"key not found: {self.key!r}"


class FetchFailed(FetchPipeError):
    """Fetch gave up after exhausting the retry policy."""

    def __init__(self, key: str, cause: BaseException | str):
        super().__init__(key, cause)
        self.key = key
        self.cause = cause

    def __str__(self) -> str:
        return f"fetch failed for {self.key!r}: {self.cause}"


class BatchFailed(FetchPipeError):
    """A batch could not be assembled; the loader stays usable."""

    def __init__(self, batch_id: int, cause: BaseException):
        super().__init__(batch_id, cause)
        self.batch_id = batch_id
        self.cause = cause

    def __str__(self) -> str:
        return f"batch {self.batch_id} failed: {self.cause}"


class NonPositiveDuration(FetchPipeError, ValueError):
    """Throughput over a zero or negative time window is undefined."""


class EmptyLog(FetchPipeError):
    """Metric requires at least one event."""


class NoSuchKind(FetchPipeError):
    """Event log holds no events of the requested kind."""
