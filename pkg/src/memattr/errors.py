"""Exception taxonomy shared across the package.

Three top-level families map onto CLI exit codes: UsageError -> 1,
DataError -> 2, ModelError -> 3. OSError from file access is treated like a
DataError at the CLI boundary.
"""

from __future__ import annotations


class MemattrError(Exception):
    """Base class for every error raised by this package."""


class UsageError(MemattrError):
    """Bad command line: unknown flags, missing arguments, conflicting options."""


class ConflictingFlagsError(UsageError):
    """Mutually exclusive options were both given (e.g. --mock with --endpoint-url)."""


class DataError(MemattrError):
    """Malformed, inconsistent, or unreadable input data."""


class ParseError(DataError):
    """A line or document could not be parsed into the expected shape."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    """A parsed record violates a field-level constraint."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class DuplicateIdError(DataError):
    def __init__(self, entry_id: str) -> None:
        super().__init__(f"duplicate id: {entry_id!r}")
        self.entry_id = entry_id


class ConfigError(DataError):
    """A configuration file or merged configuration is invalid."""


class UnknownDocError(DataError):
    def __init__(self, doc_id: str) -> None:
        super().__init__(f"unknown document id: {doc_id!r}")
        self.doc_id = doc_id


class DimensionMismatchError(DataError):
    def __init__(self, expected: int, got: int) -> None:
        super().__init__(f"vector dimension mismatch: expected {expected}, got {got}")


class ZeroVectorError(DataError):
    def __init__(self) -> None:
        super().__init__("cosine undefined for a zero-norm vector")


class IndexMismatchError(DataError):
    """Lexical and dense halves of an index cover different document ids."""


class InvalidWeightsError(DataError):
    """Hybrid fusion weights outside [0, 1] or not summing to 1."""


class IndexFormatError(DataError):
    """Persisted index file has a bad magic, version, or body."""


class EmptyQuerySetError(DataError):
    def __init__(self) -> None:
        super().__init__("no usable query: text, description, and expansion all empty")


class EmptyTextError(DataError):
    def __init__(self) -> None:
        super().__init__("cannot embed an empty string")


class LengthMismatchError(DataError):
    def __init__(self, n_pred: int, n_gold: int) -> None:
        super().__init__(f"length mismatch: {n_pred} predictions vs {n_gold} references")


class IdMismatchError(DataError):
    """Prediction and reference record ids do not join one-to-one."""


class EmptyReferenceError(DataError):
    def __init__(self) -> None:
        super().__init__("at least one reference text is required")


class ModelError(MemattrError):
    """Base class for model-call failures (transport, refusal, capability)."""


class TransportError(ModelError):
    """HTTP-level failure talking to a remote endpoint."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class RateLimitedError(TransportError):
    """Rate limit persisted beyond the configured retries."""


class ModelTimeoutError(TransportError):
    """Request deadline exceeded beyond the configured retries."""


class RefusalError(ModelError):
    """The endpoint answered but declined to produce content."""


class CapabilityUnsupportedError(ModelError):
    def __init__(self, capability: str) -> None:
        super().__init__(f"backend does not support {capability}")
        self.capability = capability


class JudgeParseError(ModelError):
    """Judge response yielded no five-score line even after one retry."""
