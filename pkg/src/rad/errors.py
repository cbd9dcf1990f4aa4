"""Exception hierarchy shared by every RAD module."""
from __future__ import annotations

from typing import Any, Mapping


class RadError(RuntimeError):
    """Base class for all pipeline failures."""


class ConfigError(RadError):
    """Raised when configuration is missing or invalid."""


class StoreError(RadError):
    """Raised when a persisted artifact cannot be read or is malformed."""


class BoundaryMismatch(RadError):
    """Raised (and usually collected, not thrown) when an entry cannot be anchored."""

    def __init__(self, doc_id: str, entry_id: str, search_text: str) -> None:
        super().__init__(f"{doc_id}: entry {entry_id} not found after previous boundary (search_text={search_text!r})")
        self.doc_id = doc_id
        self.entry_id = entry_id
        self.search_text = search_text


class EmbeddingError(RadError):
    """Raised when an embedding provider fails or returns unusable vectors."""


class DimensionMismatch(RadError):
    """Raised when vector or matrix dimensions disagree."""


class TransportError(RadError):
    """Raised for network-level failures talking to a remote backend."""


class GatewayError(RadError):
    """Raised when a model response still violates its schema after the retry."""

    def __init__(
        self,
        kind: str,
        attempts: int,
        last_raw: str | None,
        message: str = "",
        context: Mapping[str, Any] | None = None,
    ) -> None:
        self.kind = kind
        self.attempts = attempts
        self.last_raw = last_raw
        self.reason = message
        self.context = dict(context or {})
        detail = f" {message}" if message else ""
        ctx = f" context={self.context}" if self.context else ""
        super().__init__(f"{kind} failed after {attempts} attempt(s):{detail}{ctx}")

    def with_context(self, **context: Any) -> "GatewayError":
        """Return a copy carrying extra context (e.g. the failing chunk or pair)."""

        merged = {**self.context, **context}
        return GatewayError(self.kind, self.attempts, self.last_raw, self.reason, merged)


class PartitionStall(RadError):
    """Raised when ISM level extraction makes no progress."""


class NoConvergence(RadError):
    """Raised when power iteration does not reach the residual tolerance."""


class MalformedRanking(RadError):
    """Raised when a ranking is not a permutation of the expected ids."""


class InputError(RadError):
    """Raised for unusable operator input (empty corpus, bad request file, unknown id)."""


class PipelineError(RadError):
    """Wraps a failure with the pipeline step it happened in."""

    def __init__(self, step: str, cause: Exception) -> None:
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class ReportIntegrityError(RadError):
    """Raised when a report's stored numbers cannot be recomputed from its own A and W."""


__all__ = [
    "RadError",
    "ConfigError",
    "StoreError",
    "BoundaryMismatch",
    "EmbeddingError",
    "DimensionMismatch",
    "TransportError",
    "GatewayError",
    "PartitionStall",
    "NoConvergence",
    "MalformedRanking",
    "ReportIntegrityError",
    "InputError",
    "PipelineError",
]
