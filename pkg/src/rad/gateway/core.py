"""The single choke point for every language-model interaction."""
from __future__ import annotations

import threading
import time
from collections import Counter
from typing import Protocol

from pydantic import ValidationError

from ..config import RadConfig, get_logger, resolve_api_key
from ..errors import GatewayError
from .mock import MockBackend
from .prompts import render_prompt
from .tasks import PromptTask, StructuredResponse, parse_raw, validate_response

_logger = get_logger("gateway")

MAX_ATTEMPTS = 2


class Backend(Protocol):
    name: str

    def generate(self, task: PromptTask, prompt: str, attempt: int) -> str:
        """Return raw model text for ``prompt``; raise ``TransportError`` on network failure."""


class ModelGateway:
    """Render, call, validate; retry exactly once with a corrective instruction.

    Callers only ever see validated values. ``calls`` counts backend calls per
    task kind and is safe to read after concurrent use.
    """

    def __init__(self, backend: Backend) -> None:
        self.backend = backend
        self.calls: Counter[str] = Counter()
        self._lock = threading.Lock()

    @property
    def backend_name(self) -> str:
        return getattr(self.backend, "name", type(self.backend).__name__)

    def complete(self, task: PromptTask) -> StructuredResponse:
        correction: tuple[str, str] | None = None
        raw = ""
        error = ""
        for attempt in range(1, MAX_ATTEMPTS + 1):
            prompt = render_prompt(task, correction)
            start = time.perf_counter()
            raw = self.backend.generate(task, prompt, attempt)
            with self._lock:
                self.calls[task.kind.value] += 1
            try:
                value = validate_response(task, parse_raw(task.kind, raw))
            except (ValueError, ValidationError) as exc:
                error = _short_error(exc)
                _logger.warning(
                    "kind=%s attempt=%d schema_violation=%s raw=%s",
                    task.kind.value,
                    attempt,
                    error,
                    raw[:200].replace("\n", "\\n"),
                )
                correction = (error, raw)
                continue
            _logger.debug(
                "kind=%s attempt=%d ok elapsed=%.4f", task.kind.value, attempt, time.perf_counter() - start
            )
            return StructuredResponse(kind=task.kind, value=value, raw_text=raw, attempt=attempt)
        raise GatewayError(task.kind.value, MAX_ATTEMPTS, raw, error)


def _short_error(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        return f"{location}: {first.get('msg', 'invalid')}" if location else str(first.get("msg", "invalid"))
    return str(exc)


def build_gateway(config: RadConfig) -> ModelGateway:
    """Construct the gateway selected by configuration."""

    settings = config.gateway
    if settings.backend == "mock":
        assert config.seed is not None
        return ModelGateway(MockBackend(config.seed))

    from .remote import GeminiBackend, OpenAIChatBackend

    api_key = resolve_api_key(settings.api_key_env)
    if settings.provider == "gemini":
        backend: Backend = GeminiBackend(
            settings.model,
            api_key,
            temperature=settings.temperature,
            max_in_flight=settings.max_in_flight,
        )
    else:
        assert settings.endpoint is not None
        backend = OpenAIChatBackend(
            settings.endpoint,
            settings.model,
            api_key,
            temperature=settings.temperature,
            timeout=settings.timeout,
            max_in_flight=settings.max_in_flight,
        )
    return ModelGateway(backend)


__all__ = ["Backend", "ModelGateway", "MAX_ATTEMPTS", "build_gateway"]
