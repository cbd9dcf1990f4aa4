"""Language-model gateway: task contracts, prompts and backends."""
from .core import MAX_ATTEMPTS, Backend, ModelGateway, build_gateway
from .mock import MockBackend
from .prompts import PROMPT_VERSION
from .tasks import PromptTask, StructuredResponse, TaskKind

__all__ = [
    "Backend",
    "MAX_ATTEMPTS",
    "MockBackend",
    "ModelGateway",
    "PROMPT_VERSION",
    "PromptTask",
    "StructuredResponse",
    "TaskKind",
    "build_gateway",
]
