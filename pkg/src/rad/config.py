"""Configuration model: JSON config file, then environment, then CLI overrides."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_LOG_FILE = PROJECT_ROOT / "logs" / "rad.log"

DEFAULT_RANDOM_INDEX: Dict[int, float] = {
    1: 0.0,
    2: 0.0,
    3: 0.58,
    4: 0.90,
    5: 1.12,
    6: 1.24,
    7: 1.32,
    8: 1.41,
    9: 1.45,
    10: 1.49,
}

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()


def get_logger(name: str) -> logging.Logger:
    """Return a ``rad.*`` logger with the project's bracketed UTC format."""

    logger = logging.getLogger(f"rad.{name}")
    root = logging.getLogger("rad")
    if not root.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            "[%(asctime)sZ][rad][%(levelname)s] %(message)s",
            datefmt="%Y-%m-%dT%H:%M:%S",
        )
        handler.setFormatter(formatter)
        root.addHandler(handler)
        root.setLevel(LOG_LEVEL)
    return logger


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class HeadingRule(_Frozen):
    """Extra heading detector: ``pattern`` must define a ``title`` group."""

    pattern: str
    level: int = Field(ge=1, le=6)


class GatewaySettings(_Frozen):
    backend: Literal["mock", "remote"] = "mock"
    provider: Literal["openai", "gemini"] = "openai"
    endpoint: str | None = None
    model: str = "gpt-4o-mini"
    api_key_env: str = "RAD_API_KEY"
    temperature: float = 0.0
    timeout: float = 60.0
    max_in_flight: int = Field(default=4, ge=1)


class EmbeddingSettings(_Frozen):
    backend: Literal["mock", "remote"] = "mock"
    endpoint: str | None = None
    model: str = "text-embedding-3-small"
    api_key_env: str = "RAD_EMBEDDING_API_KEY"
    dim: int = Field(default=64, ge=2)
    batch_size: int = Field(default=32, ge=1)
    timeout: float = 60.0


class CorpusSettings(_Frozen):
    markdown_headings: bool = True
    numbered_headings: bool = True
    heading_rules: List[HeadingRule] = Field(default_factory=list)
    level1_threshold: float = Field(default=0.6, ge=0.0, le=2.0)
    level2_threshold: float = Field(default=0.3, ge=0.0, le=2.0)
    min_sentence_chars: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _ordered_thresholds(self) -> "CorpusSettings":
        if self.level2_threshold > self.level1_threshold:
            raise ValueError("level2_threshold must not exceed level1_threshold")
        return self


class PanelSettings(_Frozen):
    experts: int = Field(default=5, ge=1)
    min_rationale_chars: int = Field(default=20, ge=0)


class McdmSettings(_Frozen):
    random_index: Dict[int, float] = Field(default_factory=lambda: dict(DEFAULT_RANDOM_INDEX))
    cr_threshold: float = 0.1


class PathSettings(_Frozen):
    store: Path = Path("store")
    model: Path = Path("model.json")
    report: Path = Path("report.json")
    log_file: Path = DEFAULT_LOG_FILE


class RadConfig(_Frozen):
    top_k: int = Field(default=10, ge=1)
    seed: int | None = 0
    reproducible_output: bool = False
    max_workers: int = Field(default=4, ge=1)
    gateway: GatewaySettings = Field(default_factory=GatewaySettings)
    embedding: EmbeddingSettings = Field(default_factory=EmbeddingSettings)
    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    panel: PanelSettings = Field(default_factory=PanelSettings)
    mcdm: McdmSettings = Field(default_factory=McdmSettings)
    paths: PathSettings = Field(default_factory=PathSettings)

    @model_validator(mode="after")
    def _seed_for_mocks(self) -> "RadConfig":
        uses_mock = self.gateway.backend == "mock" or self.embedding.backend == "mock"
        if uses_mock and self.seed is None:
            raise ValueError("seed is required when a mock backend is selected")
        if self.gateway.backend == "remote" and self.gateway.provider == "openai" and not self.gateway.endpoint:
            raise ValueError("gateway.endpoint is required for the remote openai provider")
        if self.embedding.backend == "remote" and not self.embedding.endpoint:
            raise ValueError("embedding.endpoint is required for the remote embedding backend")
        return self

    def snapshot(self) -> Dict[str, Any]:
        """Config as stored in model provenance (env-var names only, never keys)."""

        data = self.model_dump(mode="json", exclude={"paths"})
        data["mcdm"]["random_index"] = {str(k): v for k, v in sorted(self.mcdm.random_index.items())}
        return data


ENV_OVERRIDES = {
    "RAD_GATEWAY_ENDPOINT": ("gateway", "endpoint"),
    "RAD_GATEWAY_MODEL": ("gateway", "model"),
    "RAD_EMBEDDING_ENDPOINT": ("embedding", "endpoint"),
    "RAD_EMBEDDING_MODEL": ("embedding", "model"),
    "RAD_LOG_FILE": ("paths", "log_file"),
}


def _deep_merge(base: Dict[str, Any], extra: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    use_env: bool = True,
) -> RadConfig:
    """Build a validated :class:`RadConfig`.

    ``overrides`` use the same nested shape as the file; ``None`` values are
    ignored so argparse defaults can be passed straight through.
    """

    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file must hold a JSON object: {path}")

    if use_env:
        load_dotenv()
        for var, (section, field) in ENV_OVERRIDES.items():
            value = os.getenv(var)
            if value:
                data = _deep_merge(data, {section: {field: value}})

    if overrides:
        cleaned = _drop_none(overrides)
        data = _deep_merge(data, cleaned)

    try:
        return RadConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _drop_none(values: Mapping[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in values.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            nested = _drop_none(value)
            if nested:
                out[key] = nested
        else:
            out[key] = value
    return out


def resolve_api_key(env_name: str, fallback_env: str | None = "RAD_API_KEY") -> str:
    """Read an API key from the environment (``.env`` honoured)."""

    load_dotenv()
    key = os.getenv(env_name) or (os.getenv(fallback_env) if fallback_env else None)
    if not key:
        raise ConfigError(f"{env_name} is not set. Create a .env file or export the variable.")
    return key


__all__ = [
    "DEFAULT_RANDOM_INDEX",
    "HeadingRule",
    "GatewaySettings",
    "EmbeddingSettings",
    "CorpusSettings",
    "PanelSettings",
    "McdmSettings",
    "PathSettings",
    "RadConfig",
    "get_logger",
    "load_config",
    "resolve_api_key",
]
