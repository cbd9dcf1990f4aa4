"""Chunk embeddings and exact top-k cosine retrieval."""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Protocol, Sequence, Tuple

import httpx
import numpy as np
import numpy.typing as npt

from .config import RadConfig, get_logger, resolve_api_key
from .corpus import Chunk
from .errors import DimensionMismatch, EmbeddingError, StoreError, TransportError
from .gateway.remote import transport_retry
from .text import stable_hash, tokens

_logger = get_logger("index")

INDEX_SCHEMA_VERSION = "rad-index/1"
DEFAULT_TOP_K = 10

FloatMatrix = npt.NDArray[np.float64]


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> FloatMatrix:
        """Return one row per text; raise ``EmbeddingError`` on failure."""


class MockEmbedder:
    """Seeded bag-of-tokens embedder: token multiset -> unit vector.

    Each token maps to a fixed Gaussian direction derived from ``(seed, token)``;
    a text is the count-weighted sum, normalised. Identical token multisets give
    identical vectors regardless of word order.
    """

    name = "mock"

    def __init__(self, seed: int, dim: int = 64) -> None:
        self.seed = int(seed)
        self.dim = int(dim)

    @lru_cache(maxsize=65536)
    def _direction(self, token: str) -> FloatMatrix:
        rng = np.random.default_rng(stable_hash(self.seed, "embed", token))
        return rng.standard_normal(self.dim)

    def _vector(self, text: str) -> FloatMatrix:
        words = tokens(text) or ["<empty>"]
        total = np.zeros(self.dim)
        for word in words:
            total += self._direction(word)
        norm = float(np.linalg.norm(total))
        return total / norm if norm > 0 else total

    def embed(self, texts: Sequence[str]) -> FloatMatrix:
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self._vector(text) for text in texts])


class RemoteEmbedder:
    """POST ``{model, input}`` and read ``data[].embedding``."""

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str,
        *,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.dim = 0
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._lock = threading.Lock()

    @transport_retry
    def _post(self, texts: Sequence[str]) -> Any:
        try:
            response = self._client.post(
                self.endpoint, json={"model": self.model, "input": list(texts)}, headers=self._headers
            )
            response.raise_for_status()
            return response.json()
        except (httpx.HTTPError, ValueError) as exc:
            _logger.warning("embedding transport failure endpoint=%s error=%s", self.endpoint, exc)
            raise TransportError(f"embedding request failed: {exc}") from exc

    def embed(self, texts: Sequence[str]) -> FloatMatrix:
        try:
            data = self._post(texts)
            rows = [item["embedding"] for item in data["data"]]
        except TransportError as exc:
            raise EmbeddingError(str(exc)) from exc
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"unexpected embedding response shape: {str(data)[:200]}") from exc
        if len(rows) != len(texts):
            raise EmbeddingError(f"provider returned {len(rows)} vectors for {len(texts)} inputs")
        matrix = np.asarray(rows, dtype=float)
        with self._lock:
            if not self.dim:
                self.dim = int(matrix.shape[1])
        return matrix


def build_embedder(config: RadConfig) -> EmbeddingProvider:
    settings = config.embedding
    if settings.backend == "mock":
        assert config.seed is not None
        return MockEmbedder(config.seed, settings.dim)
    assert settings.endpoint is not None
    api_key = resolve_api_key(settings.api_key_env)
    return RemoteEmbedder(settings.endpoint, settings.model, api_key, timeout=settings.timeout)


def _check_vectors(matrix: FloatMatrix, expected_rows: int, dim: int | None) -> FloatMatrix:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != expected_rows:
        raise EmbeddingError(f"expected {expected_rows} vectors, got array of shape {matrix.shape}")
    if matrix.shape[1] < 1:
        raise EmbeddingError("embedding dimension must be positive")
    if dim is not None and matrix.shape[1] != dim:
        raise DimensionMismatch(f"embedding dim {matrix.shape[1]} != index dim {dim}")
    if not np.all(np.isfinite(matrix)):
        raise EmbeddingError("embedding contains NaN or Inf values")
    return matrix


@dataclass(frozen=True)
class VectorIndex:
    chunk_ids: Tuple[str, ...]
    vectors: FloatMatrix
    dim: int

    def __post_init__(self) -> None:
        if self.vectors.shape != (len(self.chunk_ids), self.dim):
            raise DimensionMismatch(f"index vectors shape {self.vectors.shape} != ({len(self.chunk_ids)}, {self.dim})")
        if len(set(self.chunk_ids)) != len(self.chunk_ids):
            raise StoreError("duplicate chunk ids in index")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def vector(self, chunk_id: str) -> FloatMatrix:
        return self.vectors[self.chunk_ids.index(chunk_id)]


@dataclass(frozen=True)
class RetrievalResult:
    hits: Tuple[Tuple[str, float], ...]
    k: int

    @property
    def chunk_ids(self) -> List[str]:
        return [chunk_id for chunk_id, _ in self.hits]


def build_index(
    chunks: Sequence[Chunk],
    embedder: EmbeddingProvider,
    *,
    batch_size: int = 32,
    max_workers: int = 4,
) -> VectorIndex:
    """Embed every chunk (batches may run concurrently) and assemble rows in chunk order."""

    if not chunks:
        raise ValueError("build_index needs at least one chunk")
    batches = [list(chunks[i : i + batch_size]) for i in range(0, len(chunks), batch_size)]

    def _embed(batch: List[Chunk]) -> FloatMatrix:
        return _check_vectors(embedder.embed([chunk.text for chunk in batch]), len(batch), None)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        parts = list(pool.map(_embed, batches))
    dims = {part.shape[1] for part in parts}
    if len(dims) != 1:
        raise DimensionMismatch(f"embedder returned inconsistent dimensions: {sorted(dims)}")
    vectors = np.vstack(parts)
    _logger.info("built index entries=%d dim=%d", vectors.shape[0], vectors.shape[1])
    return VectorIndex(tuple(chunk.chunk_id for chunk in chunks), vectors, int(vectors.shape[1]))


def cosine_scores(matrix: FloatMatrix, query: FloatMatrix) -> FloatMatrix:
    """Cosine similarity of each row against ``query``; zero vectors score 0."""

    row_norms = np.linalg.norm(matrix, axis=1)
    query_norm = float(np.linalg.norm(query))
    denom = row_norms * query_norm
    dots = matrix @ query
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(scores, -1.0, 1.0)


def top_k(index: VectorIndex, query: str, k: int, embedder: EmbeddingProvider) -> RetrievalResult:
    """Exact scan: the ``k`` best chunks by cosine, ties broken by ascending chunk id."""

    if len(index) == 0:
        raise ValueError("top_k on an empty index")
    if k < 1:
        raise ValueError("k must be >= 1")
    query_vec = _check_vectors(embedder.embed([query]), 1, index.dim)[0]
    scores = cosine_scores(index.vectors, query_vec)
    order = sorted(range(len(index)), key=lambda i: (-float(scores[i]), index.chunk_ids[i]))
    hits = tuple((index.chunk_ids[i], float(scores[i])) for i in order[:k])
    return RetrievalResult(hits=hits, k=k)


def save_index(index: VectorIndex, path: Path) -> None:
    payload: Dict[str, Any] = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "dim": index.dim,
        "entries": [
            {"chunk_id": chunk_id, "values": [float(v) for v in row]}
            for chunk_id, row in zip(index.chunk_ids, index.vectors)
        ],
    }
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_index(path: Path) -> VectorIndex:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        dim = int(payload["dim"])
        entries = payload["entries"]
        ids = tuple(str(entry["chunk_id"]) for entry in entries)
        vectors = np.asarray([entry["values"] for entry in entries], dtype=float).reshape(len(ids), dim)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise StoreError(f"cannot load index {path}: {exc}") from exc
    return VectorIndex(ids, vectors, dim)


__all__ = [
    "DEFAULT_TOP_K",
    "EmbeddingProvider",
    "MockEmbedder",
    "RemoteEmbedder",
    "VectorIndex",
    "RetrievalResult",
    "build_embedder",
    "build_index",
    "cosine_scores",
    "top_k",
    "save_index",
    "load_index",
]
