"""Criteria extraction from retrieved chunks and pairwise influence judgments."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Protocol, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from .config import get_logger
from .corpus import Chunk
from .errors import GatewayError, StoreError
from .gateway import ModelGateway, PromptTask, TaskKind
from .gateway.tasks import BinaryResponse, CriterionResponse
from .index import RetrievalResult
from .text import token_set

_logger = get_logger("criteria")

DUPLICATE_THRESHOLD = 0.9


class ChunkLookup(Protocol):
    def get(self, chunk_id: str) -> Chunk:
        """Return the stored chunk; raise ``StoreError`` if unknown."""

    def heading_path(self, chunk_id: str) -> List[str]:
        """Heading texts from the outermost directory entry down to the chunk's own."""


@dataclass(frozen=True)
class Criterion:
    criterion_id: int
    name: str
    description: str
    source_chunk: str
    relevance: float
    structured_facets: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("criterion name must be non-empty")
        if not 0.0 <= self.relevance <= 1.0:
            raise ValueError(f"relevance {self.relevance} outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion_id": self.criterion_id,
            "name": self.name,
            "description": self.description,
            "source_chunk": self.source_chunk,
            "relevance": self.relevance,
            "structured_facets": dict(sorted(self.structured_facets.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Criterion":
        return cls(
            criterion_id=int(data["criterion_id"]),
            name=str(data["name"]),
            description=str(data.get("description", "")),
            source_chunk=str(data["source_chunk"]),
            relevance=float(data["relevance"]),
            structured_facets={str(k): str(v) for k, v in dict(data.get("structured_facets", {})).items()},
        )

    def payload(self) -> Dict[str, Any]:
        return {"id": self.criterion_id, "name": self.name, "description": self.description}


@dataclass(frozen=True)
class RelationMatrix:
    """Hollow binary matrix; ``cells[a, b] == 1`` when criterion a directly influences b."""

    cells: npt.NDArray[np.int8]

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int8, copy=True)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise ValueError(f"relation matrix must be square, got {cells.shape}")
        if not np.isin(cells, (0, 1)).all():
            raise ValueError("relation matrix must be binary")
        if np.any(np.diag(cells)):
            raise ValueError("relation matrix diagonal must be zero")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def size(self) -> int:
        return int(self.cells.shape[0])

    def to_list(self) -> List[List[int]]:
        return [[int(v) for v in row] for row in self.cells]

    @classmethod
    def from_list(cls, rows: Sequence[Sequence[int]]) -> "RelationMatrix":
        return cls(np.asarray(rows, dtype=np.int8).reshape(len(rows), len(rows)))


def extract_criteria(
    hits: RetrievalResult,
    d: str,
    gateway: ModelGateway,
    chunks: ChunkLookup,
    *,
    max_workers: int = 4,
) -> List[Criterion]:
    """One ``ExtractCriterion`` call per hit; criterion ids follow hit order."""

    if not hits.hits:
        raise ValueError("extract_criteria needs at least one retrieval hit")
    if not d.strip():
        raise ValueError("decision description must be non-empty")

    def _extract(item: Tuple[int, Tuple[str, float]]) -> Criterion:
        criterion_id, (chunk_id, score) = item
        chunk = chunks.get(chunk_id)
        task = PromptTask(
            TaskKind.EXTRACT_CRITERION,
            {
                "chunk_id": chunk_id,
                "headings": chunks.heading_path(chunk_id),
                "text": chunk.text,
                "retrieval_score": round(score, 6),
            },
            d,
        )
        try:
            response = gateway.complete(task)
        except GatewayError as exc:
            raise exc.with_context(chunk_id=chunk_id) from exc
        value: CriterionResponse = response.value
        relevance = value.relevance if value.relevance is not None else min(1.0, max(0.0, score))
        return Criterion(
            criterion_id=criterion_id,
            name=value.name,
            description=value.description,
            source_chunk=chunk_id,
            relevance=float(relevance),
            structured_facets=dict(value.facets),
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        criteria = list(pool.map(_extract, enumerate(hits.hits)))
    _logger.info("extracted criteria k=%d", len(criteria))
    return criteria


def extract_relations(
    criteria: Sequence[Criterion],
    d: str,
    gateway: ModelGateway,
    *,
    max_workers: int = 4,
) -> RelationMatrix:
    """Ask about every ordered pair ``a != b``; cells are filled by index."""

    k = len(criteria)
    if k < 1:
        raise ValueError("extract_relations needs at least one criterion")
    pairs = [(a, b) for a in range(k) for b in range(k) if a != b]

    def _judge(pair: Tuple[int, int]) -> int:
        a, b = pair
        task = PromptTask(
            TaskKind.JUDGE_RELATION,
            {"source": criteria[a].payload(), "target": criteria[b].payload()},
            d,
        )
        try:
            value: BinaryResponse = gateway.complete(task).value
        except GatewayError as exc:
            raise exc.with_context(pair=(a, b)) from exc
        return int(value.value)

    cells = np.zeros((k, k), dtype=np.int8)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for (a, b), answer in zip(pairs, pool.map(_judge, pairs)):
            cells[a, b] = answer
    _logger.info("judged relations k=%d pairs=%d edges=%d", k, len(pairs), int(cells.sum()))
    return RelationMatrix(cells)


def flag_duplicate_criteria(
    criteria: Sequence[Criterion], threshold: float = DUPLICATE_THRESHOLD
) -> List[Tuple[int, int]]:
    """Pairs ``(a, b)``, ``a < b``, whose name token sets overlap by at least ``threshold``.

    Overlap is intersection over the smaller set. Flagged criteria are kept.
    """

    flags: List[Tuple[int, int]] = []
    names = [token_set(c.name) for c in criteria]
    for a in range(len(criteria)):
        for b in range(a + 1, len(criteria)):
            left, right = names[a], names[b]
            if not left or not right:
                continue
            if len(left & right) / min(len(left), len(right)) >= threshold:
                flags.append((criteria[a].criterion_id, criteria[b].criterion_id))
    return flags


def check_traceable(criteria: Sequence[Criterion], chunks: ChunkLookup) -> None:
    """Raise ``StoreError`` if any criterion points at a chunk the store does not hold."""

    for criterion in criteria:
        chunks.get(criterion.source_chunk)
    if [c.criterion_id for c in criteria] != list(range(len(criteria))):
        raise StoreError("criterion ids must be 0..k-1 in order")


__all__ = [
    "DUPLICATE_THRESHOLD",
    "ChunkLookup",
    "Criterion",
    "RelationMatrix",
    "extract_criteria",
    "extract_relations",
    "flag_duplicate_criteria",
    "check_traceable",
]
