"""Scoring alternatives, aggregation, ranking and the traceable decision report.

All numbers that reach a report are computed here; the language model only
supplies 1-9 cell scores and prose.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from .config import get_logger
from .criteria import ChunkLookup, Criterion, RelationMatrix
from .errors import DimensionMismatch, GatewayError, ReportIntegrityError, StoreError
from .gateway import ModelGateway, PromptTask, TaskKind
from .gateway.tasks import ReportProseResponse, ScoreResponse
from .mcdm import (
    CR_THRESHOLD,
    ConsistencyReport,
    LevelPartition,
    ReachabilityMatrix,
    WeightVector,
    ahp_weights,
    consistency,
    snap_to_saaty,
)
from .panel import PanelTranscript, replay_weights

_logger = get_logger("decision")

MODEL_SCHEMA_VERSION = "rad-model/1"
REPORT_SCHEMA_VERSION = "rad-report/1"
TIE_DECIMALS = 12
INTEGRITY_TOLERANCE = 1e-9
EXCERPT_CHARS = 240
PLACEHOLDER_PROSE = "Narrative unavailable: the language model did not return valid report prose."


@dataclass(frozen=True)
class Alternative:
    option_id: str
    title: str
    text: str

    def to_dict(self) -> Dict[str, str]:
        return {"id": self.option_id, "title": self.title, "text": self.text}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Alternative":
        option_id = data.get("id", data.get("option_id"))
        if option_id is None or not str(option_id).strip():
            raise ValueError("every option needs an id")
        return cls(str(option_id), str(data.get("title", option_id)), str(data.get("text", "")))


@dataclass(frozen=True)
class DecisionRequest:
    d: str
    options: Tuple[Alternative, ...]
    corpus_ref: str = ""

    def __post_init__(self) -> None:
        if not self.d.strip():
            raise ValueError("decision description d must be non-empty")
        if not self.options:
            raise ValueError("a decision request needs at least one option")
        ids = [o.option_id for o in self.options]
        if len(set(ids)) != len(ids):
            raise ValueError(f"option ids must be distinct: {ids}")

    @property
    def option_ids(self) -> List[str]:
        return [o.option_id for o in self.options]

    def to_dict(self) -> Dict[str, Any]:
        return {"d": self.d, "corpus_ref": self.corpus_ref, "options": [o.to_dict() for o in self.options]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], corpus_ref: str = "") -> "DecisionRequest":
        options = tuple(Alternative.from_dict(item) for item in data.get("options") or [])
        return cls(str(data.get("d", "")), options, str(data.get("corpus_ref", corpus_ref)))


@dataclass(frozen=True)
class HierarchicalModel:
    d: str
    criteria: Tuple[Criterion, ...]
    relations: RelationMatrix
    reachability: ReachabilityMatrix
    partition: LevelPartition
    weights: WeightVector
    transcript: PanelTranscript
    duplicates: Tuple[Tuple[int, int], ...] = ()
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.criteria)
        if not (k == len(self.weights) == self.relations.size == self.reachability.size):
            raise DimensionMismatch(
                f"|F|={k}, |W|={len(self.weights)}, |E|={self.relations.size} must agree"
            )
        if self.partition.ids != list(range(k)):
            raise ValueError("partition must cover every criterion exactly once")

    def level_of(self, criterion_id: int) -> int:
        return self.partition.level_of(criterion_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "d": self.d,
            "criteria": [c.to_dict() for c in self.criteria],
            "relations": self.relations.to_list(),
            "reachability": [[int(v) for v in row] for row in self.reachability.cells],
            "partition": self.partition.to_list(),
            "weights": list(self.weights.weights),
            "transcript": self.transcript.to_dict(),
            "duplicates": [list(pair) for pair in self.duplicates],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HierarchicalModel":
        if data.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise StoreError(f"unsupported model schema {data.get('schema_version')!r}")
        try:
            model = cls(
                d=str(data["d"]),
                criteria=tuple(Criterion.from_dict(c) for c in data["criteria"]),
                relations=RelationMatrix.from_list(data["relations"]),
                reachability=ReachabilityMatrix(np.asarray(data["reachability"], dtype=np.int8)),
                partition=LevelPartition(tuple(tuple(int(i) for i in level) for level in data["partition"])),
                weights=WeightVector(tuple(float(w) for w in data["weights"])),
                transcript=PanelTranscript.from_dict(data["transcript"]),
                duplicates=tuple((int(a), int(b)) for a, b in data.get("duplicates", [])),
                provenance=dict(data.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"malformed model: {exc}") from exc
        replayed = replay_weights(model.transcript)
        if max(abs(a - b) for a, b in zip(replayed.weights, model.weights.weights)) > 1e-12:
            raise StoreError("model weights do not replay from the stored panel transcript")
        return model


@dataclass(frozen=True)
class ScoreMatrix:
    option_ids: Tuple[str, ...]
    criterion_ids: Tuple[int, ...]
    cells: npt.NDArray[np.int64]
    rationales: Tuple[Tuple[str, ...], ...]

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int64, copy=True)
        shape = (len(self.option_ids), len(self.criterion_ids))
        if cells.shape != shape:
            raise DimensionMismatch(f"score matrix shape {cells.shape} != {shape}")
        if cells.size and (cells.min() < 1 or cells.max() > 9):
            raise ValueError("scores must lie in [1, 9]")
        if len(self.rationales) != shape[0] or any(len(row) != shape[1] for row in self.rationales):
            raise DimensionMismatch("rationales must match the score matrix shape")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def score(self, option_id: str, criterion_id: int) -> int:
        return int(self.cells[self.option_ids.index(option_id), self.criterion_ids.index(criterion_id)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "option_ids": list(self.option_ids),
            "criterion_ids": list(self.criterion_ids),
            "cells": [[int(v) for v in row] for row in self.cells],
            "rationales": [list(row) for row in self.rationales],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScoreMatrix":
        return cls(
            option_ids=tuple(str(i) for i in data["option_ids"]),
            criterion_ids=tuple(int(i) for i in data["criterion_ids"]),
            cells=np.asarray(data["cells"], dtype=np.int64).reshape(len(data["option_ids"]), len(data["criterion_ids"])),
            rationales=tuple(tuple(str(r) for r in row) for row in data["rationales"]),
        )


@dataclass(frozen=True)
class RankedOption:
    position: int
    option_id: str
    total: float
    tied_with: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": self.position,
            "option_id": self.option_id,
            "total": self.total,
            "tied_with": list(self.tied_with),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RankedOption":
        return cls(int(data["position"]), str(data["option_id"]), float(data["total"]), tuple(data.get("tied_with", [])))


@dataclass(frozen=True)
class TraceRow:
    criterion_id: int
    name: str
    level: int
    weight: float
    source_chunk: str
    excerpt: str
    scores: Dict[str, int]
    contributions: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion_id": self.criterion_id,
            "name": self.name,
            "level": self.level,
            "weight": self.weight,
            "source_chunk": self.source_chunk,
            "excerpt": self.excerpt,
            "scores": dict(self.scores),
            "contributions": dict(self.contributions),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TraceRow":
        return cls(
            criterion_id=int(data["criterion_id"]),
            name=str(data["name"]),
            level=int(data["level"]),
            weight=float(data["weight"]),
            source_chunk=str(data["source_chunk"]),
            excerpt=str(data.get("excerpt", "")),
            scores={str(k): int(v) for k, v in data["scores"].items()},
            contributions={str(k): float(v) for k, v in data["contributions"].items()},
        )


@dataclass(frozen=True)
class DecisionReport:
    request: DecisionRequest
    model_ref: Dict[str, Any]
    weights: Tuple[float, ...]
    scores: ScoreMatrix
    totals: Dict[str, float]
    ranking: Tuple[RankedOption, ...]
    consistency: Tuple[Dict[str, Any], ...]
    prose: Dict[str, Any]
    trace: Tuple[TraceRow, ...]
    prose_placeholder: bool = False
    warnings: Tuple[str, ...] = ()
    created_at: str | None = None

    @property
    def flagged_criteria(self) -> List[int]:
        return [int(item["criterion_id"]) for item in self.consistency if item["flagged"]]

    def trace_row(self, criterion_id: int) -> TraceRow:
        for row in self.trace:
            if row.criterion_id == criterion_id:
                return row
        raise KeyError(criterion_id)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "request": self.request.to_dict(),
            "model_ref": self.model_ref,
            "weights": list(self.weights),
            "scores": self.scores.to_dict(),
            "totals": dict(self.totals),
            "ranking": [r.to_dict() for r in self.ranking],
            "consistency": [dict(item) for item in self.consistency],
            "prose": self.prose,
            "prose_placeholder": self.prose_placeholder,
            "trace": [row.to_dict() for row in self.trace],
            "warnings": list(self.warnings),
        }
        if self.created_at is not None:
            data["created_at"] = self.created_at
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DecisionReport":
        if data.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise StoreError(f"unsupported report schema {data.get('schema_version')!r}")
        try:
            return cls(
                request=DecisionRequest.from_dict(data["request"]),
                model_ref=dict(data.get("model_ref", {})),
                weights=tuple(float(w) for w in data["weights"]),
                scores=ScoreMatrix.from_dict(data["scores"]),
                totals={str(k): float(v) for k, v in data["totals"].items()},
                ranking=tuple(RankedOption.from_dict(r) for r in data["ranking"]),
                consistency=tuple(dict(item) for item in data["consistency"]),
                prose=dict(data["prose"]),
                trace=tuple(TraceRow.from_dict(row) for row in data["trace"]),
                prose_placeholder=bool(data.get("prose_placeholder", False)),
                warnings=tuple(str(w) for w in data.get("warnings", [])),
                created_at=data.get("created_at"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"malformed report: {exc}") from exc


# ---- Operations ---------------------------------------------------------------------
def score_alternatives(
    options: Sequence[Alternative],
    model: HierarchicalModel,
    gateway: ModelGateway,
    *,
    max_workers: int = 4,
) -> ScoreMatrix:
    """One ``ScoreAlternative`` call per (option, criterion) cell."""

    if not options:
        raise ValueError("score_alternatives needs at least one option")
    cells = [(i, j) for i in range(len(options)) for j in range(len(model.criteria))]

    def _score(cell: Tuple[int, int]) -> Tuple[int, str]:
        option, criterion = options[cell[0]], model.criteria[cell[1]]
        task = PromptTask(
            TaskKind.SCORE_ALTERNATIVE,
            {
                "option": {"option_id": option.option_id, "title": option.title, "text": option.text},
                "criterion": criterion.payload(),
            },
            model.d,
        )
        try:
            value: ScoreResponse = gateway.complete(task).value
        except GatewayError as exc:
            raise exc.with_context(option_id=option.option_id, criterion_id=criterion.criterion_id) from exc
        return value.score, value.rationale

    matrix = np.zeros((len(options), len(model.criteria)), dtype=np.int64)
    rationales = [["" for _ in model.criteria] for _ in options]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for (i, j), (score, rationale) in zip(cells, pool.map(_score, cells)):
            matrix[i, j] = score
            rationales[i][j] = rationale
    _logger.info("scored options=%d criteria=%d", len(options), len(model.criteria))
    return ScoreMatrix(
        tuple(o.option_id for o in options),
        tuple(c.criterion_id for c in model.criteria),
        matrix,
        tuple(tuple(row) for row in rationales),
    )


def comparison_from_scores(column: Sequence[int]) -> npt.NDArray[np.float64]:
    """Alternative-vs-alternative matrix ``q_ab = snap(a_a / a_b)``, reciprocal by construction."""

    o = len(column)
    matrix = np.ones((o, o))
    for a in range(o):
        for b in range(a + 1, o):
            matrix[a, b] = snap_to_saaty(column[a] / column[b])
            matrix[b, a] = 1.0 / matrix[a, b]
    return matrix


def check_consistency(
    scores: ScoreMatrix,
    *,
    ri_table: Mapping[int, float] | None = None,
    threshold: float = CR_THRESHOLD,
) -> List[ConsistencyReport]:
    """Per-criterion CR of the snapped ratio matrix; empty when there is a single option."""

    if len(scores.option_ids) < 2:
        return []
    reports = []
    for j in range(len(scores.criterion_ids)):
        matrix = comparison_from_scores([int(v) for v in scores.cells[:, j]])
        _, lambda_max = ahp_weights(matrix)
        reports.append(consistency(matrix, lambda_max, ri_table=ri_table, threshold=threshold))
    return reports


def aggregate(scores: ScoreMatrix | npt.ArrayLike, weights: WeightVector | Sequence[float]) -> List[float]:
    """``V_i = sum_j w_j * a_ij`` with compensated summation."""

    cells = np.asarray(getattr(scores, "cells", scores), dtype=float)
    w = list(weights.weights) if isinstance(weights, WeightVector) else [float(x) for x in weights]
    if cells.ndim != 2 or cells.shape[1] != len(w):
        raise DimensionMismatch(f"score matrix {cells.shape} does not match {len(w)} weights")
    return [math.fsum(wj * float(aij) for wj, aij in zip(w, row)) for row in cells]


def rank(totals: Sequence[float], option_ids: Sequence[str] | None = None) -> List[RankedOption]:
    """Descending by total; equal totals (to 12 decimals) keep input order and are marked tied."""

    if not totals:
        raise ValueError("rank needs at least one total")
    ids = list(option_ids) if option_ids is not None else [f"option{i}" for i in range(1, len(totals) + 1)]
    if len(ids) != len(totals):
        raise DimensionMismatch("one option id per total is required")
    keys = [round(float(v), TIE_DECIMALS) for v in totals]
    order = sorted(range(len(totals)), key=lambda i: -keys[i])
    groups: Dict[float, List[str]] = {}
    for i in order:
        groups.setdefault(keys[i], []).append(ids[i])
    return [
        RankedOption(
            position=position,
            option_id=ids[i],
            total=float(totals[i]),
            tied_with=tuple(other for other in groups[keys[i]] if other != ids[i]),
        )
        for position, i in enumerate(order, start=1)
    ]


def _excerpt(text: str, limit: int = EXCERPT_CHARS) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= limit else flat[: limit - 3].rstrip() + "..."


def _consistency_entries(
    scores: ScoreMatrix, reports: Sequence[ConsistencyReport]
) -> List[Dict[str, Any]]:
    return [
        {"criterion_id": cid, **report.to_dict(), "flagged": not report.consistent}
        for cid, report in zip(scores.criterion_ids, reports)
    ]


def _prose_payload(
    request: DecisionRequest,
    model: HierarchicalModel,
    scores: ScoreMatrix,
    totals: Sequence[float],
    ranking: Sequence[RankedOption],
) -> Dict[str, Any]:
    return {
        "options": [
            {
                "option_id": option.option_id,
                "title": option.title,
                "text": option.text,
                "scores": {str(cid): scores.score(option.option_id, cid) for cid in scores.criterion_ids},
            }
            for option in request.options
        ],
        "criteria": [
            {
                "id": c.criterion_id,
                "name": c.name,
                "description": c.description,
                "source_chunk": c.source_chunk,
                "level": model.level_of(c.criterion_id),
                "weight": round(model.weights.weights[c.criterion_id], 6),
            }
            for c in model.criteria
        ],
        "relations": [[int(a), int(b)] for a, b in np.argwhere(model.relations.cells == 1)],
        "levels": model.partition.to_list(),
        "totals": {oid: round(v, 6) for oid, v in zip(request.option_ids, totals)},
        "ranking": [r.option_id for r in ranking],
    }


def _placeholder_prose(request: DecisionRequest, model: HierarchicalModel) -> Dict[str, Any]:
    return {
        "summary": PLACEHOLDER_PROSE,
        "recommendation": PLACEHOLDER_PROSE,
        "options": [
            {
                "option_id": option.option_id,
                "assessments": [
                    {"criterion_id": c.criterion_id, "strength": "", "weakness": ""} for c in model.criteria
                ],
                "overall": PLACEHOLDER_PROSE,
            }
            for option in request.options
        ],
    }


def generate_report(
    request: DecisionRequest,
    model: HierarchicalModel,
    scores: ScoreMatrix,
    totals: Sequence[float],
    gateway: ModelGateway,
    *,
    chunks: ChunkLookup | None = None,
    consistency_reports: Sequence[ConsistencyReport] | None = None,
    model_ref: Mapping[str, Any] | None = None,
    created_at: str | None = None,
) -> DecisionReport:
    """Assemble the report; prose failures degrade to placeholders with a warning."""

    if list(scores.option_ids) != request.option_ids:
        raise DimensionMismatch("score matrix rows must follow the request's option order")
    if len(totals) != len(request.options):
        raise DimensionMismatch("one total per option is required")
    reports = list(consistency_reports) if consistency_reports is not None else check_consistency(scores)
    ranking = rank(totals, request.option_ids)
    warnings: List[str] = []

    try:
        task = PromptTask(TaskKind.WRITE_REPORT, _prose_payload(request, model, scores, totals, ranking), model.d)
        value: ReportProseResponse = gateway.complete(task).value
        prose = value.model_dump()
        placeholder = False
    except GatewayError as exc:
        _logger.warning("report prose failed; emitting placeholders error=%s", exc)
        warnings.append(f"report prose unavailable: {exc}")
        prose = _placeholder_prose(request, model)
        placeholder = True

    trace = []
    for criterion in model.criteria:
        j = scores.criterion_ids.index(criterion.criterion_id)
        weight = model.weights.weights[criterion.criterion_id]
        excerpt = ""
        if chunks is not None:
            excerpt = _excerpt(chunks.get(criterion.source_chunk).text)
        cell_scores = {oid: int(scores.cells[i, j]) for i, oid in enumerate(scores.option_ids)}
        trace.append(
            TraceRow(
                criterion_id=criterion.criterion_id,
                name=criterion.name,
                level=model.level_of(criterion.criterion_id),
                weight=weight,
                source_chunk=criterion.source_chunk,
                excerpt=excerpt,
                scores=cell_scores,
                contributions={oid: weight * s for oid, s in cell_scores.items()},
            )
        )
    flagged = [entry for entry in _consistency_entries(scores, reports) if entry["flagged"]]
    if flagged:
        warnings.append(f"scoring inconsistent (CR > threshold) for criteria {[e['criterion_id'] for e in flagged]}")

    return DecisionReport(
        request=request,
        model_ref=dict(model_ref or {}),
        weights=model.weights.weights,
        scores=scores,
        totals={oid: float(v) for oid, v in zip(request.option_ids, totals)},
        ranking=tuple(ranking),
        consistency=tuple(_consistency_entries(scores, reports)),
        prose=prose,
        trace=tuple(trace),
        prose_placeholder=placeholder,
        warnings=tuple(warnings),
        created_at=created_at,
    )


def verify_report(
    report: DecisionReport,
    *,
    ri_table: Mapping[int, float] | None = None,
    threshold: float = CR_THRESHOLD,
    tolerance: float = INTEGRITY_TOLERANCE,
) -> None:
    """Recompute totals, ranking, consistency flags and contributions from the stored A and W."""

    recomputed = aggregate(report.scores, list(report.weights))
    ids = list(report.scores.option_ids)
    if ids != report.request.option_ids:
        raise ReportIntegrityError("score rows do not follow the request's option order")
    for oid, value in zip(ids, recomputed):
        stored = report.totals.get(oid)
        if stored is None or abs(stored - value) > tolerance:
            raise ReportIntegrityError(f"total for {oid} is {stored}, recomputed {value}")
    expected = [(r.option_id, r.tied_with) for r in rank(recomputed, ids)]
    if [(r.option_id, r.tied_with) for r in report.ranking] != expected:
        raise ReportIntegrityError("stored ranking does not match the recomputed totals")
    reports = check_consistency(report.scores, ri_table=ri_table, threshold=threshold)
    flags = [entry["flagged"] for entry in _consistency_entries(report.scores, reports)]
    if flags != [bool(item["flagged"]) for item in report.consistency]:
        raise ReportIntegrityError("stored consistency flags do not match the score matrix")
    for oid, total in zip(ids, recomputed):
        contributed = math.fsum(row.contributions[oid] for row in report.trace)
        if abs(contributed - total) > tolerance:
            raise ReportIntegrityError(f"trace contributions for {oid} sum to {contributed}, expected {total}")


__all__ = [
    "MODEL_SCHEMA_VERSION",
    "REPORT_SCHEMA_VERSION",
    "Alternative",
    "DecisionRequest",
    "HierarchicalModel",
    "ScoreMatrix",
    "RankedOption",
    "TraceRow",
    "DecisionReport",
    "score_alternatives",
    "comparison_from_scores",
    "check_consistency",
    "aggregate",
    "rank",
    "generate_report",
    "verify_report",
]
