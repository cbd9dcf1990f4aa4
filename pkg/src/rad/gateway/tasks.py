"""Task kinds, payload contracts and response schemas for every model call."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Mapping, Type

from pydantic import BaseModel, ConfigDict, Field, field_validator


class TaskKind(str, Enum):
    GENERATE_TITLE = "GenerateTitle"
    EXTRACT_CRITERION = "ExtractCriterion"
    JUDGE_RELATION = "JudgeRelation"
    ASSIGN_DOMAINS = "AssignDomains"
    RANK_CRITERIA = "RankCriteria"
    SCORE_ALTERNATIVE = "ScoreAlternative"
    WRITE_REPORT = "WriteReport"
    VALIDATE_RATIONALE = "ValidateRationale"


REQUIRED_PAYLOAD: Dict[TaskKind, tuple[str, ...]] = {
    TaskKind.GENERATE_TITLE: ("text",),
    TaskKind.EXTRACT_CRITERION: ("chunk_id", "headings", "text"),
    TaskKind.JUDGE_RELATION: ("source", "target"),
    TaskKind.ASSIGN_DOMAINS: ("count",),
    TaskKind.RANK_CRITERIA: ("role", "criteria"),
    TaskKind.SCORE_ALTERNATIVE: ("option", "criterion"),
    TaskKind.WRITE_REPORT: ("options", "criteria", "relations", "levels", "totals", "ranking"),
    TaskKind.VALIDATE_RATIONALE: ("rationale", "criteria"),
}


@dataclass(frozen=True)
class PromptTask:
    """One request to the language model.

    ``request_context`` is the decision description *d*; only title
    generation may run without it.
    """

    kind: TaskKind
    payload: Mapping[str, Any]
    request_context: str = ""

    def __post_init__(self) -> None:
        missing = [name for name in REQUIRED_PAYLOAD[self.kind] if name not in self.payload]
        if missing:
            raise ValueError(f"{self.kind.value} payload missing fields: {', '.join(missing)}")
        if self.kind is not TaskKind.GENERATE_TITLE and not self.request_context.strip():
            raise ValueError(f"{self.kind.value} requires a non-empty decision description")


class _Schema(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")


class TitleResponse(_Schema):
    title: str = Field(min_length=1, max_length=120)

    @field_validator("title")
    @classmethod
    def _strip(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError("title is blank")
        return value


class CriterionResponse(_Schema):
    name: str = Field(min_length=1, max_length=200)
    description: str = ""
    relevance: float | None = Field(default=None, ge=0.0, le=1.0)
    facets: Dict[str, str] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _strip(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError("criterion name is blank")
        return value


class BinaryResponse(_Schema):
    value: Literal[0, 1]


class DomainRecord(_Schema):
    label: str = Field(min_length=1)
    charter: str = ""


class DomainsResponse(_Schema):
    domains: List[DomainRecord]


class RankingResponse(_Schema):
    ranking: List[int]
    rationale: str = ""


class ScoreResponse(_Schema):
    score: int = Field(ge=1, le=9)
    rationale: str = ""


class CriterionAssessment(_Schema):
    criterion_id: int
    strength: str = ""
    weakness: str = ""


class OptionAssessment(_Schema):
    option_id: str
    assessments: List[CriterionAssessment]
    overall: str = ""


class ReportProseResponse(_Schema):
    summary: str = Field(min_length=1)
    recommendation: str = Field(min_length=1)
    options: List[OptionAssessment]


RESPONSE_SCHEMAS: Dict[TaskKind, Type[_Schema]] = {
    TaskKind.GENERATE_TITLE: TitleResponse,
    TaskKind.EXTRACT_CRITERION: CriterionResponse,
    TaskKind.JUDGE_RELATION: BinaryResponse,
    TaskKind.ASSIGN_DOMAINS: DomainsResponse,
    TaskKind.RANK_CRITERIA: RankingResponse,
    TaskKind.SCORE_ALTERNATIVE: ScoreResponse,
    TaskKind.WRITE_REPORT: ReportProseResponse,
    TaskKind.VALIDATE_RATIONALE: BinaryResponse,
}

_SCALAR_FIELD = {
    TaskKind.SCORE_ALTERNATIVE: "score",
    TaskKind.JUDGE_RELATION: "value",
    TaskKind.VALIDATE_RATIONALE: "value",
}

_FENCE_RE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


@dataclass(frozen=True)
class StructuredResponse:
    kind: TaskKind
    value: Any
    raw_text: str
    attempt: int = 1
    extras: Dict[str, Any] = field(default_factory=dict)


def parse_raw(kind: TaskKind, raw_text: str) -> Dict[str, Any]:
    """Decode backend text into a JSON object; raises ``ValueError`` if impossible."""

    text = (raw_text or "").strip()
    fenced = _FENCE_RE.match(text)
    if fenced:
        text = fenced.group(1)
    if not text:
        raise ValueError("empty response")
    try:
        decoded = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"response is not JSON: {exc}") from exc
    if isinstance(decoded, (int, float)) and not isinstance(decoded, bool) and kind in _SCALAR_FIELD:
        if float(decoded) != int(decoded):
            raise ValueError(f"expected an integer, got {decoded}")
        decoded = {_SCALAR_FIELD[kind]: int(decoded)}
    if not isinstance(decoded, dict):
        raise ValueError("response must be a JSON object")
    return decoded


def validate_response(task: PromptTask, data: Mapping[str, Any]) -> _Schema:
    """Validate ``data`` against the kind schema plus payload-dependent checks."""

    value = RESPONSE_SCHEMAS[task.kind].model_validate(data)
    payload = task.payload

    if isinstance(value, RankingResponse):
        expected = sorted(int(item["id"]) for item in payload["criteria"])
        if sorted(value.ranking) != expected:
            raise ValueError(f"ranking {value.ranking} is not a permutation of {expected}")
    elif isinstance(value, DomainsResponse):
        labels = [record.label.strip().lower() for record in value.domains]
        if len(labels) != int(payload["count"]):
            raise ValueError(f"expected {payload['count']} domains, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValueError("domain labels must be distinct")
    elif isinstance(value, ReportProseResponse):
        option_ids = sorted(str(item["option_id"]) for item in payload["options"])
        criterion_ids = sorted(int(item["id"]) for item in payload["criteria"])
        if sorted(item.option_id for item in value.options) != option_ids:
            raise ValueError("report prose must cover every option exactly once")
        for item in value.options:
            if sorted(a.criterion_id for a in item.assessments) != criterion_ids:
                raise ValueError(f"option {item.option_id} must assess every criterion exactly once")
    return value


__all__ = [
    "TaskKind",
    "PromptTask",
    "StructuredResponse",
    "TitleResponse",
    "CriterionResponse",
    "BinaryResponse",
    "DomainRecord",
    "DomainsResponse",
    "RankingResponse",
    "ScoreResponse",
    "CriterionAssessment",
    "OptionAssessment",
    "ReportProseResponse",
    "RESPONSE_SCHEMAS",
    "parse_raw",
    "validate_response",
]
