"""Manager/expert weighting panel.

A manager picks expert domains for the decision, every expert ranks the
criteria of each level with a rationale, the manager screens rationales, and
the accepted rankings are averaged and turned into AHP weights. Each level
receives an equal share ``1/L`` of the global weight.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from .config import get_logger
from .criteria import Criterion
from .errors import GatewayError
from .gateway import ModelGateway, PromptTask, TaskKind
from .gateway.tasks import BinaryResponse, DomainsResponse, RankingResponse
from .mcdm import (
    CR_THRESHOLD,
    ConsistencyReport,
    LevelPartition,
    PairwiseMatrix,
    WeightVector,
    aggregate_rankings,
    ahp_weights,
    consistency,
    ranks_to_comparison_matrix,
)

_logger = get_logger("panel")

EXPERT_COUNT = 5
MIN_RATIONALE_CHARS = 20

ACCEPTED = "accepted"
EMPTY_RATIONALE = "empty rationale"
SHORT_RATIONALE = "short rationale"
OFF_TOPIC = "off-topic"
SINGLE_CRITERION = "single criterion"
FALLBACK = "accepted by fallback"


@dataclass(frozen=True)
class ExpertRole:
    role_id: int
    domain_label: str
    charter: str

    def payload(self) -> Dict[str, Any]:
        return {"role_id": self.role_id, "label": self.domain_label, "charter": self.charter}

    def to_dict(self) -> Dict[str, Any]:
        return {"role_id": self.role_id, "domain_label": self.domain_label, "charter": self.charter}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExpertRole":
        return cls(int(data["role_id"]), str(data["domain_label"]), str(data.get("charter", "")))


@dataclass(frozen=True)
class ExpertRanking:
    role_id: int
    level_index: int
    ranking: Tuple[int, ...]
    rationale: str
    accepted: bool
    screening: str = ACCEPTED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "role_id": self.role_id,
            "level_index": self.level_index,
            "ranking": list(self.ranking),
            "rationale": self.rationale,
            "accepted": self.accepted,
            "screening": self.screening,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExpertRanking":
        return cls(
            role_id=int(data["role_id"]),
            level_index=int(data["level_index"]),
            ranking=tuple(int(i) for i in data["ranking"]),
            rationale=str(data.get("rationale", "")),
            accepted=bool(data["accepted"]),
            screening=str(data.get("screening", ACCEPTED)),
        )


@dataclass(frozen=True)
class LevelRecord:
    level_index: int
    criterion_ids: Tuple[int, ...]
    rankings: Tuple[ExpertRanking, ...]
    average_ranks: Tuple[float, ...]
    pairwise: PairwiseMatrix
    local_weights: Tuple[float, ...]
    consistency: ConsistencyReport
    fallback: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level_index": self.level_index,
            "criterion_ids": list(self.criterion_ids),
            "rankings": [r.to_dict() for r in self.rankings],
            "average_ranks": list(self.average_ranks),
            "pairwise": self.pairwise.to_list(),
            "local_weights": list(self.local_weights),
            "consistency": self.consistency.to_dict(),
            "fallback": self.fallback,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LevelRecord":
        return cls(
            level_index=int(data["level_index"]),
            criterion_ids=tuple(int(i) for i in data["criterion_ids"]),
            rankings=tuple(ExpertRanking.from_dict(r) for r in data["rankings"]),
            average_ranks=tuple(float(v) for v in data["average_ranks"]),
            pairwise=PairwiseMatrix(data["pairwise"]),
            local_weights=tuple(float(v) for v in data["local_weights"]),
            consistency=ConsistencyReport.from_dict(data["consistency"]),
            fallback=bool(data.get("fallback", False)),
        )


@dataclass(frozen=True)
class PanelTranscript:
    roles: Tuple[ExpertRole, ...]
    levels: Tuple[LevelRecord, ...]
    weights: WeightVector
    level_mass: str = "equal"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "roles": [r.to_dict() for r in self.roles],
            "levels": [level.to_dict() for level in self.levels],
            "level_mass": self.level_mass,
            "weights": list(self.weights.weights),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PanelTranscript":
        return cls(
            roles=tuple(ExpertRole.from_dict(r) for r in data["roles"]),
            levels=tuple(LevelRecord.from_dict(level) for level in data["levels"]),
            weights=WeightVector(tuple(float(w) for w in data["weights"])),
            level_mass=str(data.get("level_mass", "equal")),
        )


def assign_domains(d: str, gateway: ModelGateway, count: int = EXPERT_COUNT) -> List[ExpertRole]:
    """Ask the manager for ``count`` distinct expert domains relevant to ``d``."""

    if not d.strip():
        raise ValueError("decision description must be non-empty")
    value: DomainsResponse = gateway.complete(PromptTask(TaskKind.ASSIGN_DOMAINS, {"count": count}, d)).value
    roles = [
        ExpertRole(role_id, record.label.strip(), record.charter.strip())
        for role_id, record in enumerate(value.domains, start=1)
    ]
    _logger.info("assigned domains=%s", [r.domain_label for r in roles])
    return roles


def _screen(
    rationale: str,
    level_criteria: Sequence[Criterion],
    d: str,
    gateway: ModelGateway,
    min_chars: int,
) -> str:
    text = rationale.strip()
    if not text:
        return EMPTY_RATIONALE
    if len(text) < min_chars:
        return SHORT_RATIONALE
    task = PromptTask(
        TaskKind.VALIDATE_RATIONALE,
        {"rationale": text, "criteria": [{"id": c.criterion_id, "name": c.name} for c in level_criteria]},
        d,
    )
    value: BinaryResponse = gateway.complete(task).value
    return ACCEPTED if value.value == 1 else OFF_TOPIC


def collect_rankings(
    level_criteria: Sequence[Criterion],
    roles: Sequence[ExpertRole],
    d: str,
    gateway: ModelGateway,
    *,
    level_index: int = 0,
    min_rationale_chars: int = MIN_RATIONALE_CHARS,
    max_workers: int = 4,
) -> List[ExpertRanking]:
    """One screened ranking per role. If every rationale is rejected, all rankings are accepted."""

    if not level_criteria:
        raise ValueError("collect_rankings needs a non-empty level")
    ids = tuple(c.criterion_id for c in level_criteria)
    if len(ids) == 1:
        return [
            ExpertRanking(role.role_id, level_index, ids, "", True, SINGLE_CRITERION) for role in roles
        ]

    def _rank(role: ExpertRole) -> ExpertRanking:
        task = PromptTask(
            TaskKind.RANK_CRITERIA,
            {
                "role": role.payload(),
                "level_index": level_index,
                "criteria": [c.payload() for c in level_criteria],
            },
            d,
        )
        try:
            value: RankingResponse = gateway.complete(task).value
            screening = _screen(value.rationale, level_criteria, d, gateway, min_rationale_chars)
        except GatewayError as exc:
            raise exc.with_context(role_id=role.role_id, level_index=level_index) from exc
        return ExpertRanking(
            role.role_id, level_index, tuple(value.ranking), value.rationale, screening == ACCEPTED, screening
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rankings = list(pool.map(_rank, roles))
    rejected = [r for r in rankings if not r.accepted]
    for ranking in rejected:
        _logger.info("rejected ranking level=%d role=%d reason=%s", level_index, ranking.role_id, ranking.screening)
    if rankings and len(rejected) == len(rankings):
        _logger.warning("all rankings rejected at level=%d; accepting all", level_index)
        rankings = [
            ExpertRanking(r.role_id, r.level_index, r.ranking, r.rationale, True, FALLBACK) for r in rankings
        ]
    return rankings


def _level_chain(
    criterion_ids: Sequence[int],
    rankings: Sequence[ExpertRanking],
    ri_table: Mapping[int, float] | None,
    cr_threshold: float,
) -> Tuple[List[float], PairwiseMatrix, WeightVector, ConsistencyReport]:
    accepted = [list(r.ranking) for r in rankings if r.accepted]
    average = aggregate_rankings(accepted, ids=criterion_ids)
    matrix = ranks_to_comparison_matrix(average)
    local, lambda_max = ahp_weights(matrix)
    report = consistency(matrix, lambda_max, ri_table=ri_table, threshold=cr_threshold)
    return average, matrix, local, report


def _global_weights(levels: Sequence[Tuple[Sequence[int], WeightVector]]) -> WeightVector:
    k = sum(len(ids) for ids, _ in levels)
    weights = [0.0] * k
    share = len(levels)
    for ids, local in levels:
        for criterion_id, u in zip(ids, local.weights):
            weights[criterion_id] = u / share
    return WeightVector(tuple(weights))


def replay_weights(
    transcript: PanelTranscript,
    *,
    ri_table: Mapping[int, float] | None = None,
    cr_threshold: float = CR_THRESHOLD,
) -> WeightVector:
    """Recompute W from the accepted rankings stored in ``transcript``."""

    chains = []
    for level in transcript.levels:
        _, _, local, _ = _level_chain(level.criterion_ids, level.rankings, ri_table, cr_threshold)
        chains.append((level.criterion_ids, local))
    return _global_weights(chains)


def build_weights(
    partition: LevelPartition,
    criteria: Sequence[Criterion],
    roles: Sequence[ExpertRole],
    d: str,
    gateway: ModelGateway,
    *,
    min_rationale_chars: int = MIN_RATIONALE_CHARS,
    ri_table: Mapping[int, float] | None = None,
    cr_threshold: float = CR_THRESHOLD,
    max_workers: int = 4,
) -> Tuple[WeightVector, PanelTranscript]:
    """Rank every level, weight it by AHP, and spread the levels' equal shares over their criteria."""

    by_id = {c.criterion_id: c for c in criteria}
    if partition.ids != sorted(by_id) or partition.ids != list(range(len(criteria))):
        raise ValueError("partition must cover exactly the criteria ids 0..k-1")

    records: List[LevelRecord] = []
    for level_index, ids in enumerate(partition.levels):
        rankings = collect_rankings(
            [by_id[i] for i in ids],
            roles,
            d,
            gateway,
            level_index=level_index,
            min_rationale_chars=min_rationale_chars,
            max_workers=max_workers,
        )
        average, matrix, local, report = _level_chain(ids, rankings, ri_table, cr_threshold)
        if not report.consistent:
            _logger.warning("level=%d CR=%.4f exceeds threshold %.2f", level_index, report.cr, cr_threshold)
        records.append(
            LevelRecord(
                level_index=level_index,
                criterion_ids=tuple(ids),
                rankings=tuple(rankings),
                average_ranks=tuple(average),
                pairwise=matrix,
                local_weights=local.weights,
                consistency=report,
                fallback=any(r.screening == FALLBACK for r in rankings),
            )
        )

    weights = _global_weights([(record.criterion_ids, WeightVector(record.local_weights)) for record in records])
    transcript = PanelTranscript(tuple(roles), tuple(records), weights)
    _logger.info("panel weights levels=%d k=%d", len(records), len(weights))
    return weights, transcript


__all__ = [
    "EXPERT_COUNT",
    "MIN_RATIONALE_CHARS",
    "ExpertRole",
    "ExpertRanking",
    "LevelRecord",
    "PanelTranscript",
    "assign_domains",
    "collect_rankings",
    "build_weights",
    "replay_weights",
]
