import json

import numpy as np
import pytest

from rad.criteria import Criterion
from rad.gateway import TaskKind
from rad.gateway.mock import DOMAIN_POOL
from rad.mcdm import LevelPartition, aggregate_rankings, ranks_to_comparison_matrix
from rad.panel import (
    EMPTY_RATIONALE,
    FALLBACK,
    OFF_TOPIC,
    SINGLE_CRITERION,
    ExpertRole,
    PanelTranscript,
    assign_domains,
    build_weights,
    collect_rankings,
    replay_weights,
)
from rad.text import stable_hash

from conftest import SEED

D = "Choose an EV charging policy that respects grid capacity and emission limits."


def _criteria(k):
    return [Criterion(i, f"Criterion {i}", f"factor number {i}", f"doc.md#{i + 1:04d}", 0.5) for i in range(k)]


def _roles(count=5):
    return [ExpertRole(i, f"Domain {i}", "charter") for i in range(1, count + 1)]


def _eig_weights(cells):
    values, vectors = np.linalg.eig(cells)
    principal = np.real(vectors[:, int(np.argmax(values.real))])
    return principal / principal.sum()


def test_assign_domains_distinct_and_deterministic(gateway):
    roles = assign_domains(D, gateway)
    again = assign_domains(D, gateway)
    labels = [role.domain_label for role in roles]
    assert labels == [role.domain_label for role in again]
    assert len(set(labels)) == 5
    assert [role.role_id for role in roles] == [1, 2, 3, 4, 5]
    pool = list(DOMAIN_POOL) + [(f"Stakeholder perspective {i}", "") for i in range(1, 6)]
    expected = sorted(pool, key=lambda item: stable_hash(SEED, "domain", D, item[0]))[:5]
    assert labels == [label for label, _ in expected]


def test_assign_domains_rejects_blank_description(gateway):
    with pytest.raises(ValueError):
        assign_domains("  ", gateway)


def test_single_criterion_level_skips_the_model(gateway):
    rankings = collect_rankings(_criteria(1), _roles(), D, gateway, level_index=2)
    assert all(r.accepted and r.screening == SINGLE_CRITERION for r in rankings)
    assert all(r.ranking == (0,) and r.level_index == 2 for r in rankings)
    assert sum(gateway.calls.values()) == 0


def test_screening_rejects_empty_and_off_topic_rationales(scripted):
    fallback_backend = scripted().backend.fallback

    def rank(task, attempt):
        role_id = task.payload["role"]["role_id"]
        if role_id == 1:
            return {"ranking": [1, 0], "rationale": ""}
        if role_id == 2:
            return {"ranking": [1, 0], "rationale": "Lorem ipsum dolor sit amet consectetur."}
        return json.loads(fallback_backend.generate(task, "", attempt))

    gateway = scripted({TaskKind.RANK_CRITERIA: rank})
    rankings = collect_rankings(_criteria(2), _roles(), D, gateway)
    screening = {r.role_id: r.screening for r in rankings}
    assert screening[1] == EMPTY_RATIONALE
    assert screening[2] == OFF_TOPIC
    assert sum(r.accepted for r in rankings) == 3
    # empty rationales never reach the validator
    assert gateway.calls[TaskKind.VALIDATE_RATIONALE.value] == 4


def test_single_rejection_leaves_four_accepted(scripted):
    fallback_backend = scripted().backend.fallback

    def rank(task, attempt):
        if task.payload["role"]["role_id"] == 3:
            return {"ranking": [0, 1], "rationale": "   "}
        return json.loads(fallback_backend.generate(task, "", attempt))

    gateway = scripted({TaskKind.RANK_CRITERIA: rank})
    rankings = collect_rankings(_criteria(2), _roles(), D, gateway)
    assert [r.role_id for r in rankings if not r.accepted] == [3]
    assert sum(r.accepted for r in rankings) == 4


def test_all_rejected_rankings_fall_back_to_all_accepted(scripted):
    gateway = scripted({TaskKind.RANK_CRITERIA: lambda task, attempt: {"ranking": [0, 1], "rationale": "too short"}})
    rankings = collect_rankings(_criteria(2), _roles(), D, gateway)
    assert all(r.accepted and r.screening == FALLBACK for r in rankings)
    weights, transcript = build_weights(LevelPartition(((0, 1),)), _criteria(2), _roles(), D, gateway)
    assert transcript.levels[0].fallback
    assert weights.weights == pytest.approx((2 / 3, 1 / 3), abs=1e-12)


def test_unanimous_ranking_gives_two_to_one_weights(scripted):
    answer = {"ranking": [0, 1], "rationale": "Criterion 0 matters more for the charging decision."}
    gateway = scripted({TaskKind.RANK_CRITERIA: lambda task, attempt: answer})
    weights, transcript = build_weights(LevelPartition(((0, 1),)), _criteria(2), _roles(), D, gateway)
    assert weights.weights == pytest.approx((2 / 3, 1 / 3), abs=1e-12)
    level = transcript.levels[0]
    assert level.average_ranks == (1.0, 2.0)
    assert level.pairwise.cells[0, 1] == 2.0
    assert level.consistency.cr == 0.0
    assert not level.fallback


def test_all_singleton_levels_give_uniform_weights(gateway):
    partition = LevelPartition(((0,), (1,), (2,)))
    weights, transcript = build_weights(partition, _criteria(3), _roles(), D, gateway)
    assert weights.weights == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-12)
    assert transcript.level_mass == "equal"
    assert gateway.calls[TaskKind.RANK_CRITERIA.value] == 0


def test_two_level_weights_match_eigen_solver(gateway):
    partition = LevelPartition(((0, 1, 2), (3, 4)))
    roles = assign_domains(D, gateway)
    weights, transcript = build_weights(partition, _criteria(5), roles, D, gateway)
    w = weights.as_array()
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    for level in transcript.levels:
        accepted = [list(r.ranking) for r in level.rankings if r.accepted]
        average = aggregate_rankings(accepted, ids=level.criterion_ids)
        expected = _eig_weights(ranks_to_comparison_matrix(average).cells) / len(partition.levels)
        assert np.allclose(w[list(level.criterion_ids)], expected, atol=1e-9, rtol=0)
    assert sum(w[[3, 4]]) == pytest.approx(0.5, abs=1e-12)


def test_partition_must_cover_all_criteria(gateway):
    with pytest.raises(ValueError):
        build_weights(LevelPartition(((0, 1),)), _criteria(3), _roles(), D, gateway)


def _random_partition(rng, k):
    order = [int(i) for i in rng.permutation(k)]
    cuts = sorted(int(c) for c in rng.choice(np.arange(1, k), size=int(rng.integers(0, k)), replace=False))
    bounds = [0] + cuts + [k]
    return LevelPartition(tuple(tuple(order[a:b]) for a, b in zip(bounds, bounds[1:])))


def test_replay_from_stored_transcript_reproduces_weights(scripted):
    rng = np.random.default_rng(99)
    for trial in range(50):
        k = int(rng.integers(2, 8))
        partition = _random_partition(rng, k)

        def rank(task, attempt, trial=trial):
            ids = [int(c["id"]) for c in task.payload["criteria"]]
            local = np.random.default_rng(stable_hash(trial, task.payload["role"]["role_id"], ids))
            return {
                "ranking": [ids[i] for i in local.permutation(len(ids))],
                "rationale": "Ranked by bearing on the charging decision.",
            }

        gateway = scripted({TaskKind.RANK_CRITERIA: rank})
        weights, transcript = build_weights(partition, _criteria(k), _roles(), D, gateway)
        stored = PanelTranscript.from_dict(json.loads(json.dumps(transcript.to_dict())))
        replayed = replay_weights(stored)
        assert np.allclose(replayed.as_array(), weights.as_array(), atol=1e-12, rtol=0)
        assert stored.weights.weights == pytest.approx(weights.weights, abs=1e-12)
