import pytest

from rad.criteria import (
    Criterion,
    RelationMatrix,
    check_traceable,
    extract_criteria,
    extract_relations,
    flag_duplicate_criteria,
)
from rad.errors import GatewayError, StoreError
from rad.gateway import TaskKind
from rad.index import RetrievalResult

D = "Choose an EV charging policy that respects grid capacity and emission limits."


def _criteria(names):
    return [Criterion(i, name, "", f"doc.md#{i + 1:04d}", 0.5) for i, name in enumerate(names)]


def test_heading_becomes_criterion_name(store, gateway):
    hits = RetrievalResult(hits=(("emissions.md#0002", 0.8),), k=1)
    [criterion] = extract_criteria(hits, D, gateway, store)
    assert criterion.name == "Phase-in schedule: The phase-in schedule starts in 2026 and covers"
    assert criterion.source_chunk == "emissions.md#0002"
    assert criterion.criterion_id == 0
    assert 0.0 <= criterion.relevance <= 1.0
    assert criterion.structured_facets["time"] == "2026, 2030"
    assert criterion.structured_facets["quantity"] == "40%"


def test_preamble_chunk_is_named_from_its_text(store, gateway):
    hits = RetrievalResult(hits=(("charging.txt#0001", 0.4), ("charging.txt#0003", 0.3)), k=2)
    criteria = extract_criteria(hits, D, gateway, store)
    assert [c.criterion_id for c in criteria] == [0, 1]
    assert criteria[0].name == "Charging infrastructure"
    assert criteria[1].name == "Grid capacity: Grid operators must reinforce substations before large charging"
    check_traceable(criteria, store)


def test_missing_relevance_falls_back_to_retrieval_score(store, scripted):
    gateway = scripted({TaskKind.EXTRACT_CRITERION: lambda task, attempt: {"name": "Grid load"}})
    hits = RetrievalResult(hits=(("charging.txt#0003", 1.7),), k=1)
    [criterion] = extract_criteria(hits, D, gateway, store)
    assert criterion.relevance == 1.0
    assert criterion.description == ""


def test_extraction_failure_names_the_chunk(store, scripted):
    gateway = scripted({TaskKind.EXTRACT_CRITERION: lambda task, attempt: "garbage"})
    hits = RetrievalResult(hits=(("emissions.md#0003", 0.5),), k=1)
    with pytest.raises(GatewayError) as excinfo:
        extract_criteria(hits, D, gateway, store)
    assert excinfo.value.context["chunk_id"] == "emissions.md#0003"


def test_relations_cover_every_ordered_pair(scripted):
    def judge(task, attempt):
        return {"value": int(task.payload["source"]["id"] == 0 and task.payload["target"]["id"] == 1)}

    gateway = scripted({TaskKind.JUDGE_RELATION: judge})
    relations = extract_relations(_criteria(["Cost", "Speed", "Safety", "Equity"]), D, gateway)
    assert gateway.calls[TaskKind.JUDGE_RELATION.value] == 12
    expected = [[0] * 4 for _ in range(4)]
    expected[0][1] = 1
    assert relations.to_list() == expected


def test_single_criterion_needs_no_relation_judgments(scripted):
    gateway = scripted()
    relations = extract_relations(_criteria(["Cost"]), D, gateway)
    assert relations.to_list() == [[0]]
    assert gateway.calls[TaskKind.JUDGE_RELATION.value] == 0
    assert gateway.backend.prompts == []


def test_relation_failure_names_the_pair(scripted):
    def judge(task, attempt):
        if task.payload["source"]["id"] == 1 and task.payload["target"]["id"] == 0:
            return "maybe"
        return {"value": 0}

    gateway = scripted({TaskKind.JUDGE_RELATION: judge})
    with pytest.raises(GatewayError) as excinfo:
        extract_relations(_criteria(["Cost", "Speed"]), D, gateway)
    assert excinfo.value.context["pair"] == (1, 0)


def test_mock_relations_are_deterministic(gateway):
    criteria = _criteria(["Grid capacity", "Grid reinforcement", "Station density"])
    first = extract_relations(criteria, D, gateway)
    second = extract_relations(criteria, D, gateway)
    assert first.to_list() == second.to_list()
    assert all(first.cells[i, i] == 0 for i in range(3))


def test_relation_matrix_validation():
    with pytest.raises(ValueError):
        RelationMatrix.from_list([[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        RelationMatrix.from_list([[0, 3], [0, 0]])


def test_duplicate_names_are_flagged_not_removed():
    criteria = _criteria(["Grid capacity", "Grid capacity limits", "Station density", "Capacity of the grid"])
    assert flag_duplicate_criteria(criteria) == [(0, 1), (0, 3), (1, 3)]
    assert len(criteria) == 4


def test_traceability_requires_known_chunks(store):
    with pytest.raises(StoreError):
        check_traceable([Criterion(0, "Ghost", "", "missing.md#0001", 0.1)], store)


def test_criterion_rejects_out_of_range_relevance():
    with pytest.raises(ValueError):
        Criterion(0, "Cost", "", "doc.md#0001", 1.5)
    with pytest.raises(ValueError):
        Criterion(0, "  ", "", "doc.md#0001", 0.5)
