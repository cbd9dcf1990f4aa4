import json

import httpx
import pytest

from rad.errors import GatewayError, TransportError
from rad.gateway import MockBackend, ModelGateway, PromptTask, TaskKind
from rad.gateway.prompts import render_prompt
from rad.gateway.remote import OpenAIChatBackend
from rad.gateway.tasks import ScoreResponse, parse_raw

D = "Pick a charging policy that respects grid capacity."


def _score_task() -> PromptTask:
    return PromptTask(
        TaskKind.SCORE_ALTERNATIVE,
        {
            "option": {"id": "a", "title": "Grid first", "text": "Reinforce the grid."},
            "criterion": {"id": 0, "name": "Grid capacity", "description": ""},
        },
        D,
    )


def _rank_task() -> PromptTask:
    return PromptTask(
        TaskKind.RANK_CRITERIA,
        {
            "role": {"role_id": 1, "label": "Economics", "charter": ""},
            "criteria": [{"id": 0, "name": "Cost"}, {"id": 1, "name": "Speed"}],
        },
        D,
    )


def test_task_requires_payload_fields_and_context():
    with pytest.raises(ValueError):
        PromptTask(TaskKind.SCORE_ALTERNATIVE, {"option": {}}, D)
    with pytest.raises(ValueError):
        PromptTask(TaskKind.RANK_CRITERIA, {"role": {}, "criteria": []}, "   ")
    PromptTask(TaskKind.GENERATE_TITLE, {"text": "Some section"})


def test_mock_backend_is_deterministic():
    task = _score_task()
    first = MockBackend(3).generate(task, "", 1)
    second = MockBackend(3).generate(task, "", 2)
    assert first == second


def test_corrective_retry_recovers(scripted):
    def handler(task, attempt):
        return "not json at all" if attempt == 1 else {"score": 7, "rationale": "fine"}

    gateway = scripted({TaskKind.SCORE_ALTERNATIVE: handler})
    response = gateway.complete(_score_task())
    assert isinstance(response.value, ScoreResponse)
    assert response.value.score == 7
    assert response.attempt == 2
    assert gateway.calls[TaskKind.SCORE_ALTERNATIVE.value] == 2


def test_second_violation_raises_gateway_error(scripted):
    gateway = scripted({TaskKind.SCORE_ALTERNATIVE: lambda task, attempt: {"score": 12}})
    with pytest.raises(GatewayError) as excinfo:
        gateway.complete(_score_task())
    assert excinfo.value.kind == "ScoreAlternative"
    assert excinfo.value.attempts == 2
    assert excinfo.value.last_raw == json.dumps({"score": 12})
    assert gateway.calls["ScoreAlternative"] == 2


def test_gateway_error_context_is_additive():
    error = GatewayError("JudgeRelation", 2, "{}", "bad", {"pair": (0, 1)})
    enriched = error.with_context(level_index=2)
    assert enriched.context == {"pair": (0, 1), "level_index": 2}
    assert "level_index" in str(enriched)


def test_bare_integer_is_coerced_for_scalar_tasks(scripted):
    gateway = scripted({TaskKind.SCORE_ALTERNATIVE: lambda task, attempt: "6"})
    assert gateway.complete(_score_task()).value.score == 6
    assert parse_raw(TaskKind.JUDGE_RELATION, "1") == {"value": 1}
    with pytest.raises(ValueError):
        parse_raw(TaskKind.SCORE_ALTERNATIVE, "6.5")
    with pytest.raises(ValueError):
        parse_raw(TaskKind.RANK_CRITERIA, "[0, 1]")


def test_fenced_json_is_accepted():
    assert parse_raw(TaskKind.GENERATE_TITLE, '```json\n{"title": "Grid"}\n```') == {"title": "Grid"}


def test_ranking_must_be_a_permutation(scripted):
    attempts = []

    def handler(task, attempt):
        attempts.append(attempt)
        return {"ranking": [0, 0], "rationale": "cost first"} if attempt == 1 else {"ranking": [1, 0]}

    gateway = scripted({TaskKind.RANK_CRITERIA: handler})
    assert gateway.complete(_rank_task()).value.ranking == [1, 0]
    assert attempts == [1, 2]


def test_domains_must_be_distinct(scripted):
    duplicate = {"domains": [{"label": "Law"}, {"label": "law "}]}
    gateway = scripted({TaskKind.ASSIGN_DOMAINS: lambda task, attempt: duplicate})
    with pytest.raises(GatewayError):
        gateway.complete(PromptTask(TaskKind.ASSIGN_DOMAINS, {"count": 2}, D))


def test_corrective_prompt_mentions_previous_error():
    task = _score_task()
    plain = render_prompt(task)
    corrected = render_prompt(task, ("score: Input should be less than or equal to 9", '{"score": 12}'))
    assert D in plain
    assert "less than or equal to 9" in corrected
    assert len(corrected) > len(plain)


def test_openai_backend_retries_transport_failure_once():
    calls = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        calls["n"] += 1
        if calls["n"] == 1:
            return httpx.Response(503, json={"error": "busy"})
        body = json.loads(request.content)
        assert body["messages"][0]["role"] == "system"
        return httpx.Response(200, json={"choices": [{"message": {"content": '{"score": 5}'}}]})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    backend = OpenAIChatBackend("https://llm.test/v1/chat", "m", "key", client=client)
    gateway = ModelGateway(backend)
    assert gateway.complete(_score_task()).value.score == 5
    assert calls["n"] == 2


def test_openai_backend_gives_up_after_second_transport_failure():
    client = httpx.Client(transport=httpx.MockTransport(lambda request: httpx.Response(500)))
    backend = OpenAIChatBackend("https://llm.test/v1/chat", "m", "key", client=client)
    with pytest.raises(TransportError):
        backend.generate(_score_task(), "prompt", 1)
