"""Prompt templates, one per task kind."""
from __future__ import annotations

from typing import Any, Dict, Mapping

from .tasks import PromptTask, TaskKind
from ..text import canonical_json

PROMPT_VERSION = "rad-prompts/1"

SYSTEM_PROMPT = """You are a decision-analysis component inside an automated pipeline.
Every answer you give is parsed by a program.

Rules:
- Respond with EXACTLY ONE JSON object and nothing else. No markdown, no prose before or after it.
- Use only the keys named in the task. Do not add commentary keys.
- Base every judgment on the material in the task and the decision problem; never invent sources.
"""

GENERATE_TITLE = """Write a clear and concise section title (at most 8 words) for the text below.

Text:
{text}

Answer format: {{"title": "<title>"}}
"""

EXTRACT_CRITERION = """Decision problem: {d}

The text block below was retrieved as relevant to the decision problem.
Section path: {headings}

Text block:
{text}

Identify the single key decision criterion this block contributes: a factor that influences
the decision or its outcome (a cause, constraint, goal or effect), not a named entity.
Rate how relevant the block is to the decision problem between 0 and 1.
If the block states a time frame or a quantity that matters for the criterion, report it.

Answer format: {{"name": "<short phrase>", "description": "<one sentence>", "relevance": <0..1>,
"facets": {{"time": "<optional>", "quantity": "<optional>"}}}}
"""

JUDGE_RELATION = """Decision problem: {d}

Criterion A: {source_name} - {source_description}
Criterion B: {target_name} - {target_description}

Does criterion A DIRECTLY influence or cause criterion B in the context of this decision problem?
Answer about direct influence from A to B only; correlation is not enough.

Answer format: {{"value": 1}} for yes, {{"value": 0}} for no.
"""

ASSIGN_DOMAINS = """Decision problem: {d}

You are the manager of an expert panel. Identify {count} distinct professional domains whose experts
should judge the importance of the decision criteria. For each, give a one-sentence charter describing
the perspective that expert brings.

Answer format: {{"domains": [{{"label": "<domain>", "charter": "<one sentence>"}}, ...]}}
"""

RANK_CRITERIA = """Decision problem: {d}

You are an expert in {role_label}. Perspective: {role_charter}

Rank the following criteria from most important (first) to least important (last) for this decision,
from your domain's perspective, and explain your ranking in two or three sentences.

Criteria:
{criteria_lines}

Answer format: {{"ranking": [<criterion id>, ...], "rationale": "<reasons>"}}
Every id above must appear exactly once.
"""

VALIDATE_RATIONALE = """Decision problem: {d}

You are the panel manager. An expert justified a ranking of these criteria:
{criteria_lines}

Rationale given:
{rationale}

Is this rationale on-topic for the decision problem and about the listed criteria?

Answer format: {{"value": 1}} if valid, {{"value": 0}} if not.
"""

SCORE_ALTERNATIVE = """Decision problem: {d}

Criterion: {criterion_name} - {criterion_description}

Alternative "{option_title}":
{option_text}

Score how well the alternative performs on this criterion using the AHP 1-9 scale
(1 = extremely poor, 5 = moderate, 9 = extremely strong). Explain the score in one sentence.

Answer format: {{"score": <integer 1..9>, "rationale": "<one sentence>"}}
"""

WRITE_REPORT = """Decision problem: {d}

Weighted criteria (id, name, level, weight) with the source text each was drawn from:
{criteria_lines}

Criterion hierarchy (level 1 = outcomes): {level_lines}
Influence relations (a -> b: a directly influences b):
{relation_lines}

Alternatives with their descriptions:
{option_text_lines}

Scores (criterion id: score) and weighted totals:
{option_lines}

Ranking (best first): {ranking}

For every alternative, state its strength and weakness under EACH criterion and give an overall
evaluation. Then summarise the comparison and give a recommendation. Do not change any number.

Answer format: {{"summary": "<paragraph>", "recommendation": "<paragraph>",
"options": [{{"option_id": "<id>", "overall": "<sentence>",
"assessments": [{{"criterion_id": <id>, "strength": "<text>", "weakness": "<text>"}}, ...]}}, ...]}}
"""

CORRECTIVE_SUFFIX = """

Your previous answer could not be used: {error}
Previous answer: {previous}
Reply again with exactly one JSON object in the required format.
"""


def _criteria_lines(criteria: Any) -> str:
    return "\n".join(f"- id={item['id']}: {item['name']}" for item in criteria)


def _fields(task: PromptTask) -> Dict[str, Any]:
    p: Mapping[str, Any] = task.payload
    d = task.request_context
    kind = task.kind
    if kind is TaskKind.GENERATE_TITLE:
        return {"text": p["text"]}
    if kind is TaskKind.EXTRACT_CRITERION:
        return {"d": d, "headings": " / ".join(p["headings"]) or "(none)", "text": p["text"]}
    if kind is TaskKind.JUDGE_RELATION:
        return {
            "d": d,
            "source_name": p["source"]["name"],
            "source_description": p["source"].get("description", ""),
            "target_name": p["target"]["name"],
            "target_description": p["target"].get("description", ""),
        }
    if kind is TaskKind.ASSIGN_DOMAINS:
        return {"d": d, "count": p["count"]}
    if kind is TaskKind.RANK_CRITERIA:
        return {
            "d": d,
            "role_label": p["role"]["label"],
            "role_charter": p["role"].get("charter", ""),
            "criteria_lines": _criteria_lines(p["criteria"]),
        }
    if kind is TaskKind.VALIDATE_RATIONALE:
        return {"d": d, "rationale": p["rationale"], "criteria_lines": _criteria_lines(p["criteria"])}
    if kind is TaskKind.SCORE_ALTERNATIVE:
        return {
            "d": d,
            "criterion_name": p["criterion"]["name"],
            "criterion_description": p["criterion"].get("description", ""),
            "option_title": p["option"]["title"],
            "option_text": p["option"]["text"],
        }
    if kind is TaskKind.WRITE_REPORT:
        criteria_lines = "\n".join(
            f"- id={c['id']}: {c['name']} (level {c['level']}, weight {c['weight']:.4f}; "
            f"from {c.get('source_chunk', '?')}: {c.get('description', '')})"
            for c in p["criteria"]
        )
        level_lines = "; ".join(
            f"level {number}: {', '.join(str(cid) for cid in ids)}" for number, ids in enumerate(p["levels"], start=1)
        )
        relation_lines = "\n".join(f"- {a} -> {b}" for a, b in p["relations"]) or "- none"
        option_text_lines = "\n".join(
            f"- {o['option_id']} \"{o['title']}\": {o.get('text', '')}" for o in p["options"]
        )
        option_lines = "\n".join(
            f"- {o['option_id']}: scores {canonical_json(o['scores'])}; total {p['totals'][o['option_id']]:.4f}"
            for o in p["options"]
        )
        return {
            "d": d,
            "criteria_lines": criteria_lines,
            "level_lines": level_lines,
            "relation_lines": relation_lines,
            "option_text_lines": option_text_lines,
            "option_lines": option_lines,
            "ranking": ", ".join(p["ranking"]),
        }
    raise ValueError(f"No template for task kind {kind}")


TEMPLATES: Dict[TaskKind, str] = {
    TaskKind.GENERATE_TITLE: GENERATE_TITLE,
    TaskKind.EXTRACT_CRITERION: EXTRACT_CRITERION,
    TaskKind.JUDGE_RELATION: JUDGE_RELATION,
    TaskKind.ASSIGN_DOMAINS: ASSIGN_DOMAINS,
    TaskKind.RANK_CRITERIA: RANK_CRITERIA,
    TaskKind.SCORE_ALTERNATIVE: SCORE_ALTERNATIVE,
    TaskKind.WRITE_REPORT: WRITE_REPORT,
    TaskKind.VALIDATE_RATIONALE: VALIDATE_RATIONALE,
}


def render_prompt(task: PromptTask, correction: tuple[str, str] | None = None) -> str:
    """Render the user turn for ``task``; ``correction`` is ``(error, previous_raw)``."""

    prompt = TEMPLATES[task.kind].format(**_fields(task))
    if correction is not None:
        error, previous = correction
        prompt += CORRECTIVE_SUFFIX.format(error=error, previous=(previous or "")[:500])
    return prompt


__all__ = ["PROMPT_VERSION", "SYSTEM_PROMPT", "TEMPLATES", "render_prompt"]
