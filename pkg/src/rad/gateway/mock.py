"""Deterministic offline backend.

Every answer is a pure function of ``(seed, kind, payload, d)`` hashed with
SHA-256, so repeated calls and separate processes agree exactly. The answers
are schema-valid and lean on token overlap so that tests can predict them.
"""
from __future__ import annotations

import json
import math
import re
from typing import Any, Callable, Dict, List, Mapping

from ..text import first_sentence, overlap, sentences, stable_hash, token_set
from .tasks import PromptTask, TaskKind

DOMAIN_POOL: tuple[tuple[str, str], ...] = (
    ("Economics", "Weighs costs, benefits and financial risk of each criterion."),
    ("Public policy", "Judges criteria by regulatory fit and governance feasibility."),
    ("Environmental science", "Prioritises ecological impact and resource sustainability."),
    ("Engineering", "Focuses on technical feasibility, reliability and delivery risk."),
    ("Public health", "Considers effects on population health and safety."),
    ("Law", "Assesses legal obligations, liabilities and compliance exposure."),
    ("Urban planning", "Looks at spatial, infrastructural and community consequences."),
    ("Social science", "Examines equity, acceptance and behavioural responses."),
    ("Operations management", "Values execution capacity, scheduling and logistics."),
    ("Risk management", "Emphasises uncertainty, resilience and worst-case exposure."),
    ("Energy systems", "Evaluates supply, demand and grid integration effects."),
    ("Data and technology", "Considers digital infrastructure, data quality and tooling."),
)

RELATION_OVERLAP_THRESHOLD = 0.25

_YEAR_RE = re.compile(r"\b(?:19|20)\d{2}\b")
_QUANTITY_RE = re.compile(
    r"\b\d+(?:[.,]\d+)?\s?(?:%|(?:percent|per cent|MW|GW|kWh|kW|MWh|km|kg|tonnes|tons|t|million|billion|"
    r"units|vehicles|stations|years|months|days|hours)\b)",
    re.IGNORECASE,
)
_EDGE_PUNCT = ".,;:!?\"'()[]{}#*-"
_HEADING_MARKER_RE = re.compile(r"^[#*\-\s\d.]+")


def _title_from(text: str, max_words: int = 6) -> str:
    sentence = first_sentence(text.lstrip(" \t\n#*->"))
    words = sentence.split()[:max_words]
    while words and not words[-1].strip(_EDGE_PUNCT):
        words.pop()
    if words:
        words[-1] = words[-1].rstrip(_EDGE_PUNCT)
    return " ".join(words) or "Untitled section"


class MockBackend:
    """Seeded, reentrant stand-in for a language model."""

    name = "mock"

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._handlers: Dict[TaskKind, Callable[[PromptTask, int], Dict[str, Any]]] = {
            TaskKind.GENERATE_TITLE: self._title,
            TaskKind.EXTRACT_CRITERION: self._criterion,
            TaskKind.JUDGE_RELATION: self._relation,
            TaskKind.ASSIGN_DOMAINS: self._domains,
            TaskKind.RANK_CRITERIA: self._ranking,
            TaskKind.SCORE_ALTERNATIVE: self._score,
            TaskKind.WRITE_REPORT: self._report,
            TaskKind.VALIDATE_RATIONALE: self._validate,
        }

    def generate(self, task: PromptTask, prompt: str, attempt: int) -> str:
        h = stable_hash(self.seed, task.kind.value, task.payload, task.request_context)
        value = self._handlers[task.kind](task, h)
        return json.dumps(value, sort_keys=True, ensure_ascii=False)

    def _title(self, task: PromptTask, h: int) -> Dict[str, Any]:
        return {"title": _title_from(str(task.payload["text"]))}

    def _criterion(self, task: PromptTask, h: int) -> Dict[str, Any]:
        p = task.payload
        text = str(p["text"])
        d = task.request_context
        headings: List[str] = list(p["headings"])
        every = sentences(text)
        body = [s for s in every if _HEADING_MARKER_RE.sub("", s).strip() not in headings]
        candidates = body or every or [text.strip() or "unnamed factor"]
        best = candidates[0]
        best_score = -1.0
        for sentence in candidates:
            score = overlap(d, sentence)
            if score > best_score:
                best, best_score = sentence, score
        fragment = " ".join(best.lstrip("#*- ").split()[:8]) or "unnamed factor"
        if headings and body:
            name = f"{headings[-1]}: {fragment}"
        else:
            name = headings[-1] if headings else fragment
        facets: Dict[str, str] = {}
        years = _YEAR_RE.findall(text)
        if years:
            facets["time"] = ", ".join(dict.fromkeys(years))
        quantities = [m.group(0) for m in _QUANTITY_RE.finditer(text)]
        if quantities:
            facets["quantity"] = ", ".join(dict.fromkeys(quantities[:3]))
        return {
            "name": name,
            "description": best[:300],
            "relevance": round(overlap(d, text), 6),
            "facets": facets,
        }

    def _relation(self, task: PromptTask, h: int) -> Dict[str, Any]:
        source = task.payload["source"]
        target = task.payload["target"]
        left = f"{source['name']} {source.get('description', '')}"
        right = f"{target['name']} {target.get('description', '')}"
        related = overlap(left, right) >= RELATION_OVERLAP_THRESHOLD
        parity = bool(h & 1)
        return {"value": int(parity == related)}

    def _domains(self, task: PromptTask, h: int) -> Dict[str, Any]:
        count = int(task.payload["count"])
        pool = list(DOMAIN_POOL)
        pool.extend((f"Stakeholder perspective {i}", "Represents an additional stakeholder group.") for i in range(1, count + 1))
        ordered = sorted(pool, key=lambda item: stable_hash(self.seed, "domain", task.request_context, item[0]))
        return {"domains": [{"label": label, "charter": charter} for label, charter in ordered[:count]]}

    def _ranking(self, task: PromptTask, h: int) -> Dict[str, Any]:
        role = task.payload["role"]
        criteria: List[Mapping[str, Any]] = list(task.payload["criteria"])
        ordered = sorted(
            criteria,
            key=lambda c: stable_hash(self.seed, "rank", role["label"], task.request_context, c["id"], c["name"]),
        )
        names = [str(c["name"]) for c in ordered]
        if len(names) == 1:
            rationale = f"From the {role['label']} perspective, {names[0]} is the only criterion at this level."
        else:
            rationale = (
                f"From the {role['label']} perspective, {names[0]} matters most for this decision, "
                f"ahead of {names[1]}; {names[-1]} has the least direct bearing."
            )
        return {"ranking": [int(c["id"]) for c in ordered], "rationale": rationale}

    def _validate(self, task: PromptTask, h: int) -> Dict[str, Any]:
        topic = set(token_set(task.request_context))
        for item in task.payload["criteria"]:
            topic |= token_set(str(item["name"]))
        return {"value": int(bool(token_set(str(task.payload["rationale"])) & topic))}

    def _score(self, task: PromptTask, h: int) -> Dict[str, Any]:
        option = task.payload["option"]
        criterion = task.payload["criterion"]
        share = overlap(str(criterion["name"]), f"{option['title']} {option['text']}")
        bias = int(math.floor(4 * share + 0.5))
        score = min(9, 1 + h % 5 + bias)
        if bias:
            rationale = f"{option['title']} addresses {criterion['name']} directly."
        else:
            rationale = f"{option['title']} says little about {criterion['name']}."
        return {"score": score, "rationale": rationale}

    def _report(self, task: PromptTask, h: int) -> Dict[str, Any]:
        p = task.payload
        names = {int(c["id"]): str(c["name"]) for c in p["criteria"]}
        options_out = []
        for option in p["options"]:
            assessments = []
            for cid, name in names.items():
                score = int(option["scores"][str(cid)])
                strength = f"Performs well on {name} (score {score})." if score >= 6 else ""
                weakness = f"Falls short on {name} (score {score})." if score <= 4 else ""
                assessments.append({"criterion_id": cid, "strength": strength, "weakness": weakness})
            total = p["totals"][option["option_id"]]
            options_out.append(
                {
                    "option_id": option["option_id"],
                    "assessments": assessments,
                    "overall": f"{option['title']} reaches a weighted total of {total:.4f}.",
                }
            )
        best = p["ranking"][0]
        titles = {o["option_id"]: o["title"] for o in p["options"]}
        return {
            "summary": f"{len(p['options'])} alternative(s) were scored against {len(names)} weighted criteria.",
            "recommendation": f"Prefer {titles[best]} ({best}), which has the highest weighted total.",
            "options": options_out,
        }


__all__ = ["MockBackend", "DOMAIN_POOL", "RELATION_OVERLAP_THRESHOLD"]
