"""Human-readable views of a decision report (markdown and a styled HTML table view)."""
from __future__ import annotations

import math
from html import escape
from typing import Any, Dict, List, Sequence

from .decision import DecisionReport
from .errors import InputError

CSS = (
    "body{font-family:Arial,Helvetica,sans-serif;background:#f9fafb;color:#111827;padding:24px;}"
    "h1{font-size:20px;margin-bottom:16px;}"
    "h2{font-size:16px;margin:24px 0 8px;}"
    "p{font-size:14px;margin:0 0 8px;}"
    ".rad-table{width:100%;border-collapse:collapse;background:#fff;box-shadow:0 10px 30px rgba(15,23,42,0.08);}"
    ".rad-table th{background:#1f2937;color:#f9fafb;text-align:left;padding:12px 16px;font-size:13px;"
    "letter-spacing:0.05em;text-transform:uppercase;}"
    ".rad-table td{padding:12px 16px;vertical-align:top;border-bottom:1px solid #e5e7eb;font-size:13px;}"
    ".rad-table tr:nth-child(even){background:#f3f4f6;}"
    ".numeric{white-space:nowrap;font-family:'SFMono-Regular','Consolas','Liberation Mono',monospace;}"
    ".source{color:#1d4ed8;}"
    ".warning{color:#b91c1c;font-weight:600;}"
)


def _titles(report: DecisionReport) -> Dict[str, str]:
    return {option.option_id: option.title for option in report.request.options}


def _md_cell(value: Any) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


def _md_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> List[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    lines += ["| " + " | ".join(_md_cell(cell) for cell in row) + " |" for row in rows]
    return lines


def render_markdown(report: DecisionReport) -> str:
    titles = _titles(report)
    option_ids = list(report.scores.option_ids)
    lines = ["# Decision report", "", f"**Decision problem:** {report.request.d}", ""]

    lines += ["## Ranking", ""]
    lines += _md_table(
        ["Position", "Option", "Total", "Tied with"],
        [
            [r.position, f"{titles.get(r.option_id, r.option_id)} ({r.option_id})", f"{r.total:.6f}", ", ".join(r.tied_with) or "-"]
            for r in report.ranking
        ],
    )

    lines += ["", "## Criteria trace", ""]
    lines += _md_table(
        ["Criterion", "Level", "Weight", "Source chunk"] + option_ids,
        [
            [f"{row.criterion_id}: {row.name}", row.level, f"{row.weight:.6f}", row.source_chunk]
            + [f"{row.scores[oid]} ({row.contributions[oid]:.4f})" for oid in option_ids]
            for row in report.trace
        ],
    )

    lines += ["", "## Scoring consistency", ""]
    if report.consistency:
        lines += _md_table(
            ["Criterion", "CR", "Flagged"],
            [[item["criterion_id"], f"{item['CR']:.4f}", "yes" if item["flagged"] else "no"] for item in report.consistency],
        )
    else:
        lines.append("Skipped: a single option has no pairwise comparisons.")

    prose = report.prose
    lines += ["", "## Assessment", "", str(prose.get("summary", "")), ""]
    for option in prose.get("options", []):
        oid = str(option.get("option_id"))
        lines.append(f"### {titles.get(oid, oid)} ({oid})")
        lines.append("")
        for item in option.get("assessments", []):
            parts = [text for text in (item.get("strength"), item.get("weakness")) if text]
            if parts:
                lines.append(f"- criterion {item.get('criterion_id')}: {' '.join(parts)}")
        if option.get("overall"):
            lines.append(f"- overall: {option['overall']}")
        lines.append("")
    lines += ["## Recommendation", "", str(prose.get("recommendation", ""))]

    if report.warnings:
        lines += ["", "## Warnings", ""]
        lines += [f"- {warning}" for warning in report.warnings]
    return "\n".join(lines) + "\n"


def _html_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    head = "".join(f"<th>{escape(h)}</th>" for h in header)
    body = "".join("<tr>" + "".join(row) + "</tr>" for row in rows)
    return f"<table class=\"rad-table\"><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>"


def render_html(report: DecisionReport) -> str:
    titles = _titles(report)
    option_ids = list(report.scores.option_ids)

    ranking_rows = [
        [
            f"<td class=\"numeric\">{r.position}</td>",
            f"<td>{escape(titles.get(r.option_id, r.option_id))} ({escape(r.option_id)})</td>",
            f"<td class=\"numeric\">{r.total:.6f}</td>",
            f"<td>{escape(', '.join(r.tied_with)) or '&mdash;'}</td>",
        ]
        for r in report.ranking
    ]
    trace_rows = [
        [
            f"<td>{row.criterion_id}: {escape(row.name)}</td>",
            f"<td class=\"numeric\">{row.level}</td>",
            f"<td class=\"numeric\">{row.weight:.6f}</td>",
            f"<td class=\"source\">{escape(row.source_chunk)}<br>{escape(row.excerpt)}</td>",
        ]
        + [f"<td class=\"numeric\">{row.scores[oid]} ({row.contributions[oid]:.4f})</td>" for oid in option_ids]
        for row in report.trace
    ]
    sections = [
        "<h1>Decision report</h1>",
        f"<p><strong>Decision problem:</strong> {escape(report.request.d)}</p>",
        "<h2>Ranking</h2>",
        _html_table(["Position", "Option", "Total", "Tied with"], ranking_rows),
        "<h2>Criteria trace</h2>",
        _html_table(["Criterion", "Level", "Weight", "Source"] + option_ids, trace_rows),
        "<h2>Assessment</h2>",
        f"<p>{escape(str(report.prose.get('summary', '')))}</p>",
        "<h2>Recommendation</h2>",
        f"<p>{escape(str(report.prose.get('recommendation', '')))}</p>",
    ]
    if report.flagged_criteria:
        sections.append(
            f"<p class=\"warning\">Inconsistent scoring for criteria: {escape(str(report.flagged_criteria))}</p>"
        )
    sections += [f"<p class=\"warning\">{escape(w)}</p>" for w in report.warnings]
    return (
        "<!DOCTYPE html>"
        "<html><head><meta charset=\"utf-8\">"
        f"<style>{CSS}</style>"
        "</head><body>"
        f"{''.join(sections)}"
        "</body></html>"
    )


def summary_text(report: DecisionReport) -> str:
    """Ranking, totals and consistency flags as plain lines."""

    titles = _titles(report)
    lines = [f"decision: {report.request.d}", "ranking:"]
    for r in report.ranking:
        tie = f"  (tied with {', '.join(r.tied_with)})" if r.tied_with else ""
        lines.append(f"  {r.position}. {r.option_id} {titles.get(r.option_id, '')!r} V={r.total:.6f}{tie}")
    if report.consistency:
        flagged = report.flagged_criteria
        lines.append(f"consistency: {len(flagged)} of {len(report.consistency)} criteria flagged {flagged if flagged else ''}".rstrip())
    else:
        lines.append("consistency: skipped (single option)")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines)


def trace_criterion_text(report: DecisionReport, criterion_id: int) -> str:
    """Chain chunk -> criterion -> level -> weight -> per-option scores and contributions."""

    try:
        row = report.trace_row(criterion_id)
    except KeyError as exc:
        valid = ", ".join(str(r.criterion_id) for r in report.trace)
        raise InputError(f"unknown criterion id {criterion_id}; valid ids: {valid}") from exc
    lines = [
        f"criterion {row.criterion_id}: {row.name}",
        f"  source chunk: {row.source_chunk}",
        f"  excerpt: {row.excerpt or '(unavailable)'}",
        f"  level: {row.level}",
        f"  weight: {row.weight:.12f}",
        "  option | score | contribution",
    ]
    for oid in report.scores.option_ids:
        lines.append(f"  {oid} | {row.scores[oid]} | {row.contributions[oid]:.12f}")
    return "\n".join(lines)


def trace_option_text(report: DecisionReport, option_id: str) -> str:
    """Per-criterion contribution table whose rows sum to the option's stored total."""

    if option_id not in report.totals:
        valid = ", ".join(report.scores.option_ids)
        raise InputError(f"unknown option id {option_id!r}; valid ids: {valid}")
    lines = [f"option {option_id}: {_titles(report).get(option_id, '')}", "  criterion | weight | score | contribution"]
    contributions = []
    for row in report.trace:
        contributions.append(row.contributions[option_id])
        lines.append(
            f"  {row.criterion_id} {row.name} | {row.weight:.12f} | {row.scores[option_id]} | "
            f"{row.contributions[option_id]:.12f}"
        )
    lines.append(f"  sum of contributions: {math.fsum(contributions):.12f}")
    lines.append(f"  stored total V: {report.totals[option_id]:.12f}")
    return "\n".join(lines)


__all__ = ["render_markdown", "render_html", "summary_text", "trace_criterion_text", "trace_option_text"]
