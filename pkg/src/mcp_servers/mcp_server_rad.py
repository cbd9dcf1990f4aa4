"""FastMCP server exposing read-only tools over RAD decision reports."""
from __future__ import annotations

import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, Tuple

from mcp.server.fastmcp import FastMCP

if __package__ is None or __package__ == "":  # pragma: no cover
    CURRENT_DIR = Path(__file__).resolve().parent
    SRC_ROOT = CURRENT_DIR.parent
    if str(SRC_ROOT) not in sys.path:
        sys.path.insert(0, str(SRC_ROOT))

from rad.config import RadConfig, get_logger, load_config
from rad.decision import DecisionReport, verify_report
from rad.errors import RadError
from rad.render import summary_text, trace_criterion_text, trace_option_text
from rad.store import read_report

mcp = FastMCP("RadMCP")

SERVER_STATE: Dict[str, Any] = {
    "reports": {},
    "last_report": None,
}

_logger = get_logger("mcp_server")


def _log_tool(name: str, params: Dict[str, Any], result: str, start: float) -> None:
    duration = time.perf_counter() - start
    payload = {
        "params": params,
        "result": result if len(result) <= 300 else result[:300] + "...",
        "elapsed": round(duration, 4),
    }
    _logger.info("tool=%s %s", name, payload)


def _load(path: str) -> Tuple[str, DecisionReport]:
    """Load a report, reusing the cached copy while the file is unchanged."""

    expanded = os.path.abspath(os.path.expanduser(path))
    mtime = os.path.getmtime(expanded)
    cached = SERVER_STATE["reports"].get(expanded)
    if cached is None or cached[0] != mtime:
        cached = (mtime, read_report(Path(expanded)))
        SERVER_STATE["reports"][expanded] = cached
    SERVER_STATE["last_report"] = expanded
    return expanded, cached[1]


def _config(config_path: str = "") -> RadConfig:
    """Settings the reports were written with: ``config_path``, else ``$RAD_CONFIG``, else defaults."""

    chosen = config_path or os.getenv("RAD_CONFIG", "")
    return load_config(Path(os.path.expanduser(chosen)) if chosen else None)


@mcp.tool()
def report_summary(path: str) -> str:
    """Ranking, totals and consistency flags of the report at ``path``."""

    start = time.perf_counter()
    result = "ERROR: Unknown failure"
    params = {"path": path}
    try:
        expanded, report = _load(path)
        params["path"] = expanded
        result = f"REPORT_SUMMARY:\n{summary_text(report)}"
    except (OSError, RadError) as exc:
        result = f"ERROR: {exc}"
    except Exception as exc:  # pragma: no cover - safeguard
        result = f"ERROR: {exc}"
    finally:
        _log_tool("report_summary", params, result, start)
    return result


@mcp.tool()
def trace_criterion(path: str, criterion_id: int) -> str:
    """Chain source chunk -> criterion -> level -> weight -> per-option contributions."""

    start = time.perf_counter()
    result = "ERROR: Unknown failure"
    params: Dict[str, Any] = {"path": path, "criterion_id": criterion_id}
    try:
        _, report = _load(path)
        result = f"TRACE_CRITERION:\n{trace_criterion_text(report, int(criterion_id))}"
    except (OSError, ValueError, RadError) as exc:
        result = f"ERROR: {exc}"
    except Exception as exc:  # pragma: no cover - safeguard
        result = f"ERROR: {exc}"
    finally:
        _log_tool("trace_criterion", params, result, start)
    return result


@mcp.tool()
def trace_option(path: str, option_id: str) -> str:
    """Per-criterion contributions of one option, summing to its total."""

    start = time.perf_counter()
    result = "ERROR: Unknown failure"
    params = {"path": path, "option_id": option_id}
    try:
        _, report = _load(path)
        result = f"TRACE_OPTION:\n{trace_option_text(report, option_id)}"
    except (OSError, RadError) as exc:
        result = f"ERROR: {exc}"
    except Exception as exc:  # pragma: no cover - safeguard
        result = f"ERROR: {exc}"
    finally:
        _log_tool("trace_option", params, result, start)
    return result


@mcp.tool()
def verify_report_file(path: str, config_path: str = "") -> str:
    """Recompute totals, ranking and consistency flags from the stored scores and weights.

    Consistency flags are checked against the configured random index table and CR threshold.
    """

    start = time.perf_counter()
    result = "ERROR: Unknown failure"
    params = {"path": path, "config_path": config_path}
    try:
        _, report = _load(path)
        mcdm_settings = _config(config_path).mcdm
        verify_report(report, ri_table=mcdm_settings.random_index, threshold=mcdm_settings.cr_threshold)
        result = f"REPORT_OK: options={len(report.totals)}, criteria={len(report.trace)}"
    except (OSError, RadError) as exc:
        result = f"ERROR: {exc}"
    except Exception as exc:  # pragma: no cover - safeguard
        result = f"ERROR: {exc}"
    finally:
        _log_tool("verify_report_file", params, result, start)
    return result


if __name__ == "__main__":
    mode = "stdio"
    if len(sys.argv) > 1 and sys.argv[1] == "dev":
        mode = "dev"

    _logger.info("Starting RAD MCP server (mode=%s)", mode)
    if mode == "dev":
        mcp.run()
    else:
        mcp.run(transport="stdio")
