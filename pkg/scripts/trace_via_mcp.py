"""Query a decision report through the RAD MCP server over stdio.

Usage: python scripts/trace_via_mcp.py REPORT [--criterion ID | --option ID]
"""
from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Any, Dict, Sequence

from mcp.client.session import ClientSession
from mcp.client.stdio import StdioServerParameters, stdio_client

PROJECT_ROOT = Path(__file__).resolve().parents[1]
SERVER_SCRIPT = PROJECT_ROOT / "src" / "mcp_servers" / "mcp_server_rad.py"


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Trace a RAD report via the MCP server")
    parser.add_argument("report", help="Path to report.json")
    target = parser.add_mutually_exclusive_group()
    target.add_argument("--criterion", type=int, default=None)
    target.add_argument("--option", default=None)
    return parser.parse_args(argv)


async def main(argv: Sequence[str] | None = None) -> None:
    args = parse_args(argv if argv is not None else sys.argv[1:])
    report = str(Path(args.report).resolve())
    if args.criterion is not None:
        tool, payload = "trace_criterion", {"path": report, "criterion_id": args.criterion}
    elif args.option is not None:
        tool, payload = "trace_option", {"path": report, "option_id": args.option}
    else:
        tool, payload = "report_summary", {"path": report}

    params = StdioServerParameters(command=sys.executable, args=["-u", str(SERVER_SCRIPT)])
    async with stdio_client(params) as (read_stream, write_stream):
        async with ClientSession(read_stream=read_stream, write_stream=write_stream) as session:
            await session.initialize()
            arguments: Dict[str, Any] = payload
            resp = await session.call_tool(tool, arguments)
            out = []
            for item in getattr(resp, "content", []):
                if getattr(item, "type", "") == "text":
                    out.append(item.text)
            print("\n".join(out) if out else str(resp))


if __name__ == "__main__":
    asyncio.run(main())
