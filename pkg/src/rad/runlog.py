"""Per-invocation run log: one structured line per pipeline step."""
from __future__ import annotations

import json
import sys
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, TextIO


def _utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3]


def serialize_for_logging(payload: Any) -> str:
    """Serialize payload for logging, falling back to repr when JSON fails."""

    try:
        return json.dumps(payload, ensure_ascii=True, separators=(",", ":"), default=str)
    except (TypeError, ValueError):
        return repr(payload)


class RunLogger:
    """Writes ``[ts Z][rad][run_id=..] message`` lines to the log file and stderr."""

    def __init__(self, log_file: Path, run_id: str | None = None, *, echo: TextIO | None = None) -> None:
        self.run_id = run_id or uuid.uuid4().hex[:8]
        self.log_file = Path(log_file)
        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self._echo = echo if echo is not None else sys.stderr
        self._file_handle = open(self.log_file, "a", encoding="utf-8")

    def close(self) -> None:
        try:
            self._file_handle.close()
        except OSError:  # pragma: no cover - best effort cleanup
            pass

    def log(self, message: str) -> None:
        line = f"[{_utc_timestamp()}Z][rad][run_id={self.run_id}] {message}"
        print(line, file=self._echo)
        self._file_handle.write(f"{line}\n")
        self._file_handle.flush()

    def step(self, name: str, **fields: Any) -> None:
        parts = [f"step={name}"] + [f"{key}={serialize_for_logging(value)}" for key, value in fields.items()]
        self.log(" ".join(parts))

    def __enter__(self) -> "RunLogger":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:  # type: ignore[no-untyped-def]
        self.close()


__all__ = ["RunLogger", "serialize_for_logging"]
