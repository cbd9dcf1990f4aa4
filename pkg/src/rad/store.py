"""On-disk artifacts: chunk store, manifest, vector index, model and report files."""
from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

from .config import get_logger
from .corpus import Chunk, Corpus, DirectoryTree
from .decision import DecisionReport, HierarchicalModel
from .errors import StoreError
from .index import VectorIndex, load_index, save_index

_logger = get_logger("store")

STORE_SCHEMA_VERSION = "rad-store/1"
CHUNKS_FILE = "chunks.jsonl"
MANIFEST_FILE = "manifest.json"
INDEX_FILE = "index.json"


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def dump_json(data: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_json(path: Path, what: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise StoreError(f"{what} not found: {path}") from exc
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreError(f"cannot read {what} {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise StoreError(f"{what} {path} must hold a JSON object")
    return data


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_store(
    root: Path,
    corpus: Corpus,
    index: VectorIndex,
    *,
    embedding: Mapping[str, Any],
    created_at: str | None = None,
) -> Path:
    """Write ``chunks.jsonl``, ``index.json`` and ``manifest.json`` under ``root``; return the manifest path."""

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with (root / CHUNKS_FILE).open("w", encoding="utf-8") as handle:
        for chunk in corpus.chunks:
            handle.write(json.dumps(chunk.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    save_index(index, root / INDEX_FILE)

    manifest: Dict[str, Any] = {
        "schema_version": STORE_SCHEMA_VERSION,
        "documents": [
            {
                "doc_id": item.document.doc_id,
                "title": item.document.title,
                "p_n": len(item.chunks),
                "inferred": item.inferred,
                "tree": item.tree.to_list(),
                "mismatches": [
                    {"entry_id": m.entry_id, "search_text": m.search_text} for m in item.mismatches
                ],
            }
            for item in corpus.documents
        ],
        "failures": [{"path": f.path, "reason": f.reason} for f in corpus.failures],
        "embedding": dict(embedding),
        "chunks": len(corpus.chunks),
    }
    if created_at is not None:
        manifest["created_at"] = created_at
    path = root / MANIFEST_FILE
    dump_json(manifest, path)
    _logger.info("wrote store root=%s documents=%d chunks=%d", root, len(corpus.documents), len(corpus.chunks))
    return path


class ChunkStore:
    """Read side of an ingested store; resolves chunk ids to text and heading paths."""

    def __init__(self, root: Path, chunks: Sequence[Chunk], manifest: Mapping[str, Any], index: VectorIndex) -> None:
        self.root = Path(root)
        self.manifest = dict(manifest)
        self.index = index
        self._chunks: Dict[str, Chunk] = {chunk.chunk_id: chunk for chunk in chunks}
        self._order = [chunk.chunk_id for chunk in chunks]
        self._headings: Dict[str, Dict[str, str]] = {
            doc["doc_id"]: DirectoryTree.from_list(doc["tree"]).headings() for doc in self.manifest["documents"]
        }

    @classmethod
    def open(cls, root: Path) -> "ChunkStore":
        root = Path(root)
        manifest = load_json(root / MANIFEST_FILE, "manifest")
        if manifest.get("schema_version") != STORE_SCHEMA_VERSION:
            raise StoreError(f"unsupported store schema {manifest.get('schema_version')!r}")
        chunks: List[Chunk] = []
        try:
            with (root / CHUNKS_FILE).open(encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        chunks.append(Chunk.from_dict(json.loads(line)))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"cannot read chunk store {root / CHUNKS_FILE}: {exc}") from exc
        index = load_index(root / INDEX_FILE)
        if list(index.chunk_ids) != [chunk.chunk_id for chunk in chunks]:
            raise StoreError("vector index does not match the chunk store")
        return cls(root, chunks, manifest, index)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_FILE

    @property
    def manifest_sha256(self) -> str:
        return file_sha256(self.manifest_path)

    @property
    def chunks(self) -> List[Chunk]:
        return [self._chunks[chunk_id] for chunk_id in self._order]

    def __len__(self) -> int:
        return len(self._order)

    def get(self, chunk_id: str) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError as exc:
            raise StoreError(f"unknown chunk id {chunk_id!r}") from exc

    def heading_path(self, chunk_id: str) -> List[str]:
        chunk = self.get(chunk_id)
        headings = self._headings.get(chunk.doc_id, {})
        return [headings[entry_id] for entry_id in chunk.hierarchy_path if entry_id in headings]


def model_digest(model: HierarchicalModel) -> str:
    payload = json.dumps(model.to_dict(), sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_model(model: HierarchicalModel, path: Path) -> Path:
    dump_json(model.to_dict(), Path(path))
    return Path(path)


def read_model(path: Path) -> HierarchicalModel:
    return HierarchicalModel.from_dict(load_json(Path(path), "model file"))


def write_report(report: DecisionReport, path: Path, *, views: bool = True) -> List[Path]:
    """Write the report JSON and, by default, its markdown and HTML views next to it."""

    from .render import render_html, render_markdown

    path = Path(path)
    dump_json(report.to_dict(), path)
    written = [path]
    if views:
        md_path = path.with_suffix(".md")
        md_path.write_text(render_markdown(report), encoding="utf-8")
        html_path = path.with_suffix(".html")
        html_path.write_text(render_html(report), encoding="utf-8")
        written += [md_path, html_path]
    return written


def read_report(path: Path) -> DecisionReport:
    return DecisionReport.from_dict(load_json(Path(path), "report file"))


__all__ = [
    "STORE_SCHEMA_VERSION",
    "ChunkStore",
    "utc_timestamp",
    "dump_json",
    "load_json",
    "file_sha256",
    "write_store",
    "model_digest",
    "write_model",
    "read_model",
    "write_report",
    "read_report",
]
