"""Document ingestion: content hierarchy (extracted or inferred) and lossless chunking."""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .config import CorpusSettings, HeadingRule, get_logger
from .errors import BoundaryMismatch, EmbeddingError
from .gateway import ModelGateway, PromptTask, TaskKind
from .gateway.tasks import TitleResponse
from .text import first_sentence

if TYPE_CHECKING:
    from .index import EmbeddingProvider

_logger = get_logger("corpus")

MAX_DEPTH = 3
INGESTIBLE_SUFFIXES = (".md", ".txt")

_PARAGRAPH_BREAK_RE = re.compile(r"(?:\n[ \t]*){2,}")
_MARKDOWN_HEADING_RE = re.compile(r"^(?P<hashes>#{1,6})[ \t]+(?P<title>.+?)[ \t]*#*[ \t]*$")
_NUMBERED_HEADING_RE = re.compile(r"^(?P<number>\d{1,2}(?:\.\d{1,3}){0,5})\.?[ \t]+(?P<title>[A-Z][^\n]{0,79})$")
_FENCE_RE = re.compile(r"^(```|~~~)")


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    paragraphs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if not self.paragraphs:
            object.__setattr__(self, "paragraphs", split_paragraphs(self.body))
        cursor = 0
        for offset, length in self.paragraphs:
            if offset != cursor or length <= 0:
                raise ValueError(f"{self.doc_id}: paragraphs must partition the body in order")
            cursor = offset + length
        if cursor != len(self.body):
            raise ValueError(f"{self.doc_id}: paragraphs do not cover the body")

    def paragraph_text(self, index: int) -> str:
        offset, length = self.paragraphs[index]
        return self.body[offset : offset + length]


def split_paragraphs(body: str) -> Tuple[Tuple[int, int], ...]:
    """Paragraph spans that partition ``body``; a break belongs to the paragraph before it."""

    if not body:
        return ()
    starts = [0]
    for match in _PARAGRAPH_BREAK_RE.finditer(body):
        boundary = match.end()
        if boundary >= len(body) or not body[:boundary].strip():
            continue
        starts.append(boundary)
    ends = starts[1:] + [len(body)]
    return tuple((start, end - start) for start, end in zip(starts, ends))


@dataclass(frozen=True)
class DirectoryEntry:
    entry_id: str
    heading_text: str
    level: int
    anchor_offset: int
    generated: bool = False
    children: Tuple["DirectoryEntry", ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= self.level <= MAX_DEPTH:
            raise ValueError(f"entry {self.entry_id} level {self.level} outside 1..{MAX_DEPTH}")
        for child in self.children:
            if child.level != self.level + 1:
                raise ValueError(f"child {child.entry_id} level must be {self.level + 1}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entry_id": self.entry_id,
            "heading_text": self.heading_text,
            "level": self.level,
            "anchor_offset": self.anchor_offset,
            "generated": self.generated,
            "children": [child.to_dict() for child in self.children],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DirectoryEntry":
        return cls(
            entry_id=str(data["entry_id"]),
            heading_text=str(data["heading_text"]),
            level=int(data["level"]),
            anchor_offset=int(data["anchor_offset"]),
            generated=bool(data.get("generated", False)),
            children=tuple(cls.from_dict(child) for child in data.get("children", [])),
        )


@dataclass(frozen=True)
class DirectoryTree:
    roots: Tuple[DirectoryEntry, ...] = ()

    def __post_init__(self) -> None:
        previous: DirectoryEntry | None = None
        for entry, path in self.walk():
            if previous is not None:
                shares_parent_anchor = len(path) >= 2 and path[-2] == previous.entry_id
                if entry.anchor_offset < previous.anchor_offset or (
                    entry.anchor_offset == previous.anchor_offset and not shares_parent_anchor
                ):
                    raise ValueError(f"entry {entry.entry_id} breaks document order")
            previous = entry

    @property
    def max_depth(self) -> int:
        return max((entry.level for entry, _ in self.walk()), default=0)

    @property
    def is_empty(self) -> bool:
        return not self.roots

    def walk(self) -> Iterator[Tuple[DirectoryEntry, Tuple[str, ...]]]:
        """Pre-order traversal yielding ``(entry, path of entry ids from the root)``."""

        def _visit(entry: DirectoryEntry, prefix: Tuple[str, ...]) -> Iterator[Tuple[DirectoryEntry, Tuple[str, ...]]]:
            path = prefix + (entry.entry_id,)
            yield entry, path
            for child in entry.children:
                yield from _visit(child, path)

        for root in self.roots:
            yield from _visit(root, ())

    def headings(self) -> Dict[str, str]:
        return {entry.entry_id: entry.heading_text for entry, _ in self.walk()}

    def to_list(self) -> List[Dict[str, Any]]:
        return [root.to_dict() for root in self.roots]

    @classmethod
    def from_list(cls, data: Sequence[Dict[str, Any]]) -> "DirectoryTree":
        return cls(tuple(DirectoryEntry.from_dict(item) for item in data))


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    hierarchy_path: Tuple[str, ...]
    span: Tuple[int, int]
    text: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "hierarchy_path": list(self.hierarchy_path),
            "span": list(self.span),
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Chunk":
        offset, length = data["span"]
        return cls(
            chunk_id=str(data["chunk_id"]),
            doc_id=str(data["doc_id"]),
            ordinal=int(data["ordinal"]),
            hierarchy_path=tuple(str(item) for item in data["hierarchy_path"]),
            span=(int(offset), int(length)),
            text=str(data["text"]),
        )


# ---- Hierarchy extraction ----------------------------------------------------
@dataclass
class _OpenHeading:
    raw_level: int
    entry_id: str
    heading_text: str
    anchor: int
    depth: int
    children: List["_OpenHeading"] = field(default_factory=list)

    def freeze(self) -> DirectoryEntry:
        return DirectoryEntry(
            entry_id=self.entry_id,
            heading_text=self.heading_text,
            level=self.depth,
            anchor_offset=self.anchor,
            children=tuple(child.freeze() for child in self.children),
        )


def _match_heading(line: str, settings: CorpusSettings, numbered: bool = True) -> Tuple[int, str] | None:
    if settings.markdown_headings:
        match = _MARKDOWN_HEADING_RE.match(line)
        if match:
            return len(match.group("hashes")), match.group("title").strip()
    if numbered and settings.numbered_headings:
        match = _NUMBERED_HEADING_RE.match(line)
        if match and not match.group("title").rstrip().endswith((".", ",", ";", ":")):
            return match.group("number").count(".") + 1, match.group("title").strip()
    for rule in settings.heading_rules:
        match = _compiled(rule).match(line)
        if match:
            return rule.level, match.group("title").strip()
    return None


_RULE_CACHE: Dict[str, re.Pattern[str]] = {}


def _compiled(rule: HeadingRule) -> re.Pattern[str]:
    pattern = _RULE_CACHE.get(rule.pattern)
    if pattern is None:
        pattern = re.compile(rule.pattern)
        if "title" not in pattern.groupindex:
            raise ValueError(f"heading rule {rule.pattern!r} needs a named group 'title'")
        _RULE_CACHE[rule.pattern] = pattern
    return pattern


def _content_lines(body: str) -> Iterator[Tuple[int, str]]:
    """``(line offset, line text)`` for non-blank lines outside fenced blocks."""

    in_fence = False
    offset = 0
    for line in body.splitlines(keepends=True):
        line_start = offset
        offset += len(line)
        content = line.rstrip("\r\n")
        if _FENCE_RE.match(content.lstrip()):
            in_fence = not in_fence
            continue
        if in_fence or not content.strip():
            continue
        yield line_start, content


def extract_hierarchy(doc: Document, settings: CorpusSettings | None = None) -> DirectoryTree:
    """Parse headings into a tree capped at three levels.

    Headings nested deeper than three levels are folded into their level-3
    ancestor (no entry is created). A document with markdown headings uses
    them alone; its numbered lines are list items, not headings. An empty
    tree means "no structure found".
    """

    settings = settings or CorpusSettings()
    lines = list(_content_lines(doc.body))
    numbered = not (settings.markdown_headings and any(_MARKDOWN_HEADING_RE.match(content) for _, content in lines))
    roots: List[_OpenHeading] = []
    stack: List[_OpenHeading] = []
    counter = 0
    for line_start, content in lines:
        matched = _match_heading(content, settings, numbered)
        if matched is None:
            continue
        raw_level, title = matched
        if not title:
            continue
        while stack and stack[-1].raw_level >= raw_level:
            stack.pop()
        depth = len(stack) + 1
        if depth > MAX_DEPTH:
            continue
        counter += 1
        node = _OpenHeading(raw_level, f"{doc.doc_id}:e{counter}", title, line_start, depth)
        (stack[-1].children if stack else roots).append(node)
        stack.append(node)
    return DirectoryTree(tuple(node.freeze() for node in roots))


# ---- Hierarchy inference -------------------------------------------------------
def _cosine_distances(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = vectors / safe[:, None]
    unit[norms == 0] = 0.0
    return 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)


def contiguous_average_linkage(distances: np.ndarray, members: Sequence[int], threshold: float) -> List[List[int]]:
    """Merge adjacent runs of ``members`` by average linkage while the best merge is <= ``threshold``.

    Ties go to the lower paragraph index, so results depend only on the distances.
    """

    segments: List[List[int]] = [[m] for m in members]
    while len(segments) > 1:
        best_pos = -1
        best_dist = np.inf
        for pos in range(len(segments) - 1):
            left, right = segments[pos], segments[pos + 1]
            dist = float(distances[np.ix_(left, right)].mean())
            if dist < best_dist - 1e-12:
                best_pos, best_dist = pos, dist
        if best_dist > threshold:
            break
        segments[best_pos : best_pos + 2] = [segments[best_pos] + segments[best_pos + 1]]
    return segments


def infer_hierarchy(
    doc: Document,
    embedder: "EmbeddingProvider",
    gateway: ModelGateway,
    settings: CorpusSettings | None = None,
) -> DirectoryTree:
    """Cluster paragraphs into at most three levels and title every entry through the gateway.

    Level 1 and level 2 are contiguous clusters cut at the two configured
    thresholds and paragraphs are level-3 leaves, so every multi-paragraph
    cluster nests three deep even when its level-2 cut yields one part. A
    single-paragraph cluster is itself the leaf.
    """

    settings = settings or CorpusSettings()
    count = len(doc.paragraphs)
    if count == 0:
        return DirectoryTree()
    vectors = np.asarray(embedder.embed([doc.paragraph_text(i) for i in range(count)]), dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != count or not np.all(np.isfinite(vectors)):
        raise EmbeddingError(f"{doc.doc_id}: embedder returned unusable paragraph vectors")
    distances = _cosine_distances(vectors)
    counter = 0

    def _title(members: Sequence[int]) -> str:
        text = "\n\n".join(doc.paragraph_text(i) for i in members)[:1500]
        response = gateway.complete(PromptTask(TaskKind.GENERATE_TITLE, {"text": text}))
        assert isinstance(response.value, TitleResponse)
        return response.value.title

    def _build(members: Sequence[int], level: int) -> DirectoryEntry:
        nonlocal counter
        counter += 1
        entry_id = f"{doc.doc_id}:g{counter}"
        heading = _title(members)
        children: Tuple[DirectoryEntry, ...] = ()
        if len(members) > 1:
            if level == 1:
                parts = contiguous_average_linkage(distances, members, settings.level2_threshold)
            else:
                parts = [[m] for m in members]
            children = tuple(_build(part, level + 1) for part in parts)
        return DirectoryEntry(
            entry_id=entry_id,
            heading_text=heading,
            level=level,
            anchor_offset=doc.paragraphs[members[0]][0],
            generated=True,
            children=children,
        )

    clusters = contiguous_average_linkage(distances, range(count), settings.level1_threshold)
    return DirectoryTree(tuple(_build(cluster, 1) for cluster in clusters))


# ---- Segmentation --------------------------------------------------------------
def _anchor_holds(body: str, entry: DirectoryEntry, search_from: int) -> bool:
    if not search_from <= entry.anchor_offset < len(body):
        return False
    if entry.generated:
        return True
    line_end = body.find("\n", entry.anchor_offset)
    line = body[entry.anchor_offset : line_end if line_end >= 0 else len(body)]
    return entry.heading_text in line


def _heading_line_re(heading_text: str) -> re.Pattern[str]:
    # The heading must close its line; an optional short marker ("##", "2.1", "Article") may precede it.
    return re.compile(rf"^(?:[^\n]{{0,40}}[ \t])?{re.escape(heading_text)}[ \t#]*$", re.MULTILINE)


def locate_entry(body: str, entry: DirectoryEntry, search_from: int, min_chars: int = 10) -> int | None:
    """Boundary offset for ``entry`` at or after ``search_from``, or ``None``.

    The entry's own anchor wins when it still points at its heading line (or,
    for generated entries, a line start). Otherwise the first sentence is
    matched forward from ``search_from``; a sentence shorter than ``min_chars``
    falls back to a line that ends with the heading text.
    """

    if _anchor_holds(body, entry, search_from):
        return entry.anchor_offset
    search_text = first_sentence(body[entry.anchor_offset :]) if 0 <= entry.anchor_offset < len(body) else ""
    if len(search_text) >= min_chars:
        found = body.find(search_text, search_from)
        return found if found >= 0 else None
    if entry.generated or not entry.heading_text.strip():
        return None
    match = _heading_line_re(entry.heading_text.strip()).search(body, search_from)
    return match.start() if match else None


def segment(
    doc: Document,
    tree: DirectoryTree,
    *,
    min_chars: int = 10,
    mismatches: List[BoundaryMismatch] | None = None,
) -> List[Chunk]:
    """Split ``doc`` at the first sentence of each entry, scanning forward only.

    Entries that cannot be located are skipped and reported through
    ``mismatches``; the chunks always concatenate back to the body.
    """

    boundaries: List[Tuple[int, Tuple[str, ...], DirectoryEntry]] = []
    search_from = 0
    for entry, path in tree.walk():
        if boundaries:
            last_offset, last_path, last_entry = boundaries[-1]
            if entry.anchor_offset == last_entry.anchor_offset and path[:-1] == last_path:
                boundaries[-1] = (last_offset, path, entry)
                continue
        position = locate_entry(doc.body, entry, search_from, min_chars)
        if position is None:
            in_range = entry.anchor_offset < len(doc.body)
            search_text = first_sentence(doc.body[entry.anchor_offset :])[:60] if in_range else ""
            problem = BoundaryMismatch(doc.doc_id, entry.entry_id, search_text or entry.heading_text)
            _logger.warning("boundary_mismatch doc=%s entry=%s", doc.doc_id, entry.entry_id)
            if mismatches is not None:
                mismatches.append(problem)
            continue
        boundaries.append((position, path, entry))
        search_from = position + 1

    cuts: List[Tuple[int, Tuple[str, ...]]] = [(offset, path) for offset, path, _ in boundaries]
    if not cuts or cuts[0][0] > 0:
        cuts.insert(0, (0, ()))
    chunks: List[Chunk] = []
    for ordinal, (start, path) in enumerate(cuts, start=1):
        end = cuts[ordinal][0] if ordinal < len(cuts) else len(doc.body)
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{ordinal:04d}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                hierarchy_path=path,
                span=(start, end - start),
                text=doc.body[start:end],
            )
        )
    return chunks


# ---- Corpus ingestion ------------------------------------------------------------
@dataclass(frozen=True)
class IngestedDocument:
    document: Document
    path: str
    tree: DirectoryTree
    chunks: Tuple[Chunk, ...]
    inferred: bool
    mismatches: Tuple[BoundaryMismatch, ...] = ()


@dataclass(frozen=True)
class IngestFailure:
    path: str
    reason: str


@dataclass(frozen=True)
class Corpus:
    documents: Tuple[IngestedDocument, ...]
    failures: Tuple[IngestFailure, ...] = ()

    @property
    def chunks(self) -> List[Chunk]:
        return [chunk for doc in self.documents for chunk in doc.chunks]


def document_title(body: str, fallback: str) -> str:
    for line in body.splitlines():
        match = _MARKDOWN_HEADING_RE.match(line)
        if match and len(match.group("hashes")) == 1:
            return match.group("title").strip()
    return fallback


def ingest_document(
    doc: Document,
    path: str,
    embedder: "EmbeddingProvider",
    gateway: ModelGateway,
    settings: CorpusSettings,
) -> IngestedDocument:
    tree = extract_hierarchy(doc, settings)
    inferred = tree.is_empty
    if inferred:
        tree = infer_hierarchy(doc, embedder, gateway, settings)
    problems: List[BoundaryMismatch] = []
    chunks = segment(doc, tree, min_chars=settings.min_sentence_chars, mismatches=problems)
    _logger.info(
        "ingested doc=%s p_n=%d inferred=%s mismatches=%d", doc.doc_id, len(chunks), inferred, len(problems)
    )
    return IngestedDocument(doc, path, tree, tuple(chunks), inferred, tuple(problems))


def ingest_corpus(
    corpus_dir: Path,
    embedder: "EmbeddingProvider",
    gateway: ModelGateway,
    settings: CorpusSettings | None = None,
    *,
    max_workers: int = 4,
) -> Corpus:
    """Ingest every ``.txt``/``.md`` file under ``corpus_dir``; bad files become failures."""

    settings = settings or CorpusSettings()
    root = Path(corpus_dir)
    failures: List[IngestFailure] = []
    loaded: List[Tuple[Document, str]] = []
    for path in sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in INGESTIBLE_SUFFIXES):
        rel = path.relative_to(root).as_posix()
        try:
            body = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            _logger.warning("unreadable file=%s error=%s", rel, exc)
            failures.append(IngestFailure(rel, f"unreadable: {exc}"))
            continue
        if not body.strip():
            failures.append(IngestFailure(rel, "empty document"))
            continue
        loaded.append((Document(doc_id=rel, title=document_title(body, path.stem), body=body), str(path)))

    def _run(item: Tuple[Document, str]) -> IngestedDocument:
        return ingest_document(item[0], item[1], embedder, gateway, settings)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        documents = tuple(pool.map(_run, loaded))
    return Corpus(documents, tuple(failures))


__all__ = [
    "MAX_DEPTH",
    "Document",
    "DirectoryEntry",
    "DirectoryTree",
    "Chunk",
    "IngestedDocument",
    "IngestFailure",
    "Corpus",
    "split_paragraphs",
    "extract_hierarchy",
    "contiguous_average_linkage",
    "infer_hierarchy",
    "locate_entry",
    "segment",
    "document_title",
    "ingest_document",
    "ingest_corpus",
]
