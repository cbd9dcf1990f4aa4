import time
from pathlib import Path

import numpy as np
import pytest

from conftest import CHARGING_DOC, EMISSIONS_DOC
from rad.config import CorpusSettings, HeadingRule
from rad.corpus import (
    DirectoryEntry,
    DirectoryTree,
    Document,
    contiguous_average_linkage,
    document_title,
    extract_hierarchy,
    infer_hierarchy,
    ingest_corpus,
    locate_entry,
    segment,
    split_paragraphs,
)
from rad.errors import BoundaryMismatch


def _doc(body: str, doc_id: str = "doc.md") -> Document:
    return Document(doc_id=doc_id, title="t", body=body)


def _assert_lossless(doc: Document, chunks) -> None:
    assert "".join(chunk.text for chunk in chunks) == doc.body
    cursor = 0
    for ordinal, chunk in enumerate(chunks, start=1):
        assert chunk.ordinal == ordinal
        assert chunk.span == (cursor, len(chunk.text))
        assert chunk.chunk_id == f"{doc.doc_id}#{ordinal:04d}"
        cursor += len(chunk.text)


def test_split_paragraphs_partitions_body():
    body = "\n\nFirst paragraph.\n\n\nSecond one.\nStill second.\n\nThird."
    spans = split_paragraphs(body)
    assert len(spans) == 3
    assert spans[0][0] == 0
    assert sum(length for _, length in spans) == len(body)
    assert body[spans[1][0] :].startswith("Second one.")
    assert body[spans[2][0] :] == "Third."


def test_markdown_hierarchy_levels_and_anchors():
    doc = _doc(EMISSIONS_DOC, "emissions.md")
    tree = extract_hierarchy(doc)
    assert [root.heading_text for root in tree.roots] == ["Emission limits"]
    children = tree.roots[0].children
    assert [child.heading_text for child in children] == ["Phase-in schedule", "Enforcement"]
    assert all(child.level == 2 for child in children)
    assert children[0].anchor_offset == EMISSIONS_DOC.index("## Phase-in schedule")
    assert tree.roots[0].entry_id == "emissions.md:e1"


def test_numbered_hierarchy_and_preamble_chunk():
    doc = _doc(CHARGING_DOC, "charging.txt")
    tree = extract_hierarchy(doc)
    assert [root.heading_text for root in tree.roots] == ["Station density", "Grid capacity"]
    chunks = segment(doc, tree)
    _assert_lossless(doc, chunks)
    assert len(chunks) == 3
    assert chunks[0].hierarchy_path == ()
    assert chunks[0].text.startswith("Charging infrastructure")
    assert chunks[1].hierarchy_path == ("charging.txt:e1",)
    assert chunks[1].text.startswith("1 Station density")


def test_numbered_subsections_nest():
    body = "1 Scope\n\nText about scope here.\n\n1.1 Details\n\nDetail text goes here.\n\n2 Costs\n\nCost text.\n"
    tree = extract_hierarchy(_doc(body))
    assert [r.heading_text for r in tree.roots] == ["Scope", "Costs"]
    assert tree.roots[0].children[0].heading_text == "Details"
    assert tree.roots[0].children[0].level == 2


def test_prose_lines_starting_with_numbers_are_not_headings():
    body = "2024 was a record year for sales.\n\n3 stations opened.\n"
    assert extract_hierarchy(_doc(body)).is_empty


def test_headings_in_fenced_code_are_ignored():
    body = "# Real\n\nSome text here.\n\n```\n# not a heading\n```\n\n## Also real\n\nMore text.\n"
    tree = extract_hierarchy(_doc(body))
    headings = list(tree.headings().values())
    assert headings == ["Real", "Also real"]


def test_depth_is_capped_at_three_levels():
    body = "# A\n\n## B\n\n### C\n\n#### D\n\ntext under d\n"
    tree = extract_hierarchy(_doc(body))
    assert tree.max_depth == 3
    assert "D" not in tree.headings().values()
    chunks = segment(_doc(body), tree)
    assert chunks[-1].text.endswith("text under d\n")


def test_custom_heading_rule():
    settings = CorpusSettings(heading_rules=[HeadingRule(pattern=r"^Article (?P<title>[IVX]+)$", level=1)])
    body = "Article I\n\nFirst article text.\n\nArticle II\n\nSecond article text.\n"
    tree = extract_hierarchy(_doc(body), settings)
    assert [r.heading_text for r in tree.roots] == ["I", "II"]


def test_segment_markdown_paths_follow_tree():
    doc = _doc(EMISSIONS_DOC, "emissions.md")
    chunks = segment(doc, extract_hierarchy(doc))
    _assert_lossless(doc, chunks)
    assert [c.hierarchy_path for c in chunks] == [
        ("emissions.md:e1",),
        ("emissions.md:e1", "emissions.md:e2"),
        ("emissions.md:e1", "emissions.md:e3"),
    ]


def test_segment_reports_unlocatable_entries():
    body = "# Alpha section\n\nBody text for alpha.\n"
    doc = _doc(body)
    real = DirectoryEntry("doc.md:x1", "Alpha section", 1, 0)
    ghost = DirectoryEntry("doc.md:x2", "zz", 1, len(body) - 1)
    problems: list[BoundaryMismatch] = []
    chunks = segment(doc, DirectoryTree((real, ghost)), mismatches=problems)
    _assert_lossless(doc, chunks)
    assert len(chunks) == 1
    assert [p.entry_id for p in problems] == ["doc.md:x2"]


def test_tree_rejects_out_of_order_entries():
    with pytest.raises(ValueError):
        DirectoryTree((DirectoryEntry("d:e1", "B", 1, 10), DirectoryEntry("d:e2", "A", 1, 5)))


def test_locate_entry_short_sentence_falls_back_to_heading_line():
    body = "Intro text is long enough.\n\n# Go\n\nShort.\n"
    entry = DirectoryEntry("d:e1", "Go", 1, body.index("# Go"))
    assert locate_entry(body, entry, 1) == body.index("# Go")


def test_short_heading_mentioned_in_earlier_prose_keeps_its_own_line():
    body = "# Intro\n\nWe cover Scope later in detail.\n\n# Scope\n\nScope text here.\n"
    doc = _doc(body)
    chunks = segment(doc, extract_hierarchy(doc))
    _assert_lossless(doc, chunks)
    assert [c.text for c in chunks] == [
        "# Intro\n\nWe cover Scope later in detail.\n\n",
        "# Scope\n\nScope text here.\n",
    ]
    assert chunks[1].hierarchy_path == ("doc.md:e2",)


def test_stale_anchor_falls_back_to_a_heading_line_not_prose():
    body = "# Intro\n\nWe cover Scope later in detail.\n\n# Scope\n\nScope text here.\n"
    stale = DirectoryEntry("d:e2", "Scope", 1, 0)
    assert locate_entry(body, stale, 1) == body.index("# Scope")


def test_duplicate_first_sentence_anchors_after_previous_boundary():
    repeated = "Fleet rules apply to every depot."
    body = f"{repeated}\n\nDepot A section starts here.\n\n{repeated}\n\nClosing remarks.\n"
    doc = _doc(body)
    first = DirectoryEntry("d:g1", "A", 1, body.index("Depot A"), generated=True)
    second = DirectoryEntry("d:g2", "B", 1, body.rindex(repeated), generated=True)
    chunks = segment(doc, DirectoryTree((first, second)))
    _assert_lossless(doc, chunks)
    assert [c.span[0] for c in chunks] == [0, body.index("Depot A"), body.rindex(repeated)]
    assert chunks[0].hierarchy_path == ()


def test_numbered_list_inside_markdown_section_is_body_text():
    body = "# Rollout plan\n\n## Steps\n\n1. Survey Sites\n2. Build Stations\n\n## Budget\n\nCosts are shared.\n"
    tree = extract_hierarchy(_doc(body))
    assert [r.heading_text for r in tree.roots] == ["Rollout plan"]
    assert [c.heading_text for c in tree.roots[0].children] == ["Steps", "Budget"]
    assert "Survey Sites" not in tree.headings().values()
    chunks = segment(_doc(body), tree)
    assert chunks[1].text.startswith("## Steps") and "2. Build Stations" in chunks[1].text


def test_contiguous_average_linkage_merges_adjacent_only():
    distances = np.array(
        [
            [0.0, 0.1, 0.9, 0.05],
            [0.1, 0.0, 0.9, 0.9],
            [0.9, 0.9, 0.0, 0.9],
            [0.05, 0.9, 0.9, 0.0],
        ]
    )
    segments = contiguous_average_linkage(distances, range(4), 0.5)
    assert segments == [[0, 1], [2], [3]]


def test_infer_hierarchy_on_plain_text(embedder, gateway):
    body = (
        "Solar panels convert sunlight into electricity for homes.\n\n"
        "Solar panels on homes convert sunlight into cheap electricity.\n\n"
        "Municipal budgets fund road maintenance every spring.\n\n"
        "Road maintenance budgets are approved by the municipal council.\n"
    )
    doc = _doc(body, "plain.txt")
    tree = infer_hierarchy(doc, embedder, gateway)
    assert not tree.is_empty
    assert tree.max_depth <= 3
    assert all(entry.generated for entry, _ in tree.walk())
    assert all(entry.heading_text for entry, _ in tree.walk())
    chunks = segment(doc, tree)
    _assert_lossless(doc, chunks)
    assert len(chunks) == len(doc.paragraphs)
    assert all(chunk.hierarchy_path for chunk in chunks)


def test_infer_hierarchy_is_deterministic(embedder, gateway):
    body = "One topic sentence here.\n\nAnother topic entirely different.\n\nThird paragraph text.\n"
    first = infer_hierarchy(_doc(body), embedder, gateway)
    second = infer_hierarchy(_doc(body), embedder, gateway)
    assert first.to_list() == second.to_list()


class FixedEmbedder:
    """Returns preset rows, one per paragraph."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)
        self.dim = self.rows.shape[1]

    def embed(self, texts):
        assert len(texts) == len(self.rows)
        return self.rows.copy()


_SIX_PARAGRAPHS = "".join(f"Paragraph number {i} has its own sentence.\n\n" for i in range(6))


def test_infer_hierarchy_orthogonal_groups_give_two_roots(gateway):
    doc = _doc(_SIX_PARAGRAPHS, "six.txt")
    rows = [[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3
    tree = infer_hierarchy(doc, FixedEmbedder(rows), gateway)
    assert len(tree.roots) == 2
    assert [r.anchor_offset for r in tree.roots] == [doc.paragraphs[0][0], doc.paragraphs[3][0]]
    for root, first in zip(tree.roots, (0, 3)):
        (middle,) = root.children
        assert middle.level == 2
        assert [leaf.anchor_offset for leaf in middle.children] == [doc.paragraphs[first + i][0] for i in range(3)]
        assert all(leaf.level == 3 and not leaf.children for leaf in middle.children)
    chunks = segment(doc, tree)
    _assert_lossless(doc, chunks)
    assert len(chunks) == 6


def test_infer_hierarchy_identical_vectors_give_one_root(gateway):
    doc = _doc(_SIX_PARAGRAPHS, "six.txt")
    tree = infer_hierarchy(doc, FixedEmbedder([[0.6, 0.8]] * 6), gateway)
    assert len(tree.roots) == 1
    assert tree.max_depth == 3
    assert len(tree.roots[0].children[0].children) == 6


def test_infer_hierarchy_single_paragraph_is_one_root(gateway):
    doc = _doc("Only one paragraph in this file.\n", "one.txt")
    tree = infer_hierarchy(doc, FixedEmbedder([[1.0, 0.0]]), gateway)
    assert len(tree.roots) == 1
    assert tree.roots[0].children == ()
    assert [c.text for c in segment(doc, tree)] == [doc.body]


def test_document_title_prefers_first_level_one_heading():
    assert document_title(EMISSIONS_DOC, "emissions") == "Emission limits"
    assert document_title(CHARGING_DOC, "charging") == "charging"


def _mixed_corpus():
    docs = []
    for i in range(4):
        docs.append(
            f"# Report {i}\n\nOverview of report {i} and its aims.\n\n## Findings {i}\n\n"
            f"Findings for item {i} are summarised.\n\n```\n# code comment\n```\n\n## Outlook {i}\n\nNext steps follow.\n"
        )
    for i in range(3):
        docs.append(
            f"Preface line for document {i}.\n\n1 Background\n\nBackground text number {i}.\n\n"
            f"1.1 History\n\nHistory details {i}.\n\n2 Plan\n\nThe plan is described.\n"
        )
    for i in range(3):
        docs.append(
            f"Paragraph one of plain document {i} about buses.\n\n"
            f"Paragraph two of plain document {i} about trains.\n\n"
            f"Paragraph three of plain document {i} about bicycles.\n"
        )
    return docs


def test_lossless_segmentation_on_mixed_corpus(embedder, gateway):
    for n, body in enumerate(_mixed_corpus()):
        doc = _doc(body, f"doc{n}.md")
        tree = extract_hierarchy(doc)
        if tree.is_empty:
            tree = infer_hierarchy(doc, embedder, gateway)
        chunks = segment(doc, tree)
        _assert_lossless(doc, chunks)


def test_two_hundred_segments_ingest_quickly():
    sections = "".join(f"## Section {i}\n\nSentence about topic number {i} in detail.\n\n" for i in range(20))
    start = time.perf_counter()
    total = 0
    for n in range(10):
        doc = _doc(f"# Document {n}\n\nIntro sentence for the document.\n\n" + sections, f"d{n}.md")
        chunks = segment(doc, extract_hierarchy(doc))
        _assert_lossless(doc, chunks)
        total += len(chunks)
    assert total >= 200
    assert time.perf_counter() - start < 5.0


def test_ingest_corpus_reports_per_document_counts(corpus_dir, embedder, gateway):
    corpus = ingest_corpus(corpus_dir, embedder, gateway)
    assert [item.document.doc_id for item in corpus.documents] == ["charging.txt", "emissions.md"]
    assert [len(item.chunks) for item in corpus.documents] == [3, 3]
    assert not corpus.failures
    assert len(corpus.chunks) == 6


def test_ingest_corpus_skips_unreadable_and_empty(corpus_dir: Path, embedder, gateway):
    (corpus_dir / "broken.md").write_bytes(b"\xff\xfe\x00 not utf8 \xff")
    (corpus_dir / "empty.txt").write_text("   \n", encoding="utf-8")
    (corpus_dir / "ignored.pdf").write_text("binary", encoding="utf-8")
    corpus = ingest_corpus(corpus_dir, embedder, gateway)
    assert len(corpus.documents) == 2
    reasons = {failure.path: failure.reason for failure in corpus.failures}
    assert set(reasons) == {"broken.md", "empty.txt"}
    assert reasons["empty.txt"] == "empty document"


def test_document_rejects_bad_paragraphs():
    with pytest.raises(ValueError):
        Document("x", "t", "abc", paragraphs=((0, 1),))
