"""End-to-end orchestration: corpus -> store -> hierarchical model -> decision report."""
from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Tuple

from . import __version__
from .config import RadConfig, get_logger
from .corpus import ingest_corpus
from .criteria import check_traceable, extract_criteria, extract_relations, flag_duplicate_criteria
from .decision import (
    Alternative,
    DecisionReport,
    DecisionRequest,
    HierarchicalModel,
    aggregate,
    check_consistency,
    generate_report,
    score_alternatives,
    verify_report,
)
from .errors import InputError, PipelineError, RadError, StoreError
from .gateway import PROMPT_VERSION, ModelGateway, build_gateway
from .index import EmbeddingProvider, build_embedder, build_index, top_k
from .mcdm import ism_partition, transitive_closure
from .panel import assign_domains, build_weights
from .runlog import RunLogger
from .store import ChunkStore, load_json, model_digest, read_model, utc_timestamp, write_model, write_report, write_store

_logger = get_logger("pipeline")


@dataclass(frozen=True)
class IngestSummary:
    manifest_path: Path
    documents: List[Dict[str, Any]]
    failures: List[Dict[str, str]]
    chunks: int


@dataclass(frozen=True)
class BuildSummary:
    model_path: Path | None
    k: int
    requested_top_k: int
    levels: List[List[int]]
    top_weights: List[Tuple[int, str, float]]
    level_cr: List[float]
    weight_sum: float
    warnings: List[str] = field(default_factory=list)


@contextlib.contextmanager
def _step(name: str, log: RunLogger | None) -> Iterator[None]:
    if log is not None:
        log.step(name, status="start")
    try:
        yield
    except (InputError, PipelineError):
        raise
    except RadError as exc:
        if log is not None:
            log.step(name, status="failed", error=str(exc))
        raise PipelineError(name, exc) from exc
    if log is not None:
        log.step(name, status="done")


def _created_at(config: RadConfig) -> str | None:
    return None if config.reproducible_output else utc_timestamp()


def ingest(
    corpus_dir: Path,
    config: RadConfig,
    *,
    store_dir: Path | None = None,
    embedder: EmbeddingProvider | None = None,
    gateway: ModelGateway | None = None,
    log: RunLogger | None = None,
) -> IngestSummary:
    """Segment every document under ``corpus_dir``, embed the chunks and write the store."""

    root = Path(corpus_dir)
    if not root.is_dir():
        raise InputError(f"corpus directory not found: {root}")
    embedder = embedder or build_embedder(config)
    gateway = gateway or build_gateway(config)
    store_dir = Path(store_dir or config.paths.store)

    with _step("segment", log):
        corpus = ingest_corpus(root, embedder, gateway, config.corpus, max_workers=config.max_workers)
    for failure in corpus.failures:
        _logger.warning("skipped file=%s reason=%s", failure.path, failure.reason)
    if not corpus.documents:
        raise InputError("no ingestible documents")
    with _step("embed", log):
        index = build_index(
            corpus.chunks, embedder, batch_size=config.embedding.batch_size, max_workers=config.max_workers
        )
    embedding_info = {
        "backend": config.embedding.backend,
        "model": config.embedding.model if config.embedding.backend == "remote" else "mock",
        "dim": index.dim,
    }
    with _step("write_store", log):
        manifest_path = write_store(store_dir, corpus, index, embedding=embedding_info, created_at=_created_at(config))

    documents = [
        {
            "doc_id": item.document.doc_id,
            "p_n": len(item.chunks),
            "inferred": item.inferred,
            "mismatches": [m.entry_id for m in item.mismatches],
        }
        for item in corpus.documents
    ]
    return IngestSummary(
        manifest_path=manifest_path,
        documents=documents,
        failures=[{"path": f.path, "reason": f.reason} for f in corpus.failures],
        chunks=len(corpus.chunks),
    )


def read_request_file(path: Path) -> Dict[str, Any]:
    """Load ``{d, options: [{id, title, text}]}``; options may be absent."""

    try:
        data = load_json(Path(path), "request file")
    except StoreError as exc:
        raise InputError(str(exc)) from exc
    return data


def build_model(
    store_dir: Path,
    d: str,
    config: RadConfig,
    *,
    embedder: EmbeddingProvider | None = None,
    gateway: ModelGateway | None = None,
    log: RunLogger | None = None,
) -> Tuple[HierarchicalModel, BuildSummary]:
    """Retrieve, extract criteria, judge relations, partition and weight."""

    if not d.strip():
        raise InputError("decision description d must be non-empty")
    try:
        store = ChunkStore.open(Path(store_dir))
    except StoreError as exc:
        raise InputError(str(exc)) from exc
    embedder = embedder or build_embedder(config)
    gateway = gateway or build_gateway(config)
    warnings: List[str] = []

    k = min(config.top_k, len(store))
    if k < config.top_k:
        message = f"top_k={config.top_k} exceeds the {len(store)} stored chunks; using k={k}"
        _logger.warning(message)
        warnings.append(message)

    with _step("retrieve", log):
        hits = top_k(store.index, d, k, embedder)
    with _step("extract_criteria", log):
        criteria = extract_criteria(hits, d, gateway, store, max_workers=config.max_workers)
        check_traceable(criteria, store)
    duplicates = flag_duplicate_criteria(criteria)
    if duplicates:
        warnings.append(f"near-duplicate criteria: {duplicates}")
    with _step("extract_relations", log):
        relations = extract_relations(criteria, d, gateway, max_workers=config.max_workers)
    with _step("partition", log):
        reachability = transitive_closure(relations.cells)
        partition = ism_partition(reachability)
    with _step("weight", log):
        roles = assign_domains(d, gateway, config.panel.experts)
        weights, transcript = build_weights(
            partition,
            criteria,
            roles,
            d,
            gateway,
            min_rationale_chars=config.panel.min_rationale_chars,
            ri_table=config.mcdm.random_index,
            cr_threshold=config.mcdm.cr_threshold,
            max_workers=config.max_workers,
        )

    provenance: Dict[str, Any] = {
        "rad_version": __version__,
        "manifest_sha256": store.manifest_sha256,
        "prompt_version": PROMPT_VERSION,
        "gateway_backend": gateway.backend_name,
        "embedding": store.manifest.get("embedding", {}),
        "config": config.snapshot(),
        "retrieval": [{"chunk_id": chunk_id, "score": score} for chunk_id, score in hits.hits],
    }
    created_at = _created_at(config)
    if created_at is not None:
        provenance["created_at"] = created_at

    model = HierarchicalModel(
        d=d,
        criteria=tuple(criteria),
        relations=relations,
        reachability=reachability,
        partition=partition,
        weights=weights,
        transcript=transcript,
        duplicates=tuple(duplicates),
        provenance=provenance,
    )
    ordered = sorted(range(len(criteria)), key=lambda i: (-weights.weights[i], i))
    summary = BuildSummary(
        model_path=None,
        k=len(criteria),
        requested_top_k=config.top_k,
        levels=partition.to_list(),
        top_weights=[(i, criteria[i].name, weights.weights[i]) for i in ordered[:5]],
        level_cr=[record.consistency.cr for record in transcript.levels],
        weight_sum=sum(weights.weights),
        warnings=warnings,
    )
    _logger.info("built model k=%d levels=%d", summary.k, len(summary.levels))
    return model, summary


def decide(
    model: HierarchicalModel,
    options: List[Mapping[str, Any]],
    config: RadConfig,
    *,
    store: ChunkStore | None = None,
    corpus_ref: str = "",
    gateway: ModelGateway | None = None,
    log: RunLogger | None = None,
) -> DecisionReport:
    """Score, check, aggregate, rank and write prose for ``options`` under ``model``."""

    try:
        request = DecisionRequest(model.d, tuple(Alternative.from_dict(item) for item in options), corpus_ref)
    except ValueError as exc:
        raise InputError(f"invalid options: {exc}") from exc
    gateway = gateway or build_gateway(config)

    model_ref: Dict[str, Any] = {
        "model_sha256": model_digest(model),
        "manifest_sha256": model.provenance.get("manifest_sha256", ""),
    }
    if store is not None and store.manifest_sha256 != model_ref["manifest_sha256"]:
        _logger.warning("store manifest differs from the one the model was built on")

    with _step("score", log):
        scores = score_alternatives(request.options, model, gateway, max_workers=config.max_workers)
    with _step("check_consistency", log):
        reports = check_consistency(scores, ri_table=config.mcdm.random_index, threshold=config.mcdm.cr_threshold)
    totals = aggregate(scores, model.weights)
    with _step("report", log):
        report = generate_report(
            request,
            model,
            scores,
            totals,
            gateway,
            chunks=store,
            consistency_reports=reports,
            model_ref=model_ref,
            created_at=_created_at(config),
        )
        verify_report(report, ri_table=config.mcdm.random_index, threshold=config.mcdm.cr_threshold)
    return report


def open_store_if_present(store_dir: Path) -> ChunkStore | None:
    try:
        return ChunkStore.open(Path(store_dir))
    except StoreError as exc:
        _logger.warning("chunk store unavailable (%s); trace excerpts will be empty", exc)
        return None


def run(
    corpus_dir: Path,
    request_file: Path,
    config: RadConfig,
    *,
    log: RunLogger | None = None,
) -> Tuple[IngestSummary, BuildSummary, DecisionReport]:
    """Ingest, build and decide in one go, writing every artifact to ``config.paths``."""

    data = read_request_file(request_file)
    if not data.get("options"):
        raise InputError(f"request file {request_file} lists no options")
    embedder = build_embedder(config)
    gateway = build_gateway(config)
    ingested = ingest(corpus_dir, config, embedder=embedder, gateway=gateway, log=log)
    model, built = build_model(
        config.paths.store, str(data.get("d", "")), config, embedder=embedder, gateway=gateway, log=log
    )
    write_model(model, config.paths.model)
    built = dataclasses.replace(built, model_path=Path(config.paths.model))
    store = ChunkStore.open(config.paths.store)
    report = decide(
        model,
        list(data["options"]),
        config,
        store=store,
        corpus_ref=str(ingested.manifest_path),
        gateway=gateway,
        log=log,
    )
    write_report(report, config.paths.report)
    return ingested, built, report


__all__ = [
    "IngestSummary",
    "BuildSummary",
    "ingest",
    "read_request_file",
    "build_model",
    "decide",
    "open_store_if_present",
    "run",
    "read_model",
]
