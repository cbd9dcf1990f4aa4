"""Command-line surface: ``rad ingest | build | decide | trace | run``.

Exit codes: 0 success, 1 pipeline failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Any, Dict, Sequence

from .config import RadConfig, load_config
from .errors import ConfigError, InputError, PipelineError, RadError, StoreError
from .pipeline import BuildSummary, IngestSummary, build_model, decide, ingest, open_store_if_present, read_request_file, run
from .render import summary_text, trace_criterion_text, trace_option_text
from .runlog import RunLogger
from .store import read_model, read_report, write_model, write_report

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="Mock backend seed")
    parser.add_argument("--top-k", dest="top_k", type=int, default=None, help="Number of chunks to retrieve")
    parser.add_argument(
        "--backend",
        choices=("mock", "remote"),
        default=None,
        help="Backend for both the gateway and the embedder",
    )
    parser.add_argument(
        "--reproducible",
        action="store_true",
        default=None,
        help="Omit timestamps so repeated runs produce identical files",
    )


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="rad", description="Retrieval augmented decision-making")
    commands = parser.add_subparsers(dest="command", required=True)

    p_ingest = commands.add_parser("ingest", help="Segment and index a corpus directory")
    p_ingest.add_argument("corpus_dir", type=Path)
    p_ingest.add_argument("--out", type=Path, default=None, help="Store directory")
    _add_common(p_ingest)

    p_build = commands.add_parser("build", help="Build the weighted hierarchical model")
    p_build.add_argument("request_file", type=Path, help="JSON {d, options?}")
    p_build.add_argument("--store", type=Path, default=None, help="Store directory")
    p_build.add_argument("--out", type=Path, default=None, help="Model file")
    _add_common(p_build)

    p_decide = commands.add_parser("decide", help="Score options and write the report")
    p_decide.add_argument("options_file", type=Path, help="JSON {options: [{id, title, text}]}")
    p_decide.add_argument("--model", type=Path, default=None, help="Model file")
    p_decide.add_argument("--store", type=Path, default=None, help="Store directory (for trace excerpts)")
    p_decide.add_argument("--out", type=Path, default=None, help="Report file")
    _add_common(p_decide)

    p_trace = commands.add_parser("trace", help="Trace a criterion or an option through a report")
    p_trace.add_argument("report", type=Path)
    target = p_trace.add_mutually_exclusive_group(required=True)
    target.add_argument("--criterion", type=int, default=None)
    target.add_argument("--option", default=None)

    p_run = commands.add_parser("run", help="Ingest, build and decide in one invocation")
    p_run.add_argument("corpus_dir", type=Path)
    p_run.add_argument("request_file", type=Path, help="JSON {d, options: [{id, title, text}]}")
    p_run.add_argument("--store", type=Path, default=None)
    p_run.add_argument("--model", type=Path, default=None)
    p_run.add_argument("--out", type=Path, default=None, help="Report file")
    _add_common(p_run)
    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace, paths: Dict[str, Any]) -> Dict[str, Any]:
    backend = getattr(args, "backend", None)
    return {
        "seed": getattr(args, "seed", None),
        "top_k": getattr(args, "top_k", None),
        "reproducible_output": getattr(args, "reproducible", None),
        "gateway": {"backend": backend},
        "embedding": {"backend": backend},
        "paths": paths,
    }


def _config(args: argparse.Namespace) -> RadConfig:
    paths: Dict[str, Any] = {}
    if args.command == "ingest":
        paths["store"] = args.out
    elif args.command == "build":
        paths.update(store=args.store, model=args.out)
    elif args.command == "decide":
        paths.update(model=args.model, store=args.store, report=args.out)
    elif args.command == "run":
        paths.update(store=args.store, model=args.model, report=args.out)
    return load_config(getattr(args, "config", None), _overrides(args, paths))


def _print_ingest(summary: IngestSummary) -> None:
    print(f"manifest: {summary.manifest_path}")
    print(f"documents: {len(summary.documents)} chunks: {summary.chunks}")
    for doc in summary.documents:
        inferred = " (inferred hierarchy)" if doc["inferred"] else ""
        print(f"  {doc['doc_id']}: p_n={doc['p_n']}{inferred}")
        for entry_id in doc["mismatches"]:
            print(f"    warning: boundary mismatch for entry {entry_id}")
    for failure in summary.failures:
        print(f"  warning: skipped {failure['path']}: {failure['reason']}")


def _print_build(summary: BuildSummary) -> None:
    print(f"model: {summary.model_path}")
    print(f"k: {summary.k}")
    print(f"levels: {len(summary.levels)} {summary.levels}")
    print("top weights:")
    for criterion_id, name, weight in summary.top_weights:
        print(f"  {criterion_id} {name}: {weight:.6f}")
    print("level CR: " + ", ".join(f"{cr:.4f}" for cr in summary.level_cr))
    print(f"sum W: {summary.weight_sum:.12f}")
    for warning in summary.warnings:
        print(f"warning: {warning}")


def _cmd_ingest(args: argparse.Namespace, config: RadConfig, log: RunLogger) -> int:
    summary = ingest(args.corpus_dir, config, log=log)
    _print_ingest(summary)
    return EXIT_OK


def _cmd_build(args: argparse.Namespace, config: RadConfig, log: RunLogger) -> int:
    data = read_request_file(args.request_file)
    model, summary = build_model(config.paths.store, str(data.get("d", "")), config, log=log)
    write_model(model, config.paths.model)
    _print_build(dataclasses.replace(summary, model_path=config.paths.model))
    return EXIT_OK


def _cmd_decide(args: argparse.Namespace, config: RadConfig, log: RunLogger) -> int:
    try:
        model = read_model(config.paths.model)
    except StoreError as exc:
        raise InputError(str(exc)) from exc
    data = read_request_file(args.options_file)
    options = data.get("options") or []
    if not options:
        raise InputError(f"{args.options_file} lists no options")
    store = open_store_if_present(config.paths.store)
    corpus_ref = str(store.manifest_path) if store is not None else ""
    report = decide(model, list(options), config, store=store, corpus_ref=corpus_ref, log=log)
    write_report(report, config.paths.report)
    print(f"report: {config.paths.report}")
    print(summary_text(report))
    return EXIT_OK


def _cmd_trace(args: argparse.Namespace) -> int:
    try:
        report = read_report(args.report)
    except StoreError as exc:
        raise InputError(str(exc)) from exc
    if args.criterion is not None:
        print(trace_criterion_text(report, args.criterion))
    else:
        print(trace_option_text(report, args.option))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace, config: RadConfig, log: RunLogger) -> int:
    ingested, built, report = run(args.corpus_dir, args.request_file, config, log=log)
    _print_ingest(ingested)
    _print_build(built)
    print(f"report: {config.paths.report}")
    print(summary_text(report))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(list(argv) if argv is not None else sys.argv[1:])
    if args.command == "trace":
        try:
            return _cmd_trace(args)
        except InputError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    try:
        config = _config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    handlers = {"ingest": _cmd_ingest, "build": _cmd_build, "decide": _cmd_decide, "run": _cmd_run}
    with RunLogger(config.paths.log_file) as log:
        log.step("command", command=args.command, argv=list(argv or []))
        try:
            code = handlers[args.command](args, config, log)
        except (InputError, ConfigError) as exc:
            log.step("command", status="input_error", error=str(exc))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except PipelineError as exc:
            log.step("command", status="failed", failed_step=exc.step, error=str(exc.cause))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        except RadError as exc:
            log.step("command", status="failed", error=str(exc))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        log.step("command", status="done", exit_code=code)
        return code


__all__ = ["parse_args", "main", "EXIT_OK", "EXIT_FAILURE", "EXIT_USAGE"]
