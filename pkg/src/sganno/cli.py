"""Command-line front door.

Subcommands mirror the API nouns: ``serve``, ``convert``, ``stats``,
``verify``, ``rebuild-priors``, ``replay-eval``. Machine-readable
output goes to stdout (JSON with ``--format json``), diagnostics to
stderr. Exit codes: 0 success, 1 validation failure, 2 I/O or parse
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import (
    AnnotationToolError,
    CorruptAnnotation,
    EmptyLog,
    MissingConfig,
    ParseError,
    SchemaError,
)
from .formats import (
    ConversionReport,
    default_config,
    export_merged,
    import_merged,
    load_config,
    load_merged,
    load_per_image,
    save_merged,
    save_per_image,
)
from .model import AnnotationDocument, ProjectConfig
from .recommend import PriorRecord, evaluate_replay
from .stats import compute_metrics, metrics_table, triple_frequencies

_IO_ERRORS = (ParseError, SchemaError, MissingConfig, CorruptAnnotation, EmptyLog)


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


def _resolve_config(explicit: Optional[str], near: Path) -> ProjectConfig:
    if explicit:
        return load_config(Path(explicit).read_bytes())
    for candidate in (near / "config.json", near.parent / "config.json"):
        if candidate.is_file():
            return load_config(candidate.read_bytes())
    return default_config()


def _annotation_dir(path: Path) -> Path:
    # accept either a project root or a bare directory of per-image files
    if (path / "annotations").is_dir():
        return path / "annotations"
    return path


def _load_docs(directory: Path, config: ProjectConfig) -> List[AnnotationDocument]:
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    docs = []
    for file in sorted(directory.glob("*.json")):
        if file.name == "config.json" or file.name.endswith(".report.json"):
            continue
        docs.append(load_per_image(file.read_bytes(), config))
    return docs


def _emit_report(report: ConversionReport, destination: Path) -> None:
    destination.write_bytes(
        (json.dumps(report.to_json_obj(), ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    )


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app
    from .store import open_project

    project = os.environ.get("SG_PROJECT") or args.project
    if not project:
        return _fail("serve: no project directory (use --project or SG_PROJECT)", 2)
    store = open_project(project)
    for note in store.open_report:
        print(f"open: {note}", file=sys.stderr)
    ui_dir = Path(args.ui) if args.ui else None
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    source = Path(args.source)
    destination = Path(args.destination)
    if args.to == "merged":
        config = _resolve_config(args.config, source)
        docs = _load_docs(_annotation_dir(source), config)
        split = json.loads(Path(args.split).read_text()) if args.split else None
        merged, report = export_merged(docs, config, split)
        destination.parent.mkdir(parents=True, exist_ok=True)
        destination.write_bytes(save_merged(merged))
        report_path = Path(args.report) if args.report else destination.with_suffix(".report.json")
        _emit_report(report, report_path)
        summary = {"written": str(destination), "images": len(docs), "lossless": report.lossless}
    else:
        config = _resolve_config(args.config, source.parent)
        merged = load_merged(source.read_bytes())
        docs, report = import_merged(merged, config)
        destination.mkdir(parents=True, exist_ok=True)
        for doc in docs:
            (destination / f"{doc.image_id}.json").write_bytes(save_per_image(doc))
        report_path = (
            Path(args.report)
            if args.report
            else destination.parent / f"{destination.name}.report.json"
        )
        _emit_report(report, report_path)
        summary = {"written": str(destination), "images": len(docs), "lossless": report.lossless}
    if args.format == "json":
        print(json.dumps(summary, ensure_ascii=False))
    else:
        print(f"converted {summary['images']} image(s) -> {summary['written']}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    directory = Path(args.directory)
    config = _resolve_config(args.config, directory)
    docs = _load_docs(_annotation_dir(directory), config)
    metrics = compute_metrics(docs, config)
    triples = triple_frequencies(docs)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "metrics": metrics.to_json_obj(),
                    "metrics_rounded": metrics.to_json_obj(rounded=True),
                    "top_triples": triples.to_json_obj()[: args.top],
                },
                ensure_ascii=False,
            )
        )
    else:
        print(metrics_table(metrics))
        if triples.entries:
            print()
            print(f"top {min(args.top, len(triples.entries))} triples:")
            for (sub, pred, obj), count in triples.top(args.top):
                print(f"  {count:6d}  {sub} - {pred} - {obj}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    from .store import verify_project

    issues = verify_project(Path(args.directory))
    if args.format == "json":
        print(json.dumps({"clean": not issues, "issues": issues}, ensure_ascii=False))
    else:
        for issue in issues:
            print(issue)
        if not issues:
            print("clean")
    return 0 if not issues else 1


def cmd_rebuild_priors(args: argparse.Namespace) -> int:
    from .store import open_project

    store = open_project(Path(args.directory))
    try:
        store.rebuild_priors()
        total = store.state.prior.total_annotations
    finally:
        store.close()
    if args.format == "json":
        print(json.dumps({"total_annotations": total}, ensure_ascii=False))
    else:
        print(f"rebuilt priors from {total} relationship(s)")
    return 0


def _replay_entries(path: Path) -> List[PriorRecord]:
    """Accept either plain replay entries or a project mutation log."""
    entries: List[PriorRecord] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"replay log line {number}: {exc.msg}", line=number) from exc
        op = obj.get("op")
        if op == "add_relationship":
            entries.append(
                PriorRecord.make(
                    (obj["subject_category"], obj["object_category"]),
                    obj["features"],
                    obj["relationship"]["predicate"],
                )
            )
        elif op == "import_image":
            for rec in obj.get("records", []):
                entries.append(
                    PriorRecord.make(
                        (rec["subject_category"], rec["object_category"]),
                        rec["features"],
                        rec["predicate"],
                    )
                )
        elif op is None:
            try:
                entries.append(
                    PriorRecord.make(
                        (obj["subject_category"], obj["object_category"]),
                        obj["features"],
                        obj["predicate"],
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"replay log line {number}: missing {exc}", line=number) from exc
    return entries


def cmd_replay_eval(args: argparse.Namespace) -> int:
    path = Path(args.log)
    config = load_config(Path(args.config).read_bytes()) if args.config else default_config()
    entries = _replay_entries(path)
    hit_rate = evaluate_replay(config, entries, args.k)
    if args.format == "json":
        print(json.dumps({"entries": len(entries), "k": args.k, "hit_rate": hit_rate}))
    else:
        print(f"hit rate {hit_rate:.4f} over {len(entries)} entries at k={args.k}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sganno", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the annotation HTTP service")
    serve.add_argument("--project", help="project directory (SG_PROJECT overrides)")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--ui", help="directory of built UI assets to serve at /")
    serve.set_defaults(func=cmd_serve)

    convert = sub.add_parser("convert", help="convert between dataset formats")
    convert.add_argument("--to", choices=["merged", "per-image"], required=True)
    convert.add_argument("source", help="per-image directory, or merged file for --to per-image")
    convert.add_argument("destination", help="merged file, or output directory for --to per-image")
    convert.add_argument("--config", help="project config file (default: discovered or shipped)")
    convert.add_argument("--split", help="JSON file mapping image_id to train/val/test")
    convert.add_argument("--report", help="where to write the conversion report")
    convert.add_argument("--format", choices=["text", "json"], default="text")
    convert.set_defaults(func=cmd_convert)

    stats = sub.add_parser("stats", help="dataset density and coverage metrics")
    stats.add_argument("directory")
    stats.add_argument("--config")
    stats.add_argument("--top", type=int, default=5)
    stats.add_argument("--format", choices=["text", "json"], default="text")
    stats.set_defaults(func=cmd_stats)

    verify = sub.add_parser("verify", help="read-only project consistency check")
    verify.add_argument("directory")
    verify.add_argument("--format", choices=["text", "json"], default="text")
    verify.set_defaults(func=cmd_verify)

    rebuild = sub.add_parser("rebuild-priors", help="refreeze features from current geometry")
    rebuild.add_argument("directory")
    rebuild.add_argument("--format", choices=["text", "json"], default="text")
    rebuild.set_defaults(func=cmd_rebuild_priors)

    replay = sub.add_parser("replay-eval", help="hit rate of the recommender over a log")
    replay.add_argument("log", help="JSONL of replay entries or a project mutation log")
    replay.add_argument("--k", type=int, default=1)
    replay.add_argument("--config")
    replay.add_argument("--format", choices=["text", "json"], default="text")
    replay.set_defaults(func=cmd_replay_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _IO_ERRORS as exc:
        return _fail(f"{exc.code}: {exc.message}", 2)
    except OSError as exc:
        return _fail(f"IOError: {exc}", 2)
    except AnnotationToolError as exc:
        return _fail(f"{exc.code}: {exc.message}", 1)


if __name__ == "__main__":
    sys.exit(main())
