"""Command-line interface.

Subcommands: ingest, index, select, prompt, run, eval, significance, synth.
Exit codes: 0 success, 1 partial failure (some documents failed during a
run), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from .adapters import FORMATS, import_dataset
from .config import RunConfig, load_config, validate_config
from .dataset import (
    load_canonical,
    save_canonical,
    synthesize_replace_layout,
    synthesize_replace_text,
)
from .errors import ConfigError, DociclError
from .pipeline import Pipeline, evaluate_run
from .report import (
    load_report,
    report_json_bytes,
    significance_between,
    significance_to_obj,
)
from .selection import order_examples, selection_to_json

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docicl",
        description="Per-sample in-context example selection and evaluation "
        "for document information extraction.",
    )
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--cache-dir", help="override cache_dir")
    parser.add_argument("--seed", type=int, help="override seed")
    parser.add_argument(
        "--mock-llm",
        choices=("echo_gold", "fixed_text", "scripted"),
        help="use the mock LLM in the given mode",
    )
    parser.add_argument(
        "--mock-embedder", action="store_true", help="use the deterministic hash embedder"
    )
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="import a native dataset into the canonical format")
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--input", required=True, help="native dataset split directory")
    p.add_argument("--split", choices=("train", "test"), help="default: inferred from the path")
    p.add_argument("--output", required=True, help="canonical .jsonl file to write")
    p.add_argument("--strict", action="store_true", help="reject instead of skipping bad records")

    p = sub.add_parser("index", help="precompute embeddings and layout images")
    p.add_argument("--export-pgm", help="also write layout images as PGM files to this directory")

    p = sub.add_parser("select", help="dump the example selection for one test document")
    p.add_argument("--doc-id", required=True)
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("prompt", help="emit the assembled prompt for one test document")
    p.add_argument("--doc-id", required=True)
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("run", help="run the full pipeline over the test split")
    p.add_argument("--out-dir", help="override out_dir")

    p = sub.add_parser("eval", help="recompute metrics from a run's stored predictions")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--output", help="report path (default: <run-dir>/report.eval.json)")

    p = sub.add_parser("significance", help="Wilcoxon signed-rank between two reports")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("synth", help="write a synthetic variant of a canonical dataset")
    p.add_argument("--mode", required=True, choices=("replace_text", "replace_layout"))
    p.add_argument("--input", required=True, help="canonical .jsonl file")
    p.add_argument("--output", required=True)
    p.add_argument(
        "--donor-split",
        default="train",
        choices=("train", "test"),
        help="split used as the donor pool",
    )
    return parser


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.cache_dir is not None:
        cfg.cache_dir = args.cache_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mock_llm is not None:
        cfg.llm_provider = "mock"
        cfg.mock_llm_mode = args.mock_llm
    if args.mock_embedder:
        cfg.embedding_provider = "hash"
    validate_config(cfg)
    return cfg


def _emit(text: str, output: str | None) -> None:
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _cmd_ingest(args) -> int:
    docs = import_dataset(args.input, args.format, split=args.split, strict=args.strict)
    save_canonical(docs, args.output)
    print(f"wrote {len(docs)} documents to {args.output}")
    return 0


def _cmd_index(args, cfg: RunConfig) -> int:
    pipeline = Pipeline(cfg)
    stats = pipeline.index(pgm_dir=args.export_pgm)
    print(json.dumps(stats, indent=2))
    return 0


def _cmd_select(args, cfg: RunConfig) -> int:
    pipeline = Pipeline(cfg)
    doc = pipeline.by_id.get(args.doc_id)
    if doc is None:
        raise ConfigError(f"unknown doc_id {args.doc_id!r}")
    sel = order_examples(pipeline.selection_for(doc), cfg.example_order)
    _emit(selection_to_json(sel) + "\n", args.output)
    return 0


def _cmd_prompt(args, cfg: RunConfig) -> int:
    pipeline = Pipeline(cfg)
    doc = pipeline.by_id.get(args.doc_id)
    if doc is None:
        raise ConfigError(f"unknown doc_id {args.doc_id!r}")
    bundle = pipeline.build_bundle(doc, pipeline.selection_for(doc))
    _emit(bundle.text, args.output)
    return 0


def _cmd_run(args, cfg: RunConfig) -> int:
    pipeline = Pipeline(cfg)
    result = pipeline.run(out_dir=args.out_dir)
    agg = result.report["aggregate"]
    print(
        f"{len(result.outcomes)} documents, {result.failed} failed; "
        f"P={agg['precision']:.4f} R={agg['recall']:.4f} F1={agg['f1']:.4f}"
    )
    print(f"report: {result.out_dir / 'report.json'}")
    return 1 if result.failed else 0


def _cmd_eval(args, cfg: RunConfig) -> int:
    documents = (
        load_canonical(cfg.dataset_path)
        if cfg.dataset_format == "canonical"
        else import_dataset(cfg.dataset_path, cfg.dataset_format)
    )
    report = evaluate_run(args.run_dir, documents, cfg)
    output = Path(args.output) if args.output else Path(args.run_dir) / "report.eval.json"
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_bytes(report_json_bytes(report))
    agg = report["aggregate"]
    print(f"P={agg['precision']:.4f} R={agg['recall']:.4f} F1={agg['f1']:.4f}")
    print(f"report: {output}")
    return 0


def _cmd_significance(args) -> int:
    result = significance_between(load_report(args.report_a), load_report(args.report_b))
    _emit(json.dumps(significance_to_obj(result), indent=2) + "\n", args.output)
    return 0


def _cmd_synth(args, seed: int) -> int:
    docs = load_canonical(args.input)
    pool = [d for d in docs if d.split == args.donor_split]
    if not pool:
        raise ConfigError(f"no documents in donor split {args.donor_split!r}")
    rng = random.Random(seed)
    out = []
    for doc in docs:
        if args.mode == "replace_text":
            out.append(synthesize_replace_text(doc, pool, seed=rng.randrange(2**63)))
        else:
            donors = [d for d in pool if d.n_entities >= doc.n_entities and d.doc_id != doc.doc_id]
            if not donors:
                donors = [doc]
            donor = donors[rng.randrange(len(donors))]
            out.append(synthesize_replace_layout(doc, donor))
    save_canonical(out, args.output)
    print(f"wrote {len(out)} synthetic documents to {args.output}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "significance":
            return _cmd_significance(args)
        if args.command == "synth":
            return _cmd_synth(args, args.seed if args.seed is not None else 0)
        cfg = _load_run_config(args)
        if args.command == "index":
            return _cmd_index(args, cfg)
        if args.command == "select":
            return _cmd_select(args, cfg)
        if args.command == "prompt":
            return _cmd_prompt(args, cfg)
        if args.command == "run":
            return _cmd_run(args, cfg)
        if args.command == "eval":
            return _cmd_eval(args, cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DociclError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
