"""Command-line entry point: link | generate | eval | run | dump-prompt."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .catalog import build_catalog, load_questions, load_spider_tables
from .config import PipelineConfig, load_config
from .errors import ConfigurationError, Text2SqlError
from .pipeline import (
    StageSummary,
    link_artifact_path,
    linked_schema_from_json,
    load_predictions,
    make_gateway,
    run_eval_stage,
    run_generate_stage,
    run_link_stage,
)
from .prompts import build_generation_prompt

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tables", required=True, type=Path, help="Spider-format tables.json")
    parser.add_argument("--questions", required=True, type=Path, help="question JSON file")
    parser.add_argument("--out", type=Path, default=Path("artifacts"), help="artifact directory")


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    parser.add_argument("--backend", choices=("live", "record", "replay"), default=None)
    parser.add_argument("--cache-dir", type=Path, default=None)
    parser.add_argument("--model", dest="model_name", default=None)
    parser.add_argument("--n-samples", type=int, default=None)
    parser.add_argument("--recall-samples", type=int, default=None)
    parser.add_argument("--temperature", type=float, default=None)
    parser.add_argument("--layout", choices=("clear", "complicated"), default=None)
    parser.add_argument("--no-calibration", action="store_true")
    parser.add_argument("--no-linking", action="store_true")
    parser.add_argument("--no-self-consistency", action="store_true")
    parser.add_argument("--no-foreign-keys", action="store_true")
    parser.add_argument("--force", action="store_true", help="recompute existing artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="text2sql",
        description="Zero-shot text-to-SQL pipeline with execution-consistency voting.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, needs_dataset in (
        ("link", True),
        ("generate", True),
        ("eval", True),
        ("run", True),
        ("dump-prompt", True),
    ):
        sub = commands.add_parser(name)
        if needs_dataset:
            _add_dataset_args(sub)
        _add_config_args(sub)
        if name == "eval":
            sub.add_argument("--predictions", type=Path, default=None,
                             help="predictions file (defaults to <out>/predictions.json)")
        if name == "dump-prompt":
            sub.add_argument("--question-id", required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "backend": args.backend,
        "cache_dir": args.cache_dir,
        "model_name": args.model_name,
        "n_samples": args.n_samples,
        "recall_samples": args.recall_samples,
        "temperature": args.temperature,
        "layout": args.layout,
    }
    if args.no_calibration:
        overrides["use_calibration"] = False
    if args.no_linking:
        overrides["use_linking"] = False
    if args.no_self_consistency:
        overrides["use_self_consistency"] = False
    if args.no_foreign_keys:
        overrides["include_foreign_keys"] = False
    return load_config(config_file=args.config, overrides=overrides)


def _load_dataset(args: argparse.Namespace):
    catalog = build_catalog(load_spider_tables(args.tables))
    questions = load_questions(args.questions)
    for question in questions:
        if question.db_id not in catalog:
            raise ConfigurationError(
                f"question {question.question_id} references unknown db {question.db_id!r}"
            )
    return catalog, questions


def _print_summary(summary: StageSummary) -> None:
    print(
        f"[{summary.name}] processed={summary.processed} "
        f"skipped={summary.skipped} failed={len(summary.failures)}"
    )
    for question_id, message in summary.failures:
        print(f"  question {question_id}: {message}", file=sys.stderr)


def cmd_link(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    catalog, questions = _load_dataset(args)
    gateway = make_gateway(config)
    summary = run_link_stage(catalog, questions, gateway, config, args.out, force=args.force)
    _print_summary(summary)
    return EXIT_OK if summary.ok else EXIT_PARTIAL


def cmd_generate(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    catalog, questions = _load_dataset(args)
    gateway = make_gateway(config)
    summary = run_generate_stage(catalog, questions, gateway, config, args.out, force=args.force)
    _print_summary(summary)
    return EXIT_OK if summary.ok else EXIT_PARTIAL


def cmd_eval(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    catalog, questions = _load_dataset(args)
    predictions_path = args.predictions or args.out / "predictions.json"
    predictions = load_predictions(predictions_path) if predictions_path.is_file() else {}
    run_eval_stage(catalog, questions, predictions, config, args.out)
    sys.stdout.write((args.out / "report.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    catalog, questions = _load_dataset(args)
    gateway = make_gateway(config)

    failures = 0
    if config.effective_use_linking:
        link_summary = run_link_stage(catalog, questions, gateway, config, args.out, force=args.force)
        _print_summary(link_summary)
        failures += len(link_summary.failures)
    generate_summary = run_generate_stage(
        catalog, questions, gateway, config, args.out, force=args.force
    )
    _print_summary(generate_summary)
    failures += len(generate_summary.failures)

    predictions = load_predictions(args.out / "predictions.json")
    run_eval_stage(catalog, questions, predictions, config, args.out)
    sys.stdout.write((args.out / "report.txt").read_text(encoding="utf-8"))
    return EXIT_OK if failures == 0 else EXIT_PARTIAL


def cmd_dump_prompt(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    catalog, questions = _load_dataset(args)
    wanted = [q for q in questions if q.question_id == args.question_id]
    if not wanted:
        raise ConfigurationError(f"no question with id {args.question_id!r}")
    question = wanted[0]
    schema = catalog[question.db_id]

    view = schema
    if config.effective_use_linking:
        link_path = link_artifact_path(args.out, question)
        if link_path.is_file():
            view = linked_schema_from_json(
                json.loads(link_path.read_text(encoding="utf-8"))["linked"]
            )
        else:
            log.warning("no linking artifact for %s; dumping full-schema prompt", args.question_id)
    exchange = build_generation_prompt(
        view,
        question,
        config.prompt_config(),
        n=config.effective_n_samples,
        temperature=config.temperature,
        model_name=config.model_name,
        max_output_tokens=config.max_generation_tokens,
    )
    for message in exchange.messages:
        print(f"--- {message.role} ---")
        print(message.content)
    return EXIT_OK


COMMANDS = {
    "link": cmd_link,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "run": cmd_run,
    "dump-prompt": cmd_dump_prompt,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Text2SqlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
