"""Command-line entry point.

Exit codes: 0 success (empty results included), 1 usage error, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .diversity_map import build_map, emit_dot, emit_json
from .extractor import ExtractConfig
from .facts import MalformedRecord, aggregate, load_store, read_facts, save_store
from .metrics import UnknownClass, all_class_metrics, discordant_fraction, spearman
from .pipeline import run_extraction
from .report import METRICS_HEADER, metrics_row, write_report

EXIT_OK, EXIT_USAGE, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("typeusage")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _load(path: str):
    if not Path(path).is_file():
        raise InputError(f"store not found: {path}")
    try:
        return load_store(path)
    except MalformedRecord as exc:
        raise InputError(str(exc)) from None


def cmd_extract(args) -> int:
    config = ExtractConfig(include_this=args.include_this, include_temps=args.include_temps)
    try:
        summary = run_extraction(args.inputs, args.output, config, workers=args.workers)
    except FileNotFoundError as exc:
        raise InputError(f"input not found: {exc}") from None
    print(json.dumps(summary.as_dict(), sort_keys=True))
    if summary.jarsSeen == summary.jarsUnreadable:
        raise InputError("no parseable inputs")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    errors: list = []

    def facts():
        for path in args.facts:
            if not Path(path).is_file():
                raise InputError(f"facts file not found: {path}")
            yield from read_facts(path, errors)

    store = aggregate(facts())
    store.skipped_records = len(errors)
    save_store(store, args.output)
    print(
        json.dumps(
            {
                "records": sum(store.ecosystem_counts.values()),
                "skippedRecords": store.skipped_records,
                "projects": len(store.projects),
                "classes": len(store.class_index),
                "kinds": len(store.ecosystem_counts),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_metrics(args) -> int:
    store = _load(args.store)
    metrics = all_class_metrics(store)
    if args.cls is not None:
        metrics = [m for m in metrics if m.receiver_type == args.cls]
        if not metrics:
            raise InputError(f"unknown class: {args.cls}")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    writer.writerows(metrics_row(m) for m in metrics)
    return EXIT_OK


def cmd_map(args) -> int:
    store = _load(args.store)
    try:
        dmap = build_map(store, args.cls, args.threshold)
    except UnknownClass:
        raise InputError(f"unknown class: {args.cls}") from None
    sys.stdout.write(emit_dot(dmap) if args.format == "dot" else emit_json(dmap))
    return EXIT_OK


def cmd_report(args) -> int:
    store = _load(args.store)
    for path in write_report(store, args.output, args.min_diversity, args.top_k_by_project_count):
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_spearman(args) -> int:
    store = _load(args.store)
    selected = [m for m in all_class_metrics(store) if m.diversity > args.min_diversity]
    diversity = [m.diversity for m in selected]
    methods = [m.used_method_count for m in selected]
    result = {"classes": len(selected), "minDiversity": args.min_diversity, "spearman": None, "discordantFraction": None}
    if len(selected) >= 2:
        result["discordantFraction"] = discordant_fraction(diversity, methods)
        try:
            result["spearman"] = spearman(diversity, methods)
        except ValueError as exc:
            log.warning("spearman undefined: %s", exc)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="typeusage", description="Type-usage diversity analysis of Java bytecode.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="extract type-usage facts from Jars")
    p.add_argument("inputs", nargs="+", help="Jar files or directories searched for Jars")
    p.add_argument("-o", "--output", required=True, help="facts file to write")
    p.add_argument("--include-this", action="store_true", help="record calls on `this`")
    p.add_argument("--include-temps", action="store_true", help="record never-stored `new` values")
    p.add_argument("--workers", type=_positive, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("aggregate", help="aggregate facts into a store snapshot")
    p.add_argument("facts", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("metrics", help="per-class metrics as CSV")
    p.add_argument("store")
    p.add_argument("--class", dest="cls")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("map", help="API diversity map of one class")
    p.add_argument("store")
    p.add_argument("cls", metavar="class")
    p.add_argument("--threshold", type=_positive, default=150)
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("report", help="write all report tables")
    p.add_argument("store")
    p.add_argument("-o", "--output", required=True, help="report directory")
    p.add_argument("--min-diversity", type=_non_negative, default=100)
    p.add_argument("--top-k-by-project-count", type=_positive, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("spearman", help="diversity vs. used methods over high-diversity classes")
    p.add_argument("store")
    p.add_argument("--min-diversity", type=_non_negative, default=100)
    p.set_defaults(func=cmd_spearman)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"typeusage: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
