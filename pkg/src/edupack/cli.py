"""Command-line front end for the corpus pipeline and analysis tools.

Usage follows one pattern for every subcommand::

    edupack <subcommand> [--config cfg.json] [flags...]

Flags override config values. Logs and progress go to standard error,
data goes to files or standard output, and exit codes are stable: 0 on
success, 1 for usage errors, 2 for bad data, 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import analysis as ana
from .config import PipelineConfig, load_config, load_runs
from .corpus import corpus_stats, read_documents, write_documents
from .dedup import dedup_stream
from .errors import DataError, UsageError
from .filtering import FilterConfig, apply_filters, report_to_json
from .pack import PackConfig, pack_stream
from .shard import (
    CODEC_NAMES,
    ShardWriteConfig,
    StreamConfig,
    stream_read,
    write_shards,
)
from .tokenizer import ByteTokenizer, iter_token_file, tokenize_parallel, write_token_file

logger = logging.getLogger("edupack")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting itself."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ── Config/flag merging ─────────────────────────────────────────────────


def _merged(cfg_obj: object, args: argparse.Namespace, names: Sequence[str]) -> object:
    """Overlay explicitly-set CLI flags onto a config dataclass."""
    overrides = {}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(cfg_obj, **overrides) if overrides else cfg_obj


def _require_input(cfg: PipelineConfig, args: argparse.Namespace) -> str:
    path = getattr(args, "input", None) or cfg.input
    if not path:
        raise UsageError("no input given: pass --input or set it in the config")
    return path


def _workers(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    value = args.workers if args.workers is not None else cfg.workers
    if value < 1:
        raise UsageError("workers must be >= 1")
    return value


def _int_arg(text: str) -> int:
    """Integer flag that also accepts scientific notation like 125e6."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
        return int(value)


# ── Subcommand handlers ─────────────────────────────────────────────────


def _cmd_filter(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    fcfg: FilterConfig = _merged(
        cfg.filter,
        args,
        [f.name for f in dataclasses.fields(FilterConfig)],
    )
    docs = read_documents(_require_input(cfg, args))
    kept, report = apply_filters(docs, fcfg, workers=_workers(cfg, args))
    written = write_documents(kept, args.output)
    payload = report_to_json(report)
    logger.info("filter report: %s", json.dumps(payload))
    logger.info("kept %d documents", written)
    if args.report:
        Path(args.report).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    docs = read_documents(_require_input(cfg, args))
    if args.audit:
        with open(args.audit, "w", encoding="utf-8", newline="\n") as audit:
            unique, index = dedup_stream(docs, audit_sink=audit)
            written = write_documents(unique, args.output)
    else:
        unique, index = dedup_stream(docs)
        written = write_documents(unique, args.output)
    logger.info("kept %d documents, dropped %d duplicates", written, index.dropped_count)
    return 0


def _cmd_tokenize(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    docs = read_documents(_require_input(cfg, args))
    tokenized = tokenize_parallel(docs, ByteTokenizer(), workers=_workers(cfg, args))
    count = write_token_file(tokenized, args.output)
    logger.info("tokenized %d documents", count)
    return 0


def _cmd_pack(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    pcfg: PackConfig = cfg.pack
    if args.seq_len is not None:
        pcfg = dataclasses.replace(pcfg, seq_len=args.seq_len)
    if args.no_doc_sep:
        pcfg = dataclasses.replace(pcfg, insert_doc_sep=False)
    if args.sep_id is not None:
        pcfg = dataclasses.replace(pcfg, sep_id=args.sep_id)
    pcfg.validate()
    records = iter_token_file(_require_input(cfg, args))
    seqs, stats = pack_stream(records, pcfg)
    write_token_file(seqs, args.output)
    logger.info(
        "packed %d sequences of %d tokens, dropped tail of %d",
        stats.sequences,
        pcfg.seq_len,
        stats.dropped_tail,
    )
    return 0


def _shard_config(cfg: PipelineConfig, args: argparse.Namespace) -> ShardWriteConfig:
    scfg = cfg.shard
    overrides = {}
    if args.max_seqs_per_shard is not None:
        overrides["max_seqs_per_shard"] = args.max_seqs_per_shard
    if args.frame_size is not None:
        overrides["frame_size"] = args.frame_size
    if args.codec is not None:
        overrides["codec"] = CODEC_NAMES[args.codec]
    if args.token_width is not None:
        overrides["token_width"] = args.token_width
    if overrides:
        scfg = dataclasses.replace(scfg, **overrides)
    scfg.validate()
    return scfg


def _cmd_shard(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    scfg = _shard_config(cfg, args)
    records = iter_token_file(_require_input(cfg, args))
    paths = write_shards(records, args.out_dir, scfg)
    logger.info("wrote %d shard file(s) to %s", len(paths), args.out_dir)
    return 0


def _resolve_shard_paths(raw: list[str]) -> list[Path]:
    if len(raw) == 1 and Path(raw[0]).is_dir():
        found = sorted(Path(raw[0]).glob("*.edsh"))
        if not found:
            raise DataError(f"no .edsh files in {raw[0]}")
        return found
    return [Path(p) for p in raw]


def _cmd_stream(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    stream_cfg: StreamConfig = _merged(
        cfg.stream, args, ["rank", "world_size", "shuffle_buffer", "seed"]
    )
    stream_cfg.validate()
    paths = _resolve_shard_paths(args.shards)
    seqs = stream_read(paths, stream_cfg)
    if args.output:
        count = write_token_file(seqs, args.output)
    else:
        count = 0
        for seq in seqs:
            sys.stdout.write(" ".join(str(t) for t in seq.tokens) + "\n")
            count += 1
    logger.info("rank %d/%d read %d sequences", stream_cfg.rank, stream_cfg.world_size, count)
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    stats = corpus_stats(read_documents(_require_input(cfg, args)))
    print(json.dumps(dataclasses.asdict(stats), indent=2))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    table_path = args.table or cfg.analysis.table
    if not table_path:
        raise UsageError("no benchmark table: pass --table or set analysis.table")
    table = ana.load_benchmark_table(table_path)

    curves = [ana.load_loss_curve(c.path, c.label) for c in cfg.analysis.curves]
    for spec in args.loss or []:
        label, sep, path = spec.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--loss expects LABEL=PATH, got {spec!r}")
        curves.append(ana.load_loss_curve(path, label))

    runs = list(cfg.analysis.runs)
    if args.runs:
        runs = load_runs(args.runs)

    out_dir = args.out_dir or cfg.output_dir
    written = ana.emit_report(table, curves, runs, out_dir, figures=not args.no_figures)
    for path in written:
        logger.info("wrote %s", path)
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    run = ana.TrainRunSpec(
        params=args.params,
        world_size=args.world_size,
        offload_params=args.offload_params,
        offload_optimizer=args.offload_optimizer,
    )
    est = ana.estimate_memory(run)
    print(json.dumps(dataclasses.asdict(est), indent=2))
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    input_path = _require_input(cfg, args)
    out_dir = Path(args.out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = _workers(cfg, args)

    docs = read_documents(input_path)
    kept, freport = apply_filters(docs, cfg.filter, workers=workers)
    audit_path = out_dir / "dedup_audit.jsonl"
    with open(audit_path, "w", encoding="utf-8", newline="\n") as audit:
        unique, index = dedup_stream(kept, audit_sink=audit)
        tokenized = tokenize_parallel(unique, ByteTokenizer(), workers=workers)
        seqs, pstats = pack_stream(tokenized, cfg.pack)
        shard_dir = out_dir / "shards"
        shard_paths = write_shards(seqs, shard_dir, cfg.shard)

    summary = {
        "input_docs": sum(freport.values()),
        "filter": report_to_json(freport),
        "dedup_dropped": index.dropped_count,
        "docs_tokenized": index.kept_count,
        "sequences": pstats.sequences,
        "flat_tokens": pstats.flat_tokens,
        "dropped_tail": pstats.dropped_tail,
        "shards": [p.name for p in shard_paths],
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    logger.info("pipeline summary: %s", json.dumps(summary))
    return 0


# ── Parser construction ─────────────────────────────────────────────────


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edupack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    p = sub.add_parser("filter", help="drop low-quality documents")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--report", help="also write the reason->count report to this file")
    p.add_argument("--workers", type=int)
    p.add_argument("--min-nonempty-lines", type=int, dest="min_nonempty_lines")
    p.add_argument("--short-line-char-limit", type=int, dest="short_line_char_limit")
    p.add_argument("--max-short-line-fraction", type=float, dest="max_short_line_fraction")
    p.add_argument("--min-mean-line-chars", type=float, dest="min_mean_line_chars")
    p.add_argument("--max-duplicate-line-ratio", type=float, dest="max_duplicate_line_ratio")
    p.add_argument("--ngram-order", type=int, dest="ngram_order")
    p.add_argument("--max-top-ngram-coverage", type=float, dest="max_top_ngram_coverage")
    p.set_defaults(handler=_cmd_filter)

    p = sub.add_parser("dedup", help="drop exact duplicate documents")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--audit", help="write dropped_id/kept_id pairs to this JSONL file")
    p.set_defaults(handler=_cmd_dedup)

    p = sub.add_parser("tokenize", help="encode documents to token records")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=_cmd_tokenize)

    p = sub.add_parser("pack", help="cut token records into fixed-length sequences")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output", required=True)
    p.add_argument("--seq-len", type=int, dest="seq_len")
    p.add_argument("--no-doc-sep", action="store_true", dest="no_doc_sep")
    p.add_argument("--sep-id", type=int, dest="sep_id")
    p.set_defaults(handler=_cmd_pack)

    p = sub.add_parser(
        "shard", aliases=["pack-shards"], help="write sequences into shard files"
    )
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--max-seqs-per-shard", type=int, dest="max_seqs_per_shard")
    p.add_argument("--frame-size", type=int, dest="frame_size")
    p.add_argument("--codec", choices=sorted(CODEC_NAMES))
    p.add_argument("--token-width", type=int, choices=(2, 4), dest="token_width")
    p.set_defaults(handler=_cmd_shard)

    p = sub.add_parser("stream", help="read one rank's share of a shard set")
    _add_common(p)
    p.add_argument("shards", nargs="+", help="shard files in order, or one directory")
    p.add_argument("--rank", type=int)
    p.add_argument("--world-size", type=int, dest="world_size")
    p.add_argument("--shuffle-buffer", type=int, dest="shuffle_buffer")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="write a token file instead of text to stdout")
    p.set_defaults(handler=_cmd_stream)

    p = sub.add_parser("stats", help="print corpus statistics as JSON")
    _add_common(p)
    p.add_argument("--input")
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser("report", help="render benchmark/loss/run analysis to a directory")
    _add_common(p)
    p.add_argument("--table", help="benchmark table JSON")
    p.add_argument("--loss", action="append", metavar="LABEL=PATH")
    p.add_argument("--runs", help="JSON list of training-run specs")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("estimate", help="print a model-state memory estimate as JSON")
    p.add_argument("--params", type=_int_arg, required=True)
    p.add_argument("--world-size", type=int, default=1, dest="world_size")
    p.add_argument("--offload-params", action="store_true", dest="offload_params")
    p.add_argument("--offload-optimizer", action="store_true", dest="offload_optimizer")
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser("pipeline", help="filter, dedup, tokenize, pack, and shard in one pass")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
