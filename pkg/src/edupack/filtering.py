"""Heuristic quality filters for raw text documents.

Two families of checks run in a fixed order. Length checks reject
documents that are too short or structurally thin to carry prose
(navigation stubs, link lists, boilerplate fragments). Repetition checks
reject documents dominated by duplicated lines or by one repeated word
n-gram (templated pages, scraper loops, SEO spam).

A line is a newline-separated segment trimmed of surrounding whitespace;
segments that are empty after trimming do not count as lines. Words are
whitespace-separated tokens of the whole text.

Thresholds live in :class:`FilterConfig` and every one of them is
exposed as a CLI flag, so calibration experiments do not need code
changes.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterable, Iterator

from .corpus import Document, nonempty_lines
from .errors import ConfigError


class FilterReason(enum.Enum):
    """Why a document was kept or rejected. Exactly one applies."""

    KEPT = "Kept"
    TOO_FEW_LINES = "TooFewLines"
    PREDOMINANTLY_SHORT = "PredominantlyShort"
    DUPLICATE_LINES = "DuplicateLines"
    REPEATED_NGRAM = "RepeatedNgram"


@dataclass(frozen=True)
class FilterConfig:
    min_nonempty_lines: int = 3
    short_line_char_limit: int = 10
    max_short_line_fraction: float = 0.5
    min_mean_line_chars: float = 20.0
    max_duplicate_line_ratio: float = 0.30
    ngram_order: int = 10
    max_top_ngram_coverage: float = 0.20

    def validate(self) -> None:
        if self.min_nonempty_lines < 1:
            raise ConfigError("min_nonempty_lines must be >= 1")
        if self.short_line_char_limit < 1:
            raise ConfigError("short_line_char_limit must be >= 1")
        if not 0.0 <= self.max_short_line_fraction <= 1.0:
            raise ConfigError("max_short_line_fraction must be in [0, 1]")
        if self.min_mean_line_chars < 0:
            raise ConfigError("min_mean_line_chars must be >= 0")
        if not 0.0 <= self.max_duplicate_line_ratio <= 1.0:
            raise ConfigError("max_duplicate_line_ratio must be in [0, 1]")
        if self.ngram_order < 1:
            raise ConfigError("ngram_order must be >= 1")
        if not 0.0 <= self.max_top_ngram_coverage <= 1.0:
            raise ConfigError("max_top_ngram_coverage must be in [0, 1]")


@dataclass(frozen=True)
class FilterVerdict:
    reason: FilterReason
    metrics: dict[str, float]

    @property
    def keep(self) -> bool:
        return self.reason is FilterReason.KEPT


def filter_length(doc: Document, cfg: FilterConfig) -> FilterVerdict:
    """Reject documents with too few lines or mostly-short lines.

    A document needs at least ``min_nonempty_lines`` lines. Among those,
    more than ``max_short_line_fraction`` of lines under
    ``short_line_char_limit`` characters, or a mean line length below
    ``min_mean_line_chars``, marks the text as predominantly short.
    """
    lines = nonempty_lines(doc.text)
    count = len(lines)
    metrics: dict[str, float] = {"nonempty_lines": float(count)}
    if count < cfg.min_nonempty_lines:
        metrics["short_line_fraction"] = 0.0
        metrics["mean_line_chars"] = 0.0
        return FilterVerdict(FilterReason.TOO_FEW_LINES, metrics)

    short = sum(1 for line in lines if len(line) < cfg.short_line_char_limit)
    short_fraction = short / count
    mean_chars = sum(len(line) for line in lines) / count
    metrics["short_line_fraction"] = short_fraction
    metrics["mean_line_chars"] = mean_chars
    if short_fraction > cfg.max_short_line_fraction or mean_chars < cfg.min_mean_line_chars:
        return FilterVerdict(FilterReason.PREDOMINANTLY_SHORT, metrics)
    return FilterVerdict(FilterReason.KEPT, metrics)


def filter_repetition(doc: Document, cfg: FilterConfig) -> FilterVerdict:
    """Reject documents dominated by repeated lines or one repeated n-gram.

    The duplicate-line ratio is ``1 - distinct / total`` over non-empty
    trimmed lines. The n-gram check finds the most frequent word n-gram of
    ``ngram_order`` words and computes the fraction of all words it could
    account for (``count * order / total_words``); texts with fewer than
    ``ngram_order`` words skip the n-gram check.
    """
    lines = nonempty_lines(doc.text)
    total = len(lines)
    dup_ratio = 1.0 - len(set(lines)) / total if total else 0.0
    metrics: dict[str, float] = {"duplicate_line_ratio": dup_ratio, "top_ngram_coverage": 0.0}
    if dup_ratio > cfg.max_duplicate_line_ratio:
        return FilterVerdict(FilterReason.DUPLICATE_LINES, metrics)

    words = doc.text.split()
    if len(words) >= cfg.ngram_order:
        n = cfg.ngram_order
        counts = Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))
        top = max(counts.values())
        coverage = top * n / len(words)
        metrics["top_ngram_coverage"] = coverage
        if coverage > cfg.max_top_ngram_coverage:
            return FilterVerdict(FilterReason.REPEATED_NGRAM, metrics)
    return FilterVerdict(FilterReason.KEPT, metrics)


def evaluate_document(doc: Document, cfg: FilterConfig) -> FilterVerdict:
    """Run both filter families in order; first rejection wins."""
    length = filter_length(doc, cfg)
    if not length.keep:
        return length
    repetition = filter_repetition(doc, cfg)
    merged = dict(length.metrics)
    merged.update(repetition.metrics)
    return FilterVerdict(repetition.reason, merged)


_POOL_CFG: FilterConfig | None = None


def _pool_init(cfg: FilterConfig) -> None:
    global _POOL_CFG
    _POOL_CFG = cfg


def _pool_evaluate(doc: Document) -> tuple[Document, FilterVerdict]:
    assert _POOL_CFG is not None
    return doc, evaluate_document(doc, _POOL_CFG)


def _verdict_stream(
    docs: Iterable[Document], cfg: FilterConfig, workers: int
) -> Iterator[tuple[Document, FilterVerdict]]:
    if workers <= 1:
        for doc in docs:
            yield doc, evaluate_document(doc, cfg)
        return
    with Pool(workers, initializer=_pool_init, initargs=(cfg,)) as pool:
        yield from pool.imap(_pool_evaluate, docs, chunksize=64)


def apply_filters(
    docs: Iterable[Document], cfg: FilterConfig | None = None, workers: int = 1
) -> tuple[Iterator[Document], dict[FilterReason, int]]:
    """Filter a document stream, preserving input order among kept docs.

    Returns ``(kept, report)``. ``kept`` is a lazy iterator; ``report``
    maps every reason to a count and is complete once ``kept`` has been
    fully consumed. The counts partition the input: they sum to the number
    of documents seen. Verdicts are pure functions of (text, config), so
    the output is identical for any ``workers`` value.
    """
    cfg = cfg or FilterConfig()
    cfg.validate()
    report: dict[FilterReason, int] = {reason: 0 for reason in FilterReason}

    def _kept() -> Iterator[Document]:
        for doc, verdict in _verdict_stream(docs, cfg, workers):
            report[verdict.reason] += 1
            if verdict.keep:
                yield doc

    return _kept(), report


def report_to_json(report: dict[FilterReason, int]) -> dict[str, int]:
    """Render a filter report with stable, human-readable keys."""
    return {reason.value: report.get(reason, 0) for reason in FilterReason}
