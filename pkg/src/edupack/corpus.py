"""Document model, JSONL corpus I/O, and single-pass corpus statistics.

A corpus file is JSONL: one UTF-8 encoded JSON object per line with keys
``id`` (non-empty string), ``text`` (string) and an optional ``meta``
object that maps strings to strings. Blank lines are skipped so trailing
newlines are harmless. Invalid UTF-8 is rejected outright rather than
repaired: downstream hashing and tokenization must be deterministic, and
lossy replacement would silently break that.

Readers are generators, so corpora far larger than memory stream through
one document at a time.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import DataError, JsonlError


@dataclass(slots=True)
class Document:
    """One raw text record, the unit of filtering and deduplication."""

    id: str
    text: str
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(slots=True)
class CorpusStats:
    doc_count: int = 0
    total_chars: int = 0
    total_nonempty_lines: int = 0
    mean_doc_chars: float = 0.0


def nonempty_lines(text: str) -> list[str]:
    """Split on newlines, trim surrounding whitespace, drop empty results."""
    out = []
    for line in text.split("\n"):
        stripped = line.strip()
        if stripped:
            out.append(stripped)
    return out


def _parse_record(path: object, line_no: int, raw: bytes) -> Document:
    try:
        decoded = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise JsonlError(path, line_no, f"invalid UTF-8: {exc}") from exc
    try:
        obj = json.loads(decoded)
    except json.JSONDecodeError as exc:
        raise JsonlError(path, line_no, f"malformed JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise JsonlError(path, line_no, "record is not a JSON object")

    doc_id = obj.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise JsonlError(path, line_no, 'missing or empty "id" field')
    text = obj.get("text")
    if not isinstance(text, str):
        raise JsonlError(path, line_no, 'missing or non-string "text" field')

    meta_obj = obj.get("meta", {})
    if not isinstance(meta_obj, dict):
        raise JsonlError(path, line_no, '"meta" must be an object')
    for key, value in meta_obj.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise JsonlError(path, line_no, '"meta" must map strings to strings')

    unknown = set(obj) - {"id", "text", "meta"}
    if unknown:
        raise JsonlError(path, line_no, f"unknown field(s): {sorted(unknown)}")
    return Document(id=doc_id, text=text, meta=dict(meta_obj))


def read_documents(path: str | Path) -> Iterator[Document]:
    """Stream documents from a JSONL file (or stdin when path is ``-``).

    Lazy: each document is parsed only when the caller asks for it, so a
    malformed line is reported (with its line number) at the point the
    stream reaches it, not before.
    """
    if str(path) == "-":
        yield from _read_stream(sys.stdin.buffer, "<stdin>")
        return
    with open(path, "rb") as fh:
        yield from _read_stream(fh, path)


def _read_stream(fh: IO[bytes], label: object) -> Iterator[Document]:
    for line_no, raw in enumerate(fh, start=1):
        raw = raw.rstrip(b"\r\n")
        if not raw.strip():
            continue
        yield _parse_record(label, line_no, raw)


def document_to_json(doc: Document) -> str:
    """Serialize one document to its canonical single-line JSON form."""
    obj: dict[str, object] = {"id": doc.id, "text": doc.text}
    if doc.meta:
        obj["meta"] = doc.meta
    return json.dumps(obj, ensure_ascii=False)


def write_documents(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents as JSONL, one object per line. Returns the count.

    A duplicate id within the stream is an error: ids are the join key for
    the dedup audit trail and must be unique per file.
    """
    if str(path) == "-":
        return _write_stream(docs, sys.stdout)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        return _write_stream(docs, fh)


def _write_stream(docs: Iterable[Document], fh: IO[str]) -> int:
    seen: set[str] = set()
    count = 0
    for doc in docs:
        if doc.id in seen:
            raise DataError(f"duplicate document id {doc.id!r} in output stream")
        seen.add(doc.id)
        fh.write(document_to_json(doc))
        fh.write("\n")
        count += 1
    return count


def corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    """Aggregate counts in a single pass over the stream."""
    stats = CorpusStats()
    for doc in docs:
        stats.doc_count += 1
        stats.total_chars += len(doc.text)
        stats.total_nonempty_lines += len(nonempty_lines(doc.text))
    if stats.doc_count:
        stats.mean_doc_chars = stats.total_chars / stats.doc_count
    return stats
