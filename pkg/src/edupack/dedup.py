"""Exact deduplication with hash buckets verified by full string compare.

Duplicates are exact matches of the canonical text form: trailing
whitespace stripped per line, leading and trailing blank lines dropped,
everything else byte-for-byte intact. Interior spacing differences are
intentional content, so they are preserved.

The index hashes each canonical text to a 128-bit key, but a hash match
alone never drops a document: the candidate is compared against every
kept text in the bucket, character by character. The result is exact
deduplication at hash-lookup speed, and a deliberately weak ``hash_fn``
(every text colliding into a handful of buckets) only slows the scan, it
cannot change the output. The first occurrence always wins.

Kept canonical texts must stay reachable for those comparisons. They are
held in memory up to a byte budget and appended to an anonymous spill
file beyond it, so memory stays bounded while no document is ever
re-read from the source corpus.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
from dataclasses import dataclass, field
from typing import IO, Callable, Hashable, Iterable, Iterator

from .corpus import Document


def canonicalize(text: str) -> str:
    """Normalize incidental whitespace without touching interior content."""
    lines = [line.rstrip() for line in text.split("\n")]
    start, end = 0, len(lines)
    while start < end and not lines[start]:
        start += 1
    while end > start and not lines[end - 1]:
        end -= 1
    return "\n".join(lines[start:end])


def default_hash(text: str) -> bytes:
    """128-bit content key. Collisions are tolerated, never trusted."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()


class _TextStore:
    """Canonical texts, in memory up to a budget, then spilled to disk.

    ``put`` returns an opaque handle; ``get`` resolves it. Spilled texts
    live in an anonymous temp file that the OS reclaims when the store is
    garbage collected.
    """

    def __init__(self, spill_threshold_bytes: int | None = None) -> None:
        self._spill_threshold = spill_threshold_bytes
        self._in_memory_bytes = 0
        self._spill: IO[bytes] | None = None
        self._spill_end = 0

    def put(self, text: str) -> object:
        encoded = text.encode("utf-8")
        if (
            self._spill_threshold is not None
            and self._in_memory_bytes + len(encoded) > self._spill_threshold
        ):
            if self._spill is None:
                self._spill = tempfile.TemporaryFile()
            self._spill.seek(self._spill_end)
            self._spill.write(encoded)
            handle = (self._spill_end, len(encoded))
            self._spill_end += len(encoded)
            return handle
        self._in_memory_bytes += len(encoded)
        return text

    def get(self, handle: object) -> str:
        if isinstance(handle, str):
            return handle
        offset, length = handle  # type: ignore[misc]
        assert self._spill is not None
        self._spill.seek(offset)
        return self._spill.read(length).decode("utf-8")


@dataclass
class DedupIndex:
    """Admission index plus running counts for one dedup pass."""

    kept_count: int = 0
    dropped_count: int = 0
    # hash key -> [(kept doc id, text handle), ...]; bucket texts are
    # pairwise distinct by construction.
    _buckets: dict[Hashable, list[tuple[str, object]]] = field(default_factory=dict)


def dedup_stream(
    docs: Iterable[Document],
    *,
    hash_fn: Callable[[str], Hashable] | None = None,
    spill_threshold_bytes: int | None = None,
    audit_sink: IO[str] | None = None,
) -> tuple[Iterator[Document], DedupIndex]:
    """Drop exact duplicates from a stream, keeping first occurrences.

    Returns ``(unique, index)``. ``unique`` is a lazy iterator preserving
    input order; ``index`` carries kept/dropped counts, final once the
    iterator is exhausted. When ``audit_sink`` is given, one JSON line
    ``{"dropped_id": ..., "kept_id": ...}`` is written per dropped
    document. Admission is strictly serial, so results do not depend on
    timing.
    """
    key_of = hash_fn or default_hash
    index = DedupIndex()
    store = _TextStore(spill_threshold_bytes)

    def _unique() -> Iterator[Document]:
        for doc in docs:
            canon = canonicalize(doc.text)
            bucket = index._buckets.setdefault(key_of(canon), [])
            kept_id = None
            for existing_id, handle in bucket:
                if store.get(handle) == canon:
                    kept_id = existing_id
                    break
            if kept_id is not None:
                index.dropped_count += 1
                if audit_sink is not None:
                    line = json.dumps(
                        {"dropped_id": doc.id, "kept_id": kept_id}, ensure_ascii=False
                    )
                    audit_sink.write(line + "\n")
                continue
            bucket.append((doc.id, store.put(canon)))
            index.kept_count += 1
            yield doc

    return _unique(), index
