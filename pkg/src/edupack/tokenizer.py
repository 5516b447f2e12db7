"""Byte-level tokenization and the intermediate token-stream format.

The built-in tokenizer maps each UTF-8 byte to one token id, shifted up
by three to leave room for special ids::

    0  document separator
    1  beginning of sequence
    2  reserved
    3+ byte value + 3   (vocab size 259)

Byte-level encoding is trivially reversible and never falls back to an
unknown token, which makes pipeline plumbing exactly testable end to
end. Any object exposing ``encode(text) -> list[int]`` satisfies the
encoder contract, so a trained subword tokenizer can be swapped in
without touching the driver.

``tokenize_parallel`` fans documents out to a worker pool and restores
input order on the way back: output is byte-identical for any worker
count.

Token streams move between pipeline stages either in memory or through
a flat binary file: for each record, a little-endian u64 token count
followed by that many little-endian u32 token ids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Iterable, Iterator, Protocol, Sequence

import numpy as np

from .corpus import Document
from .errors import DataError, TokenizeError

DOC_SEP_ID = 0
BOS_ID = 1
RESERVED_ID = 2
BYTE_OFFSET = 3


@dataclass(frozen=True)
class TokenizerSpec:
    """Identity and id layout of a tokenizer, carried alongside its output."""

    name: str
    vocab_size: int
    doc_sep_id: int = DOC_SEP_ID
    bos_id: int = BOS_ID
    reserved_id: int = RESERVED_ID
    byte_offset: int = BYTE_OFFSET

    def validate(self) -> None:
        specials = (self.doc_sep_id, self.bos_id, self.reserved_id)
        if len(set(specials)) != len(specials):
            raise DataError("special token ids must be distinct")
        if any(s >= self.byte_offset for s in specials):
            raise DataError("special token ids must sit below byte_offset")
        if self.vocab_size < self.byte_offset:
            raise DataError("vocab_size too small for the id layout")


class Encoder(Protocol):
    """Minimal contract a tokenizer must satisfy for the parallel driver."""

    spec: TokenizerSpec

    def encode(self, text: str) -> list[int]: ...


@dataclass(frozen=True)
class ByteTokenizer:
    """Reversible byte-level tokenizer over UTF-8 input."""

    spec: TokenizerSpec = TokenizerSpec(name="byte-v1", vocab_size=BYTE_OFFSET + 256)

    def __post_init__(self) -> None:
        self.spec.validate()
        if self.spec.vocab_size < self.spec.byte_offset + 256:
            raise DataError("byte tokenizer needs byte_offset + 256 ids")

    def encode(self, text: str) -> list[int]:
        offset = self.spec.byte_offset
        return [b + offset for b in text.encode("utf-8")]

    def decode(self, tokens: Sequence[int]) -> str:
        offset = self.spec.byte_offset
        raw = bytearray()
        for t in tokens:
            if not offset <= t < offset + 256:
                raise DataError(f"token id {t} is not a byte token")
            raw.append(t - offset)
        return raw.decode("utf-8")


@dataclass(slots=True)
class TokenizedDoc:
    id: str
    tokens: list[int]


_POOL_ENCODER: Encoder | None = None


def _pool_init(encoder: Encoder) -> None:
    global _POOL_ENCODER
    _POOL_ENCODER = encoder


def _pool_encode(doc: Document) -> tuple[str, list[int] | None, str | None]:
    # Failures come back as data, not exceptions: the driver re-raises in
    # the parent with the document id attached.
    assert _POOL_ENCODER is not None
    try:
        return doc.id, _POOL_ENCODER.encode(doc.text), None
    except Exception as exc:  # noqa: BLE001 - worker must not crash the pool
        return doc.id, None, f"{type(exc).__name__}: {exc}"


def tokenize_parallel(
    docs: Iterable[Document], encoder: Encoder | None = None, workers: int = 1
) -> Iterator[TokenizedDoc]:
    """Tokenize a document stream, preserving input order exactly.

    With ``workers > 1`` documents are encoded in a process pool; results
    are consumed in submission order, so the output never depends on
    worker scheduling. Encoder failures raise :class:`TokenizeError`
    carrying the offending document id.
    """
    enc = encoder or ByteTokenizer()
    if workers <= 1:
        for doc in docs:
            try:
                tokens = enc.encode(doc.text)
            except Exception as exc:  # noqa: BLE001
                raise TokenizeError(doc.id, f"{type(exc).__name__}: {exc}") from exc
            yield TokenizedDoc(doc.id, tokens)
        return

    with Pool(workers, initializer=_pool_init, initargs=(enc,)) as pool:
        for doc_id, tokens, err in pool.imap(_pool_encode, docs, chunksize=32):
            if err is not None:
                raise TokenizeError(doc_id, err)
            assert tokens is not None
            yield TokenizedDoc(doc_id, tokens)


# ── Token-stream file format ────────────────────────────────────────────

_COUNT = struct.Struct("<Q")
_MAX_ID = (1 << 32) - 1


def token_ids_of(item: object) -> Sequence[int]:
    """Accept TokenizedDoc, PackedSequence, or a bare id sequence."""
    tokens = getattr(item, "tokens", item)
    return tokens  # type: ignore[return-value]


def write_token_file(items: Iterable[object], path: str | Path) -> int:
    """Write token records; returns the number of records written."""
    count = 0
    with open(path, "wb") as fh:
        for item in items:
            tokens = token_ids_of(item)
            arr = np.asarray(tokens, dtype=np.int64)
            if arr.size and (arr.min() < 0 or arr.max() > _MAX_ID):
                raise DataError("token id out of range for u32 storage")
            fh.write(_COUNT.pack(arr.size))
            fh.write(arr.astype("<u4").tobytes())
            count += 1
    return count


def iter_token_file(path: str | Path) -> Iterator[list[int]]:
    """Stream token records back; ids only, record boundaries preserved."""
    with open(path, "rb") as fh:
        while True:
            head = fh.read(_COUNT.size)
            if not head:
                return
            if len(head) < _COUNT.size:
                raise DataError(f"{path}: truncated record header")
            (n,) = _COUNT.unpack(head)
            payload = fh.read(4 * n)
            if len(payload) < 4 * n:
                raise DataError(f"{path}: truncated token record")
            yield np.frombuffer(payload, dtype="<u4").tolist()
