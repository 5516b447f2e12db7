"""Pack tokenized documents into fixed-length training sequences.

Documents are laid end to end into one flat token stream, a document
separator appended after each document (configurable), and the stream is
cut into consecutive windows of exactly ``seq_len`` tokens. There is no
padding: a final partial window is dropped and its size reported, so
``sequences * seq_len + dropped_tail`` always equals the flat stream
length. Memory use is bounded by one sequence plus the largest single
document.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import ConfigError
from .tokenizer import DOC_SEP_ID, token_ids_of


@dataclass(frozen=True)
class PackConfig:
    seq_len: int = 2000
    insert_doc_sep: bool = True
    sep_id: int = DOC_SEP_ID

    def validate(self) -> None:
        if self.seq_len < 2:
            raise ConfigError("seq_len must be >= 2")
        if self.sep_id < 0:
            raise ConfigError("sep_id must be >= 0")


@dataclass(slots=True)
class PackedSequence:
    tokens: list[int]
    ordinal: int


@dataclass(slots=True)
class PackStats:
    sequences: int = 0
    flat_tokens: int = 0
    dropped_tail: int = 0


def pack_stream(
    docs: Iterable[object], cfg: PackConfig | None = None
) -> tuple[Iterator[PackedSequence], PackStats]:
    """Cut a stream of token records into ``seq_len``-sized sequences.

    Accepts TokenizedDoc objects or bare token-id sequences. Returns
    ``(sequences, stats)``; stats are final once the iterator is
    exhausted. Sequences may span document boundaries, which is exactly
    why the separator token exists.
    """
    cfg = cfg or PackConfig()
    cfg.validate()
    stats = PackStats()

    def _sequences() -> Iterator[PackedSequence]:
        seq_len = cfg.seq_len
        buffer: list[int] = []
        for doc in docs:
            buffer.extend(token_ids_of(doc))
            if cfg.insert_doc_sep:
                buffer.append(cfg.sep_id)
            if len(buffer) >= seq_len:
                start = 0
                while len(buffer) - start >= seq_len:
                    yield PackedSequence(buffer[start : start + seq_len], stats.sequences)
                    stats.sequences += 1
                    start += seq_len
                del buffer[:start]
        stats.flat_tokens = stats.sequences * seq_len + len(buffer)
        stats.dropped_tail = len(buffer)

    return _sequences(), stats
