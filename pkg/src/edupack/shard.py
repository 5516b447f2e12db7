"""Seekable compressed shard container and distributed streaming reader.

Shard files (``shard-00000.edsh`` ...) hold fixed-length token sequences
grouped into independently compressed frames, so a reader can jump to
any frame without inflating the rest of the file.

Binary layout, all fields little-endian::

    offset  size  field
    0       4     magic "EDSH"
    4       2     version (u16, currently 1)
    6       2     flags (u16, bit 0 = compressed)
    8       4     seq_len (u32, tokens per sequence)
    12      1     token_width (u8, bytes per token: 2 or 4)
    13      1     codec (u8, 0 = none, 1 = raw DEFLATE)
    14      4     frame_size (u32, sequences per frame)
    18      8     num_sequences (u64)
    26      8     frame_count (u64, = ceil(num_sequences / frame_size))
    34      8*N   frame offset table (u64 absolute file offsets,
                  strictly increasing)

A frame is the codec-applied concatenation of ``frame_size`` sequences'
raw token bytes; the final frame may hold fewer. DEFLATE means raw
RFC 1951 streams at a fixed level, so identical input always produces
identical files.

``stream_read`` numbers frames globally across the given files in path
order and hands rank ``r`` of ``world_size`` every frame whose global
index is congruent to ``r``. Ranks together cover each sequence exactly
once, and a rank never even inflates a frame it does not own. Memory is
bounded by the headers plus one frame.

``shuffle`` is a bounded-buffer shuffle driven by SplitMix64, so the
emission order is a pure function of (stream, buffer size, seed).
"""

from __future__ import annotations

import shutil
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator, Sequence, TypeVar

import numpy as np

from .errors import ConfigError, DataError, ShardFormatError
from .pack import PackedSequence
from .tokenizer import token_ids_of

MAGIC = b"EDSH"
VERSION = 1
FLAG_COMPRESSED = 1

CODEC_NONE = 0
CODEC_DEFLATE = 1
CODEC_NAMES = {"none": CODEC_NONE, "deflate": CODEC_DEFLATE}
_DEFLATE_LEVEL = 6

_HEADER = struct.Struct("<4sHHIBBIQQ")
_OFFSET = struct.Struct("<Q")
SHARD_PATTERN = "shard-%05d.edsh"

T = TypeVar("T")


# ── Header ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ShardHeader:
    seq_len: int
    token_width: int
    codec: int
    frame_size: int
    num_sequences: int
    frame_count: int
    offsets: tuple[int, ...]

    def sequences_in_frame(self, index: int) -> int:
        if not 0 <= index < self.frame_count:
            raise IndexError(f"frame {index} out of range")
        if index < self.frame_count - 1:
            return self.frame_size
        return self.num_sequences - self.frame_size * (self.frame_count - 1)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<u2" if self.token_width == 2 else "<u4")


def _expected_frame_count(num_sequences: int, frame_size: int) -> int:
    return -(-num_sequences // frame_size) if num_sequences else 0


def read_header(source: str | Path | IO[bytes]) -> ShardHeader:
    """Parse and validate a shard header without touching frame data."""
    if hasattr(source, "read"):
        return _read_header(source, "<stream>")  # type: ignore[arg-type]
    with open(source, "rb") as fh:  # type: ignore[arg-type]
        return _read_header(fh, source)


def _read_header(fh: IO[bytes], label: object) -> ShardHeader:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ShardFormatError(f"{label}: file too short for header")
    magic, version, flags, seq_len, width, codec, frame_size, num_seqs, frame_count = (
        _HEADER.unpack(raw)
    )
    if magic != MAGIC:
        raise ShardFormatError(f"{label}: bad magic {magic!r}")
    if version != VERSION:
        raise ShardFormatError(f"{label}: unsupported version {version}")
    if width not in (2, 4):
        raise ShardFormatError(f"{label}: token_width must be 2 or 4, got {width}")
    if codec not in (CODEC_NONE, CODEC_DEFLATE):
        raise ShardFormatError(f"{label}: unknown codec {codec}")
    if bool(flags & FLAG_COMPRESSED) != (codec != CODEC_NONE):
        raise ShardFormatError(f"{label}: flags disagree with codec")
    if num_seqs and frame_size < 1:
        raise ShardFormatError(f"{label}: frame_size must be >= 1")
    if frame_size and frame_count != _expected_frame_count(num_seqs, frame_size):
        raise ShardFormatError(
            f"{label}: frame_count {frame_count} inconsistent with "
            f"{num_seqs} sequences of frame_size {frame_size}"
        )
    table = fh.read(_OFFSET.size * frame_count)
    if len(table) < _OFFSET.size * frame_count:
        raise ShardFormatError(f"{label}: truncated offset table")
    offsets = tuple(
        _OFFSET.unpack_from(table, i * _OFFSET.size)[0] for i in range(frame_count)
    )
    data_start = _HEADER.size + _OFFSET.size * frame_count
    if offsets and offsets[0] != data_start:
        raise ShardFormatError(f"{label}: first frame offset {offsets[0]} != {data_start}")
    if any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ShardFormatError(f"{label}: offsets not strictly increasing")
    return ShardHeader(seq_len, width, codec, frame_size, num_seqs, frame_count, offsets)


# ── Writing ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ShardWriteConfig:
    max_seqs_per_shard: int = 65536
    frame_size: int = 64
    codec: int = CODEC_DEFLATE
    token_width: int = 4
    emit_empty: bool = False

    def validate(self) -> None:
        if self.max_seqs_per_shard < 1:
            raise ConfigError("max_seqs_per_shard must be >= 1")
        if self.frame_size < 1:
            raise ConfigError("frame_size must be >= 1")
        if self.codec not in (CODEC_NONE, CODEC_DEFLATE):
            raise ConfigError(f"unknown codec {self.codec}")
        if self.token_width not in (2, 4):
            raise ConfigError("token_width must be 2 or 4")


def _compress(data: bytes, codec: int) -> bytes:
    if codec == CODEC_NONE:
        return data
    comp = zlib.compressobj(_DEFLATE_LEVEL, zlib.DEFLATED, -zlib.MAX_WBITS)
    return comp.compress(data) + comp.flush()


def _decompress(data: bytes, codec: int, label: object) -> bytes:
    if codec == CODEC_NONE:
        return data
    try:
        decomp = zlib.decompressobj(-zlib.MAX_WBITS)
        out = decomp.decompress(data) + decomp.flush()
    except zlib.error as exc:
        raise ShardFormatError(f"{label}: corrupt frame: {exc}") from exc
    if decomp.unused_data:
        raise ShardFormatError(f"{label}: trailing garbage in frame")
    return out


class _ShardSpool:
    """Frames for one shard, compressed as they fill and spooled to disk.

    The header needs the frame count and every frame offset before the
    first frame byte, so frames are staged in a temp file and copied into
    place once the shard is sealed.
    """

    def __init__(self, cfg: ShardWriteConfig, seq_len: int) -> None:
        self.cfg = cfg
        self.seq_len = seq_len
        self.tmp = tempfile.TemporaryFile()
        self.frame_sizes: list[int] = []
        self.pending = bytearray()
        self.pending_seqs = 0
        self.num_sequences = 0

    def add(self, seq_bytes: bytes) -> None:
        self.pending += seq_bytes
        self.pending_seqs += 1
        self.num_sequences += 1
        if self.pending_seqs == self.cfg.frame_size:
            self._flush_frame()

    def _flush_frame(self) -> None:
        if not self.pending_seqs:
            return
        frame = _compress(bytes(self.pending), self.cfg.codec)
        self.tmp.write(frame)
        self.frame_sizes.append(len(frame))
        self.pending.clear()
        self.pending_seqs = 0

    def seal(self, path: Path) -> None:
        self._flush_frame()
        frame_count = len(self.frame_sizes)
        flags = FLAG_COMPRESSED if self.cfg.codec != CODEC_NONE else 0
        data_start = _HEADER.size + _OFFSET.size * frame_count
        offsets = []
        pos = data_start
        for size in self.frame_sizes:
            offsets.append(pos)
            pos += size
        with open(path, "wb") as out:
            out.write(
                _HEADER.pack(
                    MAGIC,
                    VERSION,
                    flags,
                    self.seq_len,
                    self.cfg.token_width,
                    self.cfg.codec,
                    self.cfg.frame_size,
                    self.num_sequences,
                    frame_count,
                )
            )
            for off in offsets:
                out.write(_OFFSET.pack(off))
            self.tmp.seek(0)
            shutil.copyfileobj(self.tmp, out)
        self.tmp.close()


def write_shards(
    seqs: Iterable[object], out_dir: str | Path, cfg: ShardWriteConfig | None = None
) -> list[Path]:
    """Write fixed-length sequences into one or more shard files.

    All sequences must share one length (taken from the first), and every
    token id must fit ``token_width`` bytes. An empty input produces no
    files unless ``emit_empty`` asks for a single sequence-free shard.
    """
    cfg = cfg or ShardWriteConfig()
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dtype = np.dtype("<u2" if cfg.token_width == 2 else "<u4")
    id_limit = 1 << (8 * cfg.token_width)
    paths: list[Path] = []
    spool: _ShardSpool | None = None
    seq_len: int | None = None

    def _seal(sp: _ShardSpool) -> None:
        path = out_dir / (SHARD_PATTERN % len(paths))
        sp.seal(path)
        paths.append(path)

    for item in seqs:
        tokens = token_ids_of(item)
        arr = np.asarray(tokens, dtype=np.int64)
        if seq_len is None:
            seq_len = int(arr.size)
            if seq_len == 0:
                raise DataError("sequences must be non-empty")
        elif arr.size != seq_len:
            raise DataError(
                f"sequence length {arr.size} differs from first sequence ({seq_len})"
            )
        if arr.size and (arr.min() < 0 or arr.max() >= id_limit):
            raise DataError(
                f"token id out of range for token_width {cfg.token_width}"
            )
        if spool is None:
            spool = _ShardSpool(cfg, seq_len)
        spool.add(arr.astype(dtype).tobytes())
        if spool.num_sequences == cfg.max_seqs_per_shard:
            _seal(spool)
            spool = None

    if spool is not None:
        _seal(spool)
    elif not paths and cfg.emit_empty:
        empty = _ShardSpool(cfg, 0)
        _seal(empty)
    return paths


# ── Reading ─────────────────────────────────────────────────────────────


class ShardReader:
    """Random access to one shard file, one frame at a time."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._fh: IO[bytes] = open(self.path, "rb")
        try:
            self.header = _read_header(self._fh, self.path)
            self._file_size = self.path.stat().st_size
            h = self.header
            if h.frame_count and h.offsets[-1] >= self._file_size:
                raise ShardFormatError(f"{self.path}: offset table past end of file")
        except Exception:
            self._fh.close()
            raise

    def __enter__(self) -> ShardReader:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def close(self) -> None:
        self._fh.close()

    def read_frame(self, index: int) -> np.ndarray:
        """Decode frame ``index`` to an array of shape (n_seqs, seq_len)."""
        h = self.header
        n_seqs = h.sequences_in_frame(index)
        start = h.offsets[index]
        end = h.offsets[index + 1] if index + 1 < h.frame_count else self._file_size
        self._fh.seek(start)
        payload = self._fh.read(end - start)
        if len(payload) < end - start:
            raise ShardFormatError(f"{self.path}: truncated frame {index}")
        raw = _decompress(payload, h.codec, f"{self.path} frame {index}")
        expected = n_seqs * h.seq_len * h.token_width
        if len(raw) != expected:
            raise ShardFormatError(
                f"{self.path}: frame {index} holds {len(raw)} bytes, expected {expected}"
            )
        return np.frombuffer(raw, dtype=h.dtype).reshape(n_seqs, h.seq_len)


@dataclass(frozen=True)
class StreamConfig:
    rank: int = 0
    world_size: int = 1
    shuffle_buffer: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.world_size < 1:
            raise ConfigError("world_size must be >= 1")
        if not 0 <= self.rank < self.world_size:
            raise ConfigError("rank must satisfy 0 <= rank < world_size")
        if self.shuffle_buffer < 0:
            raise ConfigError("shuffle_buffer must be >= 0")


def stream_read(
    paths: Sequence[str | Path],
    cfg: StreamConfig | None = None,
    on_frame_read: Callable[[Path, int], None] | None = None,
) -> Iterator[PackedSequence]:
    """Stream this rank's share of the sequences in a shard set.

    Frames are numbered globally across ``paths`` in order; rank ``r``
    receives exactly the frames with ``global_index % world_size == r``,
    in that order, and no other frame is read or inflated. Headers are
    validated up front so a bad file fails fast. ``on_frame_read`` is
    invoked once per frame actually decoded (instrumentation for tests
    and I/O audits). Sequence ordinals are global write-order positions.
    """
    cfg = cfg or StreamConfig()
    cfg.validate()
    shard_paths = [Path(p) for p in paths]
    headers = [read_header(p) for p in shard_paths]
    seq_lens = {h.seq_len for h in headers if h.num_sequences}
    if len(seq_lens) > 1:
        raise ShardFormatError(f"shards disagree on seq_len: {sorted(seq_lens)}")

    def _assigned() -> Iterator[PackedSequence]:
        global_frame = 0
        seq_base = 0
        for path, header in zip(shard_paths, headers):
            if not header.frame_count:
                continue
            with ShardReader(path) as reader:
                for local in range(header.frame_count):
                    if global_frame % cfg.world_size == cfg.rank:
                        if on_frame_read is not None:
                            on_frame_read(path, local)
                        frame = reader.read_frame(local)
                        first = seq_base + local * header.frame_size
                        for row in range(frame.shape[0]):
                            yield PackedSequence(frame[row].tolist(), first + row)
                    global_frame += 1
            seq_base += header.num_sequences

    stream: Iterator[PackedSequence] = _assigned()
    if cfg.shuffle_buffer:
        stream = shuffle(stream, cfg.shuffle_buffer, cfg.seed)
    return stream


# ── Shuffling ───────────────────────────────────────────────────────────


class SplitMix64:
    """Reference SplitMix64 generator; 64-bit state, 64-bit outputs."""

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int) -> None:
        self._state = seed & self._MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & self._MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)


def shuffle(items: Iterable[T], buffer_size: int, seed: int) -> Iterator[T]:
    """Bounded-buffer shuffle: deterministic for a given seed.

    A buffer of ``buffer_size`` items is kept full; each step draws
    ``next_u64() % len(buffer)``, emits that slot and refills it from
    upstream (replace in place). At end of stream the buffer drains the
    same way, the emptied slot backfilled from the buffer's tail. An
    element can be delayed arbitrarily but never emitted more than
    ``buffer_size`` positions ahead of its arrival order, and
    ``buffer_size == 1`` is the identity.
    """
    if buffer_size < 1:
        raise ConfigError("buffer_size must be >= 1")
    rng = SplitMix64(seed)
    buffer: list[T] = []
    it = iter(items)
    for item in it:
        buffer.append(item)
        if len(buffer) == buffer_size:
            break
    for item in it:
        idx = rng.next_u64() % len(buffer)
        out = buffer[idx]
        buffer[idx] = item
        yield out
    while buffer:
        idx = rng.next_u64() % len(buffer)
        out = buffer[idx]
        buffer[idx] = buffer[-1]
        buffer.pop()
        yield out
