"""Shard container format, distributed streaming, and the bounded shuffle."""

from __future__ import annotations

import random
import struct

import numpy as np
import pytest

from edupack.errors import ConfigError, DataError, ShardFormatError
from edupack.pack import PackedSequence
from edupack.shard import (
    CODEC_DEFLATE,
    CODEC_NONE,
    MAGIC,
    SHARD_PATTERN,
    ShardReader,
    ShardWriteConfig,
    SplitMix64,
    StreamConfig,
    read_header,
    shuffle,
    stream_read,
    write_shards,
)

HEADER_SIZE = 34  # magic, version, flags, seq_len, width, codec, frame, counts


def make_seqs(n: int, seq_len: int, seed: int, id_max: int = 258) -> list[list[int]]:
    rng = random.Random(seed)
    return [[rng.randrange(0, id_max + 1) for _ in range(seq_len)] for _ in range(n)]


def write(tmp_path, seqs, **kwargs):
    return write_shards(seqs, tmp_path / "shards", ShardWriteConfig(**kwargs))


def read_all(paths, **kwargs):
    return list(stream_read(paths, StreamConfig(**kwargs)))


# ── Write and read back ─────────────────────────────────────────────────


@pytest.mark.parametrize("codec", [CODEC_NONE, CODEC_DEFLATE])
@pytest.mark.parametrize("token_width", [2, 4])
def test_roundtrip_bit_exact(tmp_path, codec, token_width):
    id_max = 65535 if token_width == 2 else (1 << 32) - 1
    seqs = make_seqs(10, 7, seed=codec * 10 + token_width, id_max=id_max)
    paths = write(tmp_path, seqs, codec=codec, token_width=token_width, frame_size=4)
    got = read_all(paths)
    assert [s.tokens for s in got] == seqs
    assert [s.ordinal for s in got] == list(range(10))


def test_accepts_packed_sequences_and_bare_lists(tmp_path):
    seqs = [PackedSequence([3, 4, 5], 0), [6, 7, 8]]
    paths = write(tmp_path, seqs)
    assert [s.tokens for s in read_all(paths)] == [[3, 4, 5], [6, 7, 8]]


def test_header_fields(tmp_path):
    paths = write(tmp_path, make_seqs(10, 7, seed=5), frame_size=4)
    assert len(paths) == 1 and paths[0].name == SHARD_PATTERN % 0
    h = read_header(paths[0])
    assert (h.seq_len, h.token_width, h.codec) == (7, 4, CODEC_DEFLATE)
    assert (h.frame_size, h.num_sequences, h.frame_count) == (4, 10, 3)
    assert [h.sequences_in_frame(i) for i in range(3)] == [4, 4, 2]
    assert h.offsets[0] == HEADER_SIZE + 8 * 3
    assert list(h.offsets) == sorted(set(h.offsets))
    assert h.dtype == np.dtype("<u4")


def test_uncompressed_layout_is_exact(tmp_path):
    seqs = make_seqs(10, 7, seed=6, id_max=65535)
    paths = write(tmp_path, seqs, codec=CODEC_NONE, token_width=2, frame_size=4)
    h = read_header(paths[0])
    frame_bytes = [h.sequences_in_frame(i) * 7 * 2 for i in range(h.frame_count)]
    data_start = HEADER_SIZE + 8 * h.frame_count
    assert list(h.offsets) == [
        data_start + sum(frame_bytes[:i]) for i in range(h.frame_count)
    ]
    assert paths[0].stat().st_size == data_start + sum(frame_bytes)


def test_shard_splitting(tmp_path):
    seqs = make_seqs(10, 3, seed=7)
    paths = write(tmp_path, seqs, max_seqs_per_shard=4)
    assert [p.name for p in paths] == [SHARD_PATTERN % i for i in range(3)]
    assert [read_header(p).num_sequences for p in paths] == [4, 4, 2]
    assert [s.tokens for s in read_all(paths)] == seqs


def test_empty_input_writes_nothing(tmp_path):
    assert write(tmp_path, []) == []


def test_emit_empty_shard(tmp_path):
    paths = write(tmp_path, [], emit_empty=True)
    assert len(paths) == 1
    h = read_header(paths[0])
    assert (h.num_sequences, h.frame_count, h.offsets) == (0, 0, ())
    assert read_all(paths) == []


def test_deflate_actually_shrinks(tmp_path):
    seqs = [[7] * 512 for _ in range(64)]
    small = write(tmp_path / "c", seqs, codec=CODEC_DEFLATE)[0].stat().st_size
    big = write(tmp_path / "n", seqs, codec=CODEC_NONE)[0].stat().st_size
    assert small < big / 4


# ── Writer input validation ─────────────────────────────────────────────


def test_mixed_lengths_rejected(tmp_path):
    with pytest.raises(DataError, match="length"):
        write(tmp_path, [[3, 4], [5, 6, 7]])


def test_empty_sequences_rejected(tmp_path):
    with pytest.raises(DataError):
        write(tmp_path, [[]])


def test_token_id_must_fit_width(tmp_path):
    with pytest.raises(DataError, match="token_width"):
        write(tmp_path, [[70000, 1]], token_width=2)
    with pytest.raises(DataError):
        write(tmp_path, [[-1, 1]])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_seqs_per_shard": 0},
        {"frame_size": 0},
        {"codec": 9},
        {"token_width": 3},
    ],
)
def test_write_config_validation(tmp_path, kwargs):
    with pytest.raises(ConfigError):
        write(tmp_path, [[1, 2]], **kwargs)


# ── Corrupt files ───────────────────────────────────────────────────────


def corrupt(path, offset: int, payload: bytes):
    raw = bytearray(path.read_bytes())
    raw[offset : offset + len(payload)] = payload
    path.write_bytes(bytes(raw))


def valid_shard(tmp_path, codec=CODEC_DEFLATE):
    seqs = make_seqs(10, 7, seed=11)
    return write(tmp_path, seqs, codec=codec, frame_size=4)[0]


def test_bad_magic(tmp_path):
    path = valid_shard(tmp_path)
    corrupt(path, 0, b"XXXX")
    with pytest.raises(ShardFormatError, match="magic"):
        read_header(path)


def test_unknown_version(tmp_path):
    path = valid_shard(tmp_path)
    corrupt(path, 4, struct.pack("<H", 99))
    with pytest.raises(ShardFormatError, match="version"):
        read_header(path)


def test_truncated_header(tmp_path):
    path = valid_shard(tmp_path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(ShardFormatError):
        read_header(path)


def test_truncated_offset_table(tmp_path):
    path = valid_shard(tmp_path)
    path.write_bytes(path.read_bytes()[: HEADER_SIZE + 8])
    with pytest.raises(ShardFormatError):
        read_header(path)


def test_offsets_must_increase(tmp_path):
    path = valid_shard(tmp_path)
    first = struct.unpack_from("<Q", path.read_bytes(), HEADER_SIZE)[0]
    corrupt(path, HEADER_SIZE + 8, struct.pack("<Q", first))
    with pytest.raises(ShardFormatError):
        read_header(path)


def test_corrupt_compressed_frame(tmp_path):
    path = valid_shard(tmp_path)
    h = read_header(path)
    size = h.offsets[1] - h.offsets[0]
    corrupt(path, h.offsets[0], b"\x00" * size)
    with ShardReader(path) as reader:
        with pytest.raises(ShardFormatError):
            reader.read_frame(0)
        # Other frames stay readable; damage is contained to one frame.
        assert reader.read_frame(1).shape == (4, 7)


def test_frame_size_mismatch_detected(tmp_path):
    path = valid_shard(tmp_path, codec=CODEC_NONE)
    corrupt(path, 8, struct.pack("<I", 8))  # lie about seq_len
    with ShardReader(path) as reader:
        with pytest.raises(ShardFormatError, match="expected"):
            reader.read_frame(0)


def test_truncated_last_frame(tmp_path):
    path = valid_shard(tmp_path, codec=CODEC_NONE)
    path.write_bytes(path.read_bytes()[:-2])
    with ShardReader(path) as reader:
        with pytest.raises(ShardFormatError):
            reader.read_frame(2)


def test_frame_index_out_of_range(tmp_path):
    with ShardReader(valid_shard(tmp_path)) as reader:
        with pytest.raises(IndexError):
            reader.read_frame(3)


# ── Distributed streaming ───────────────────────────────────────────────


def sharded_fixture(tmp_path, n=23, seq_len=5, frame_size=3, max_seqs=9):
    seqs = make_seqs(n, seq_len, seed=n)
    paths = write(
        tmp_path, seqs, frame_size=frame_size, max_seqs_per_shard=max_seqs
    )
    return seqs, paths


def frame_oracle(paths):
    """(global_frame, ordinal) for every sequence, in write order."""
    out = []
    global_frame = 0
    base = 0
    for path in paths:
        h = read_header(path)
        for local in range(h.frame_count):
            for row in range(h.sequences_in_frame(local)):
                out.append((global_frame, base + local * h.frame_size + row))
            global_frame += 1
        base += h.num_sequences
    return out


@pytest.mark.parametrize("world_size", [1, 2, 3, 5, 8])
def test_rank_partition(tmp_path, world_size):
    seqs, paths = sharded_fixture(tmp_path)
    oracle = frame_oracle(paths)
    seen: list[int] = []
    for rank in range(world_size):
        got = read_all(paths, rank=rank, world_size=world_size)
        want = [o for f, o in oracle if f % world_size == rank]
        assert [s.ordinal for s in got] == want
        assert [s.tokens for s in got] == [seqs[o] for o in want]
        seen.extend(s.ordinal for s in got)
    assert sorted(seen) == list(range(len(seqs)))


def test_only_assigned_frames_are_read(tmp_path):
    _, paths = sharded_fixture(tmp_path, n=12, frame_size=2, max_seqs=4)
    for rank in range(2):
        touched = []
        stream = stream_read(
            paths,
            StreamConfig(rank=rank, world_size=2),
            on_frame_read=lambda p, i: touched.append((p.name, i)),
        )
        list(stream)
        want = [
            (SHARD_PATTERN % shard, local)
            for shard in range(3)
            for local in range(2)
            if (shard * 2 + local) % 2 == rank
        ]
        assert touched == want


def test_shards_must_agree_on_seq_len(tmp_path):
    a = write(tmp_path / "a", make_seqs(4, 5, seed=1))
    b = write(tmp_path / "b", make_seqs(4, 6, seed=2))
    with pytest.raises(ShardFormatError, match="seq_len"):
        stream_read(a + b)


def test_header_validation_is_eager(tmp_path):
    path = valid_shard(tmp_path)
    corrupt(path, 0, b"XXXX")
    with pytest.raises(ShardFormatError):
        stream_read([path])  # before any iteration


@pytest.mark.parametrize(
    "kwargs",
    [
        {"world_size": 0},
        {"rank": 2, "world_size": 2},
        {"rank": -1},
        {"shuffle_buffer": -1},
    ],
)
def test_stream_config_validation(kwargs):
    with pytest.raises(ConfigError):
        StreamConfig(**kwargs).validate()


# ── Generator and shuffle ───────────────────────────────────────────────


def test_splitmix64_reference_vectors():
    gen = SplitMix64(0)
    assert [gen.next_u64() for _ in range(5)] == [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
        17909611376780542444,
        1961750202426094747,
    ]
    gen = SplitMix64(1234567)
    assert [gen.next_u64() for _ in range(5)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]


def test_splitmix64_wraps_large_seeds():
    assert SplitMix64((1 << 64) + 5).next_u64() == SplitMix64(5).next_u64()


def test_shuffle_is_a_permutation():
    items = list(range(500))
    out = list(shuffle(iter(items), buffer_size=64, seed=3))
    assert sorted(out) == items
    assert out != items


def test_shuffle_deterministic_for_seed():
    items = list(range(300))
    a = list(shuffle(iter(items), 32, seed=9))
    b = list(shuffle(iter(items), 32, seed=9))
    c = list(shuffle(iter(items), 32, seed=10))
    assert a == b
    assert a != c


def test_shuffle_buffer_one_is_identity():
    items = list(range(100))
    assert list(shuffle(iter(items), 1, seed=4)) == items


def test_shuffle_buffer_larger_than_input():
    items = list(range(10))
    out = list(shuffle(iter(items), 1000, seed=5))
    assert sorted(out) == items


def test_shuffle_empty():
    assert list(shuffle(iter([]), 16, seed=0)) == []


def test_shuffle_displacement_bound():
    n, buf = 2000, 37
    for seed in (0, 1, 2):
        out = list(shuffle(iter(range(n)), buf, seed))
        assert sorted(out) == list(range(n))
        # An element never appears more than buffer_size slots early.
        assert max(item - pos for pos, item in enumerate(out)) < buf


def test_shuffle_rejects_bad_buffer():
    with pytest.raises(ConfigError):
        list(shuffle(iter([1]), 0, seed=0))


def test_stream_shuffle_composes_with_plain_read(tmp_path):
    seqs, paths = sharded_fixture(tmp_path, n=40, frame_size=4, max_seqs=16)
    plain = read_all(paths, rank=1, world_size=2)
    mixed = read_all(paths, rank=1, world_size=2, shuffle_buffer=8, seed=21)
    assert mixed == list(shuffle(iter(plain), 8, 21))
    assert sorted(s.ordinal for s in mixed) == [s.ordinal for s in plain]


def test_stream_shuffle_deterministic(tmp_path):
    _, paths = sharded_fixture(tmp_path, n=30, frame_size=2, max_seqs=30)
    a = read_all(paths, shuffle_buffer=8, seed=2)
    b = read_all(paths, shuffle_buffer=8, seed=2)
    assert a == b
