"""Byte tokenizer, parallel driver, and the token-record file format."""

from __future__ import annotations

import random

import pytest

from edupack.corpus import Document
from edupack.errors import DataError, TokenizeError
from edupack.tokenizer import (
    BOS_ID,
    BYTE_OFFSET,
    DOC_SEP_ID,
    RESERVED_ID,
    ByteTokenizer,
    TokenizedDoc,
    TokenizerSpec,
    iter_token_file,
    tokenize_parallel,
    write_token_file,
)


def random_text(rng: random.Random, max_len: int = 80) -> str:
    chars = []
    for _ in range(rng.randrange(0, max_len)):
        kind = rng.randrange(4)
        if kind == 0:
            chars.append(chr(rng.randrange(0x20, 0x7F)))
        elif kind == 1:
            chars.append(chr(rng.randrange(0xA0, 0x800)))
        elif kind == 2:
            chars.append(chr(rng.randrange(0x800, 0xD800)))
        else:
            chars.append(rng.choice("\n\t ☃语🙂"))
    return "".join(chars)


def test_id_layout_constants():
    assert (DOC_SEP_ID, BOS_ID, RESERVED_ID, BYTE_OFFSET) == (0, 1, 2, 3)
    assert ByteTokenizer().spec.vocab_size == 259


def test_ascii_example():
    assert ByteTokenizer().encode("Hi") == [75, 108]


def test_empty_text():
    assert ByteTokenizer().encode("") == []


def test_multibyte_example():
    # U+00E9 is 0xC3 0xA9 in UTF-8.
    assert ByteTokenizer().encode("é") == [0xC3 + 3, 0xA9 + 3]


def test_token_count_equals_utf8_length():
    rng = random.Random(13)
    tok = ByteTokenizer()
    for _ in range(200):
        text = random_text(rng)
        assert len(tok.encode(text)) == len(text.encode("utf-8"))


def test_roundtrip_random_unicode():
    rng = random.Random(37)
    tok = ByteTokenizer()
    for _ in range(300):
        text = random_text(rng)
        assert tok.decode(tok.encode(text)) == text


def test_all_ids_within_vocab_and_off_specials():
    rng = random.Random(59)
    tok = ByteTokenizer()
    for _ in range(100):
        for t in tok.encode(random_text(rng)):
            assert BYTE_OFFSET <= t < tok.spec.vocab_size


def test_decode_rejects_special_ids():
    with pytest.raises(DataError):
        ByteTokenizer().decode([DOC_SEP_ID])


def test_spec_validation():
    with pytest.raises(DataError):
        TokenizerSpec(name="bad", vocab_size=300, bos_id=0).validate()
    with pytest.raises(DataError):
        TokenizerSpec(name="bad", vocab_size=300, reserved_id=9).validate()


# ── Parallel driver ─────────────────────────────────────────────────────


def make_docs(n: int, seed: int) -> list[Document]:
    rng = random.Random(seed)
    return [Document(f"d{i}", random_text(rng)) for i in range(n)]


def test_parallel_output_matches_serial():
    docs = make_docs(400, 71)
    serial = list(tokenize_parallel(iter(docs), workers=1))
    parallel = list(tokenize_parallel(iter(docs), workers=3))
    assert serial == parallel
    assert [t.id for t in serial] == [d.id for d in docs]


def test_serial_matches_direct_encoding():
    docs = make_docs(50, 73)
    tok = ByteTokenizer()
    out = list(tokenize_parallel(iter(docs), tok, workers=1))
    assert out == [TokenizedDoc(d.id, tok.encode(d.text)) for d in docs]


class ExplodingEncoder:
    spec = TokenizerSpec(name="exploding", vocab_size=259)

    def encode(self, text: str) -> list[int]:
        if "boom" in text:
            raise RuntimeError("refused")
        return [3] * len(text)


@pytest.mark.parametrize("workers", [1, 2])
def test_encoder_failure_carries_doc_id(workers):
    docs = [Document("ok", "fine"), Document("bad", "boom"), Document("later", "x")]
    stream = tokenize_parallel(iter(docs), ExplodingEncoder(), workers=workers)
    with pytest.raises(TokenizeError, match="bad") as err:
        list(stream)
    assert err.value.doc_id == "bad"


# ── Token-record files ──────────────────────────────────────────────────


def test_token_file_roundtrip(tmp_path):
    rng = random.Random(83)
    docs = [
        TokenizedDoc(f"d{i}", [rng.randrange(0, 259) for _ in range(rng.randrange(0, 40))])
        for i in range(60)
    ]
    path = tmp_path / "tokens.bin"
    assert write_token_file(docs, path) == 60
    assert list(iter_token_file(path)) == [d.tokens for d in docs]


def test_token_file_accepts_bare_sequences(tmp_path):
    path = tmp_path / "tokens.bin"
    write_token_file([[1, 2, 3], [], [70000]], path)
    assert list(iter_token_file(path)) == [[1, 2, 3], [], [70000]]


def test_token_file_rejects_out_of_range(tmp_path):
    with pytest.raises(DataError):
        write_token_file([[1 << 32]], tmp_path / "bad.bin")
    with pytest.raises(DataError):
        write_token_file([[-1]], tmp_path / "bad.bin")


def test_truncated_token_file(tmp_path):
    path = tmp_path / "tokens.bin"
    write_token_file([[1, 2, 3, 4]], path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-2])
    with pytest.raises(DataError, match="truncated"):
        list(iter_token_file(path))
    path.write_bytes(raw[: len(raw) - 16 - 3])
    with pytest.raises(DataError, match="truncated"):
        list(iter_token_file(path))
