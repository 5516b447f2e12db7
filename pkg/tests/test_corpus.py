"""Corpus I/O and statistics."""

from __future__ import annotations

import json
import random

import pytest

from edupack.corpus import (
    CorpusStats,
    Document,
    corpus_stats,
    read_documents,
    write_documents,
)
from edupack.errors import DataError, JsonlError


def test_roundtrip_preserves_fields(tmp_path):
    docs = [
        Document("a", "hello\nworld"),
        Document("b", "unicode: héllo wörld ☃", {"source": "web", "lang": "de"}),
        Document("c", ""),
        Document("d", "trailing newline\n"),
    ]
    path = tmp_path / "docs.jsonl"
    assert write_documents(docs, path) == 4
    back = list(read_documents(path))
    assert back == docs


def test_write_rejects_duplicate_ids(tmp_path):
    docs = [Document("x", "one"), Document("x", "two")]
    with pytest.raises(DataError, match="duplicate"):
        write_documents(docs, tmp_path / "dup.jsonl")


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "gaps.jsonl"
    path.write_text(
        '\n{"id": "a", "text": "x"}\n\n   \n{"id": "b", "text": "y"}\n\n',
        encoding="utf-8",
    )
    assert [d.id for d in read_documents(path)] == ["a", "b"]


def test_malformed_json_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "text": "x"}\n{broken\n', encoding="utf-8")
    with pytest.raises(JsonlError, match="2"):
        list(read_documents(path))


@pytest.mark.parametrize(
    "record, message",
    [
        ('{"text": "x"}', "id"),
        ('{"id": "", "text": "x"}', "id"),
        ('{"id": "a"}', "text"),
        ('{"id": "a", "text": 7}', "text"),
        ('{"id": "a", "text": "x", "meta": [1]}', "meta"),
        ('{"id": "a", "text": "x", "meta": {"k": 3}}', "meta"),
        ('{"id": "a", "text": "x", "extra": 1}', "unknown"),
        ("[1, 2]", "object"),
    ],
)
def test_invalid_records_rejected(tmp_path, record, message):
    path = tmp_path / "bad.jsonl"
    path.write_text(record + "\n", encoding="utf-8")
    with pytest.raises(JsonlError, match=message):
        list(read_documents(path))


def test_invalid_utf8_reports_line_number(tmp_path):
    path = tmp_path / "enc.jsonl"
    path.write_bytes(b'{"id": "a", "text": "ok"}\n{"id": "b", "text": "\xff\xfe"}\n')
    with pytest.raises(JsonlError, match="2.*UTF-8"):
        list(read_documents(path))


def test_reader_is_lazy(tmp_path):
    path = tmp_path / "lazy.jsonl"
    path.write_text(
        '{"id": "a", "text": "x"}\n{"id": "b", "text": "y"}\nnot json\n',
        encoding="utf-8",
    )
    stream = read_documents(path)
    assert next(stream).id == "a"
    assert next(stream).id == "b"
    with pytest.raises(JsonlError):
        next(stream)


def test_stats_single_doc():
    stats = corpus_stats([Document("d", "ab\ncd")])
    assert stats == CorpusStats(
        doc_count=1, total_chars=5, total_nonempty_lines=2, mean_doc_chars=5.0
    )


def test_stats_empty_corpus():
    assert corpus_stats([]) == CorpusStats(0, 0, 0, 0.0)


def test_stats_match_brute_force_recount():
    rng = random.Random(94)
    alphabet = "ab c\nd\n\n e"
    docs = [
        Document(f"d{i}", "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 120))))
        for i in range(250)
    ]
    stats = corpus_stats(docs)

    # Independent recount: character-by-character line scan.
    chars = 0
    lines = 0
    for doc in docs:
        chars += len(doc.text)
        for segment in doc.text.split("\n"):
            if segment.strip(" \t"):
                lines += 1
    assert stats.doc_count == 250
    assert stats.total_chars == chars
    assert stats.total_nonempty_lines == lines
    assert stats.mean_doc_chars == pytest.approx(chars / 250)


def test_roundtrip_through_json_layer(tmp_path):
    path = tmp_path / "layer.jsonl"
    write_documents([Document("a", 'quotes " and \\ slashes', {"k": "v"})], path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    assert raw == {"id": "a", "text": 'quotes " and \\ slashes', "meta": {"k": "v"}}
