import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htm_ear.embedding import HashingEmbedder, PrecomputedEmbeddings, similarity, tokenize
from htm_ear.errors import DimensionMismatch, EmptyText

emb = HashingEmbedder(64)
words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-", min_size=1, max_size=12).filter(
    lambda w: tokenize(w)
)


def test_embed_is_deterministic():
    a = emb.embed("kernel panic")
    b = emb.embed("kernel panic")
    assert a.tobytes() == b.tobytes()


def test_embed_is_unit_norm():
    assert np.linalg.norm(emb.embed("node-42 checkpoint saved")) == pytest.approx(1.0, abs=1e-6)


def test_self_similarity():
    v = emb.embed("R02-M1-N0-C:J12-U11 instruction cache parity error corrected")
    assert similarity(v, v) == pytest.approx(1.0, abs=1e-6)


def test_empty_text_raises():
    with pytest.raises(EmptyText):
        emb.embed("  ,;  ")


def test_tokenizer_keeps_log_identifiers():
    assert tokenize("RAS KERNEL at R02-M1-N0-C:J12-U11, done.") == [
        "ras", "kernel", "at", "r02-m1-n0-c:j12-u11", "done",
    ]


def test_similarity_examples():
    u = np.array([1.0, 0, 0])
    assert similarity(u, u) == 1.0
    assert similarity(u, np.array([0, 1.0, 0])) == 0.0
    assert similarity(np.array([0.6, 0.8, 0.0]), np.array([0.8, 0.6, 0.0])) == pytest.approx(0.96)


def test_similarity_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        similarity(np.ones(3), np.ones(4))


@given(st.lists(words, min_size=1, max_size=8))
def test_self_similarity_property(ws):
    v = emb.embed(" ".join(ws))
    assert similarity(v, v) == pytest.approx(1.0, abs=1e-6)


@given(st.lists(words, min_size=1, max_size=6), st.lists(words, min_size=1, max_size=6))
def test_similarity_symmetric(a, b):
    u, v = emb.embed(" ".join(a)), emb.embed(" ".join(b))
    assert similarity(u, v) == similarity(v, u)


def test_disjoint_texts_are_nearly_orthogonal():
    rng = np.random.default_rng(7)
    for i in range(100):
        a = " ".join(f"alpha{i}x{j}" for j in rng.integers(0, 10_000, size=6))
        b = " ".join(f"beta{i}y{j}" for j in rng.integers(0, 10_000, size=6))
        assert set(tokenize(a)).isdisjoint(tokenize(b))
        assert abs(similarity(emb.embed(a), emb.embed(b))) < 0.5


def test_precomputed_roundtrip(tmp_path):
    path = tmp_path / "vecs.tsv"
    path.write_text("a\t0.6,0.8\nb\t1.0,0.0005\n", encoding="utf-8")
    table = PrecomputedEmbeddings.load(path)
    assert table.dim == 2
    assert np.allclose(table.embed("ignored", "a"), [0.6, 0.8])
    assert np.linalg.norm(table.embed("", "b")) == pytest.approx(1.0)
    with pytest.raises(KeyError):
        table.embed("x", "missing")


def test_precomputed_rejects_non_unit(tmp_path):
    path = tmp_path / "vecs.tsv"
    path.write_text("a\t0.5,0.5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="norm"):
        PrecomputedEmbeddings.load(path)


def test_precomputed_falls_back():
    table = PrecomputedEmbeddings({"a": np.eye(64)[0]}, fallback=emb)
    assert similarity(table.embed("kernel panic", "zzz"), emb.embed("kernel panic")) == pytest.approx(1.0)
