"""Retrieval index: BM25 math, cosine, min-max fusion, persistence."""

import math
import random

import pytest

from memattr.errors import (
    DimensionMismatchError,
    DuplicateIdError,
    IndexFormatError,
    IndexMismatchError,
    InvalidWeightsError,
    UnknownDocError,
    ZeroVectorError,
)
from memattr.gateway import MockBackend
from memattr.index import (
    Bm25Params,
    DenseIndex,
    HybridWeights,
    IndexBundle,
    build_bm25,
    build_index,
    bm25_score,
    cosine,
    fuse_and_rank,
    idf,
    load_index,
    normalize_scores,
    save_index,
    top_k,
)
from memattr.tokens import tokenize

from conftest import tiny_kb


def brute_bm25(docs: dict[str, list[str]], query: list[str], doc_id: str,
               k1: float = 1.2, b: float = 0.75) -> float:
    """Textbook Okapi reimplementation used as an oracle."""
    n = len(docs)
    avg = sum(len(v) for v in docs.values()) / n
    toks = docs[doc_id]
    score = 0.0
    for q in query:
        df = sum(1 for v in docs.values() if q in v)
        if df == 0:
            continue
        w = max(0.0, math.log((n - df + 0.5) / (df + 0.5)))
        tf = toks.count(q)
        score += w * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * len(toks) / avg))
    return score


def test_bm25_exact_idf_case():
    # all docs the same length as the average, tf = 1: the saturation
    # factor cancels and the score is exactly the floored idf
    index = build_bm25({"A": "x y", "B": "x z", "C": "z w", "D": "w v"})
    expected = math.log((4 - 1 + 0.5) / (1 + 0.5))
    assert bm25_score(index, ["y"], "A") == expected
    assert idf(index, "y") == expected


def test_bm25_common_token_floors_to_zero():
    index = build_bm25({"A": "x y", "B": "x z", "C": "x w", "D": "w v"})
    assert idf(index, "x") == 0.0
    assert bm25_score(index, ["x"], "A") == 0.0


def test_bm25_unseen_token_scores_zero():
    index = build_bm25({"A": "x y"})
    assert bm25_score(index, ["qq"], "A") == 0.0


def test_bm25_query_multiplicity_adds():
    index = build_bm25({"A": "x y", "B": "x z", "C": "z w", "D": "w v"})
    single = bm25_score(index, ["y"], "A")
    assert bm25_score(index, ["y", "y"], "A") == 2 * single


def test_bm25_unknown_doc_raises():
    index = build_bm25({"A": "x"})
    with pytest.raises(UnknownDocError):
        bm25_score(index, ["x"], "missing")


def test_bm25_duplicate_doc_id_rejected():
    with pytest.raises(DuplicateIdError):
        build_bm25([("A", "x"), ("A", "y")])


def test_bm25_cjk_content():
    index = build_bm25({"d1": "菜狗 水平差", "d2": "躺平 竞争", "d3": "绿茶 心机"})
    score = bm25_score(index, tokenize("菜狗"), "d1")
    assert score > 0.0
    assert bm25_score(index, tokenize("菜狗"), "d2") == 0.0


def test_bm25_matches_brute_force_randomized():
    rng = random.Random(11)
    vocab = ["红", "蓝", "梗", "cat", "dog", "7"]
    for _ in range(20):
        raw = {
            f"d{i}": " ".join(rng.choices(vocab, k=rng.randint(1, 8)))
            for i in range(rng.randint(2, 8))
        }
        index = build_bm25(raw)
        token_docs = {k: [t.surface for t in tokenize(v)] for k, v in raw.items()}
        query = rng.choices([t.surface for t in tokenize(" ".join(vocab))], k=3)
        for doc_id in raw:
            got = bm25_score(index, query, doc_id)
            want = brute_bm25(token_docs, query, doc_id)
            assert got == pytest.approx(want, abs=1e-9)


def test_postings_sorted():
    index = build_bm25({"z": "x", "a": "x", "m": "x"})
    assert index.postings["x"] == [("a", 1), ("m", 1), ("z", 1)]


def test_cosine_example():
    assert cosine([1.0, 2.0], [2.0, 1.0]) == pytest.approx(0.8, abs=1e-12)


def test_cosine_errors():
    with pytest.raises(DimensionMismatchError):
        cosine([1.0], [1.0, 2.0])
    with pytest.raises(ZeroVectorError):
        cosine([0.0, 0.0], [1.0, 1.0])


def test_safe_cosine_zero_is_zero():
    from memattr.index import safe_cosine

    assert safe_cosine([0.0, 0.0], [1.0, 1.0]) == 0.0
    assert safe_cosine([1.0, 0.0], [1.0, 0.0]) == 1.0


def test_normalize_examples():
    assert normalize_scores([2.0, 4.0, 6.0]) == [0.0, 0.5, 1.0]
    assert normalize_scores([3.0, 3.0]) == [1.0, 1.0]
    assert normalize_scores([0.0, 0.0]) == [0.0, 0.0]
    assert normalize_scores([-1.0, -1.0]) == [0.0, 0.0]
    assert normalize_scores([]) == []


def test_normalize_affine_invariance():
    rng = random.Random(3)
    for _ in range(50):
        xs = [rng.uniform(-5, 5) for _ in range(rng.randint(2, 10))]
        if max(xs) - min(xs) < 1e-6:
            continue
        a, b = rng.uniform(0.1, 4.0), rng.uniform(-3, 3)
        base = normalize_scores(xs)
        shifted = normalize_scores([a * x + b for x in xs])
        for u, v in zip(base, shifted):
            assert u == pytest.approx(v, abs=1e-9)


def test_weights_validation():
    with pytest.raises(InvalidWeightsError):
        HybridWeights(w_bm25=0.6, w_dense=0.6)
    with pytest.raises(InvalidWeightsError):
        HybridWeights(w_bm25=-0.1, w_dense=1.1)
    w = HybridWeights.from_bm25_weight(0.7)
    assert (w.w_bm25, w.w_dense) == (0.7, pytest.approx(0.3, abs=1e-12))


def test_fuse_and_rank_orders_and_ties():
    ranked = fuse_and_rank(
        raw_bm25={"a": 1.0, "b": 2.0, "c": 1.0},
        raw_dense={"a": 0.5, "b": 0.5, "c": 0.5},
        weights=HybridWeights(),
        k=3,
    )
    assert [d.doc_id for d in ranked] == ["b", "a", "c"]
    assert ranked[0].s_hybrid == 1.0
    # a and c tie; ascending id breaks the tie
    assert ranked[1].s_hybrid == ranked[2].s_hybrid


def test_fuse_and_rank_truncates():
    ranked = fuse_and_rank({"a": 1.0, "b": 2.0}, {"a": 0.0, "b": 0.0}, HybridWeights(), k=1)
    assert [d.doc_id for d in ranked] == ["b"]


def test_fuse_and_rank_key_mismatch():
    with pytest.raises(IndexMismatchError):
        fuse_and_rank({"a": 1.0}, {"b": 1.0}, HybridWeights(), k=1)


def test_fuse_and_rank_bad_k():
    with pytest.raises(ValueError):
        fuse_and_rank({"a": 1.0}, {"a": 1.0}, HybridWeights(), k=0)


def test_top_k_runs_over_small_corpus():
    # dim 64 keeps these tokens in distinct hash buckets; 16 would collide
    docs = {"d1": "菜狗 水平差", "d2": "躺平 竞争"}
    bm25 = build_bm25(docs)
    backend = MockBackend()
    vecs = backend.embed_texts(list(docs.values()), dim=64)
    dense = DenseIndex(dim=64, vectors={"d1": vecs[0], "d2": vecs[1]})
    qv = backend.embed_texts(["菜狗"], dim=64)[0]
    ranked = top_k(bm25, dense, tokenize("菜狗"), qv, HybridWeights(), k=2)
    assert [d.doc_id for d in ranked][0] == "d1"
    assert len(ranked) == 2


def test_bundle_mismatch_detected():
    kb = tiny_kb()
    docs = kb.documents()
    bm25 = build_bm25(docs)
    dense = DenseIndex(dim=4, vectors={k: [1.0, 0, 0, 0] for k in list(docs)[:2]})
    with pytest.raises(IndexMismatchError):
        IndexBundle(bm25=bm25, dense=dense, kb=kb)


def test_build_save_load_roundtrip(tmp_path):
    kb = tiny_kb()
    backend = MockBackend()
    bundle = build_index(kb, backend.embed_texts, dim=8)
    p = tmp_path / "kb.idx"
    save_index(bundle, p)
    loaded = load_index(p)
    assert loaded.bm25.postings == bundle.bm25.postings
    assert loaded.bm25.doc_lengths == bundle.bm25.doc_lengths
    assert loaded.bm25.params == bundle.bm25.params
    assert loaded.dense.vectors == bundle.dense.vectors  # bit-exact floats
    assert loaded.kb.entries == kb.entries
    # a rebuild writes identical bytes
    first = p.read_bytes()
    save_index(build_index(kb, backend.embed_texts, dim=8), p)
    assert p.read_bytes() == first


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "junk.idx"
    p.write_bytes(b"NOPE\x00\x00\x00\x01{}")
    with pytest.raises(IndexFormatError):
        load_index(p)


def test_load_rejects_wrong_version(tmp_path):
    p = tmp_path / "v9.idx"
    p.write_bytes(b"MIDX\x00\x00\x00\x09{}")
    with pytest.raises(IndexFormatError):
        load_index(p)


def test_custom_params_roundtrip(tmp_path):
    kb = tiny_kb()
    backend = MockBackend()
    bundle = build_index(kb, backend.embed_texts, dim=4, params=Bm25Params(k1=1.6, b=0.6))
    p = tmp_path / "p.idx"
    save_index(bundle, p)
    assert load_index(p).bm25.params == Bm25Params(k1=1.6, b=0.6)
