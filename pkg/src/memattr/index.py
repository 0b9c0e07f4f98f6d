"""Hybrid retrieval index: Okapi BM25 plus exact dense cosine.

Both halves score every document (the corpus is a few thousand lexicon
entries, so flat scoring wins over anything approximate); scores are min-max
normalized per candidate set and fused with weights that sum to one. Vector
arithmetic uses math.fsum so scores do not depend on summation order or
platform SIMD width.

Persistence: a 4-byte magic, a big-endian uint32 format version, then one
canonical JSON document holding the BM25 postings, the dense vectors, and
the lexicon entries themselves, so a saved index answers queries without the
original lexicon file.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    IndexFormatError,
    IndexMismatchError,
    InvalidWeightsError,
    UnknownDocError,
    ZeroVectorError,
)
from .jsonl import atomic_write_bytes
from .kb import KbEntry, KnowledgeBase, make_entry
from .tokens import Token, surfaces

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

# An embedder maps (texts, dim) to one vector per text; the model gateway
# provides both the deterministic mock and the remote implementation.
EmbedFn = Callable[[Sequence[str], int], Sequence[Sequence[float]]]

INDEX_MAGIC = b"MIDX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B


@dataclass
class Bm25Index:
    doc_count: int
    avg_doc_len: float
    doc_lengths: dict[str, int]
    postings: dict[str, list[tuple[str, int]]]
    params: Bm25Params = field(default_factory=Bm25Params)

    def __post_init__(self) -> None:
        self._tf: dict[str, dict[str, int]] = {
            token: dict(pairs) for token, pairs in self.postings.items()
        }

    def doc_ids(self) -> list[str]:
        return sorted(self.doc_lengths)


def _as_surfaces(query_tokens: Sequence[Token | str]) -> list[str]:
    return [t.surface if isinstance(t, Token) else t for t in query_tokens]


def build_bm25(
    docs: Mapping[str, str] | Iterable[tuple[str, str]],
    params: Bm25Params = Bm25Params(),
) -> Bm25Index:
    """Tokenize documents and build the postings. Duplicate ids are rejected."""
    pairs = docs.items() if isinstance(docs, Mapping) else docs
    doc_lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc_id, text in pairs:
        if doc_id in doc_lengths:
            raise DuplicateIdError(doc_id)
        tokens = surfaces(text)
        doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            postings.setdefault(tok, []).append((doc_id, tf))
    for pair_list in postings.values():
        pair_list.sort()
    n = len(doc_lengths)
    avg = math.fsum(doc_lengths.values()) / n if n else 0.0
    return Bm25Index(
        doc_count=n,
        avg_doc_len=avg,
        doc_lengths=doc_lengths,
        postings=postings,
        params=params,
    )


def idf(index: Bm25Index, token: str) -> float:
    """Floored IDF: max(0, ln((N - df + 0.5) / (df + 0.5))); 0 for unseen tokens."""
    pairs = index.postings.get(token)
    if not pairs:
        return 0.0
    df = len(pairs)
    n = index.doc_count
    return max(0.0, math.log((n - df + 0.5) / (df + 0.5)))


def bm25_score(
    index: Bm25Index, query_tokens: Sequence[Token | str], doc_id: str
) -> float:
    """Okapi BM25 of one document against a token sequence (with multiplicity)."""
    if doc_id not in index.doc_lengths:
        raise UnknownDocError(doc_id)
    k1, b = index.params.k1, index.params.b
    doc_len = index.doc_lengths[doc_id]
    length_norm = 1.0 - b + b * (doc_len / index.avg_doc_len) if index.avg_doc_len else 1.0
    terms: list[float] = []
    for tok in _as_surfaces(query_tokens):
        tf = index._tf.get(tok, {}).get(doc_id, 0)
        if tf == 0:
            continue
        weight = idf(index, tok)
        if weight == 0.0:
            continue
        terms.append(weight * (tf * (k1 + 1.0)) / (tf + k1 * length_norm))
    return math.fsum(terms)


@dataclass
class DenseIndex:
    dim: int
    vectors: dict[str, list[float]]

    def __post_init__(self) -> None:
        for doc_id, vec in self.vectors.items():
            if len(vec) != self.dim:
                raise DimensionMismatchError(self.dim, len(vec))

    def doc_ids(self) -> list[str]:
        return sorted(self.vectors)


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity via exact sums; rejects zero-norm inputs."""
    if len(a) != len(b):
        raise DimensionMismatchError(len(a), len(b))
    dot = math.fsum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError()
    return dot / (norm_a * norm_b)


def safe_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine that scores zero-norm pairs 0.0; retrieval must not abort on
    punctuation-only content whose embedding is the zero vector."""
    try:
        return cosine(a, b)
    except ZeroVectorError:
        return 0.0


def normalize_scores(scores: Sequence[float]) -> list[float]:
    """Min-max normalize to [0, 1]; an all-equal set maps to 1.0 when its
    value is positive and 0.0 otherwise. Empty input gives an empty list."""
    if not scores:
        return []
    lo = min(scores)
    hi = max(scores)
    if hi == lo:
        fill = 1.0 if hi > 0 else 0.0
        return [fill] * len(scores)
    span = hi - lo
    return [(s - lo) / span for s in scores]


@dataclass(frozen=True)
class HybridWeights:
    w_bm25: float = 0.5
    w_dense: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.w_bm25 <= 1.0 and 0.0 <= self.w_dense <= 1.0):
            raise InvalidWeightsError(
                f"weights must lie in [0, 1]: {self.w_bm25}, {self.w_dense}"
            )
        if abs(self.w_bm25 + self.w_dense - 1.0) > 1e-9:
            raise InvalidWeightsError(
                f"weights must sum to 1: {self.w_bm25} + {self.w_dense}"
            )

    @classmethod
    def from_bm25_weight(cls, w_bm25: float) -> "HybridWeights":
        return cls(w_bm25=w_bm25, w_dense=1.0 - w_bm25)


def hybrid_score(s_bm25_norm: float, s_dense_norm: float, weights: HybridWeights) -> float:
    return weights.w_bm25 * s_bm25_norm + weights.w_dense * s_dense_norm


@dataclass
class ScoredDoc:
    doc_id: str
    s_bm25: float
    s_dense: float
    s_bm25_norm: float
    s_dense_norm: float
    s_hybrid: float
    p_rel: float | None = None


def fuse_and_rank(
    raw_bm25: Mapping[str, float],
    raw_dense: Mapping[str, float],
    weights: HybridWeights,
    k: int,
) -> list[ScoredDoc]:
    """Normalize each score family over the full set, fuse, and rank.

    Ties on the fused score break by ascending doc_id so ranking is total.
    """
    if raw_bm25.keys() != raw_dense.keys():
        raise IndexMismatchError(
            "lexical and dense scores cover different document ids"
        )
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    ids = sorted(raw_bm25)
    bm25_norm = normalize_scores([raw_bm25[i] for i in ids])
    dense_norm = normalize_scores([raw_dense[i] for i in ids])
    scored = [
        ScoredDoc(
            doc_id=doc_id,
            s_bm25=raw_bm25[doc_id],
            s_dense=raw_dense[doc_id],
            s_bm25_norm=bn,
            s_dense_norm=dn,
            s_hybrid=hybrid_score(bn, dn, weights),
        )
        for doc_id, bn, dn in zip(ids, bm25_norm, dense_norm)
    ]
    scored.sort(key=lambda d: (-d.s_hybrid, d.doc_id))
    return scored[:k]


def top_k(
    bm25: Bm25Index,
    dense: DenseIndex,
    query_tokens: Sequence[Token | str],
    query_vec: Sequence[float],
    weights: HybridWeights,
    k: int,
) -> list[ScoredDoc]:
    """Hybrid ranking of every indexed document for one query."""
    if set(bm25.doc_lengths) != set(dense.vectors):
        raise IndexMismatchError(
            "BM25 and dense halves index different document ids"
        )
    raw_bm25 = {doc_id: bm25_score(bm25, query_tokens, doc_id) for doc_id in bm25.doc_lengths}
    raw_dense = {
        doc_id: safe_cosine(query_vec, vec) for doc_id, vec in dense.vectors.items()
    }
    return fuse_and_rank(raw_bm25, raw_dense, weights, k)


@dataclass
class IndexBundle:
    bm25: Bm25Index
    dense: DenseIndex
    kb: KnowledgeBase

    def __post_init__(self) -> None:
        kb_ids = {e.id for e in self.kb}
        if set(self.bm25.doc_lengths) != kb_ids or set(self.dense.vectors) != kb_ids:
            raise IndexMismatchError("index halves do not cover the lexicon ids")


def save_index(bundle: IndexBundle, path: str | Path) -> None:
    body = {
        "bm25": {
            "doc_count": bundle.bm25.doc_count,
            "avg_doc_len": bundle.bm25.avg_doc_len,
            "doc_lengths": bundle.bm25.doc_lengths,
            "postings": {
                tok: [[doc_id, tf] for doc_id, tf in pairs]
                for tok, pairs in bundle.bm25.postings.items()
            },
            "k1": bundle.bm25.params.k1,
            "b": bundle.bm25.params.b,
        },
        "dense": {
            "dim": bundle.dense.dim,
            # json emits shortest-round-trip float text, so vectors reload
            # bit-exact and repeated builds byte-match.
            "vectors": {i: [float(x) for x in v] for i, v in bundle.dense.vectors.items()},
        },
        "entries": bundle.kb.to_records(),
    }
    payload = json.dumps(
        body, ensure_ascii=False, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    data = INDEX_MAGIC + struct.pack(">I", INDEX_VERSION) + payload
    atomic_write_bytes(path, data)


def load_index(path: str | Path) -> IndexBundle:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != INDEX_MAGIC:
        raise IndexFormatError(f"not an index file: {path}")
    (version,) = struct.unpack(">I", data[4:8])
    if version != INDEX_VERSION:
        raise IndexFormatError(
            f"unsupported index version {version} (supported: {INDEX_VERSION})"
        )
    try:
        body = json.loads(data[8:].decode("utf-8"))
        bm25_body = body["bm25"]
        bm25 = Bm25Index(
            doc_count=int(bm25_body["doc_count"]),
            avg_doc_len=float(bm25_body["avg_doc_len"]),
            doc_lengths={k: int(v) for k, v in bm25_body["doc_lengths"].items()},
            postings={
                tok: [(str(d), int(tf)) for d, tf in pairs]
                for tok, pairs in bm25_body["postings"].items()
            },
            params=Bm25Params(k1=float(bm25_body["k1"]), b=float(bm25_body["b"])),
        )
        dense_body = body["dense"]
        dense = DenseIndex(
            dim=int(dense_body["dim"]),
            vectors={
                k: [float(x) for x in v] for k, v in dense_body["vectors"].items()
            },
        )
        entries = [
            make_entry(
                id=r["id"],
                term=r["term"],
                category=r["category"],
                definition=r["definition"],
                subcategory=r.get("subcategory", ""),
                aliases=tuple(r.get("aliases", [])),
                source=r.get("source", ""),
            )
            for r in body["entries"]
        ]
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise IndexFormatError(f"corrupt index body: {exc}") from exc
    return IndexBundle(bm25=bm25, dense=dense, kb=KnowledgeBase(entries))


def build_index(
    kb: KnowledgeBase,
    embed: EmbedFn,
    dim: int,
    params: Bm25Params = Bm25Params(),
) -> IndexBundle:
    """Build both halves from a lexicon using the given embedding function."""
    docs = kb.documents()
    bm25 = build_bm25(docs, params=params)
    ids = sorted(docs)
    vectors = embed([docs[i] for i in ids], dim)
    dense = DenseIndex(dim=dim, vectors={i: list(v) for i, v in zip(ids, vectors)})
    return IndexBundle(bm25=bm25, dense=dense, kb=kb)
