"""Knowledge gathering for a meme: expand, retrieve, rerank, gate.

The stage turns a meme's text and description into a query set (model-based
expansion included), pulls candidates from the hybrid index, scores each
candidate's relevance with a yes/no logit probe, and keeps only candidates
whose relevance posterior clears the gate threshold.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import EmptyQuerySetError, ModelError
from .gateway import ChatRequest, ModelBackend
from .index import (
    Bm25Index,
    DenseIndex,
    HybridWeights,
    IndexBundle,
    ScoredDoc,
    bm25_score,
    fuse_and_rank,
    safe_cosine,
)
from .kb import KbEntry
from .tokens import surfaces

log = logging.getLogger(__name__)

EXPANSION_CAP = 10
DEFAULT_TAU_REL = 0.5
DEFAULT_K_FINAL = 5
DEFAULT_K_CANDIDATES = 20

EXPANSION_SYSTEM = (
    "You expand search queries about Chinese internet memes. Given the meme "
    "text and image description, list the slang terms, cultural references, "
    "and concepts someone would look up to understand it. Respond with only "
    "the keywords, separated by semicolons."
)

RERANK_PROMPT = (
    "Document: {document}\n"
    "Query: {query}\n"
    "Is the document relevant background knowledge for the query? "
    "Answer yes or no."
)


class QueryProvenance(Enum):
    TEXT = "text"
    DESCRIPTION = "description"
    EXPANSION = "expansion"


@dataclass(frozen=True)
class QueryItem:
    text: str
    provenance: QueryProvenance


@dataclass(frozen=True)
class QuerySet:
    items: tuple[QueryItem, ...]

    def strings(self) -> list[str]:
        return [item.text for item in self.items]


@dataclass(frozen=True)
class GateConfig:
    tau_rel: float = DEFAULT_TAU_REL
    k_final: int = DEFAULT_K_FINAL
    k_candidates: int = DEFAULT_K_CANDIDATES

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_rel <= 1.0:
            raise ValueError(f"tau_rel must lie in [0, 1], got {self.tau_rel}")
        if self.k_final < 1:
            raise ValueError(f"k_final must be positive, got {self.k_final}")
        if self.k_candidates < self.k_final:
            raise ValueError(
                f"k_candidates ({self.k_candidates}) must be >= k_final ({self.k_final})"
            )


@dataclass(frozen=True)
class Fragment:
    entry: KbEntry
    s_hybrid: float
    p_rel: float


@dataclass(frozen=True)
class KnowledgeContext:
    fragments: tuple[Fragment, ...]
    query_set: QuerySet
    config: GateConfig

    def is_empty(self) -> bool:
        return not self.fragments


def expand_query(text: str, description: str, model: ModelBackend) -> list[str]:
    """Ask the chat model for lookup keywords; transport errors propagate,
    shape problems degrade to an empty expansion."""
    user = f"Meme text: {text}\nImage description: {description}"
    response = model.chat(ChatRequest(system=EXPANSION_SYSTEM, user=user))
    return parse_expansion(response.text)


def parse_expansion(text: str) -> list[str]:
    """Split a keyword response on semicolons/newlines, cap at EXPANSION_CAP.

    Any shape parses best-effort; a response with no usable pieces is an
    empty expansion, never an error.
    """
    pieces: list[str] = []
    for chunk in text.replace("；", ";").replace("\n", ";").split(";"):
        item = chunk.strip()
        if item:
            pieces.append(item)
    if not pieces and text.strip():
        log.warning("expansion response had no delimited keywords; using empty set")
    return pieces[:EXPANSION_CAP]


def build_query_set(text: str, description: str, expansion: Sequence[str]) -> QuerySet:
    """Union of text, description, and expansion terms; order fixed, first
    occurrence wins, empty strings dropped."""
    items: list[QueryItem] = []
    seen: set[str] = set()
    sources = [
        (text, QueryProvenance.TEXT),
        (description, QueryProvenance.DESCRIPTION),
        *((term, QueryProvenance.EXPANSION) for term in expansion),
    ]
    for raw, provenance in sources:
        query = raw.strip()
        if not query or query in seen:
            continue
        seen.add(query)
        items.append(QueryItem(text=query, provenance=provenance))
    if not items:
        raise EmptyQuerySetError()
    return QuerySet(items=tuple(items))


def retrieve_candidates(
    qset: QuerySet,
    bm25: Bm25Index,
    dense: DenseIndex,
    embedder: ModelBackend,
    weights: HybridWeights,
    k_candidates: int,
) -> list[ScoredDoc]:
    """Score every document against every query, aggregate per document by
    max over queries within each score family, then normalize and fuse."""
    queries = qset.strings()
    query_tokens = [surfaces(q) for q in queries]
    query_vecs = embedder.embed_texts(queries, dense.dim)
    raw_bm25 = {
        doc_id: max(bm25_score(bm25, toks, doc_id) for toks in query_tokens)
        for doc_id in bm25.doc_lengths
    }
    raw_dense = {
        doc_id: max(safe_cosine(vec, doc_vec) for vec in query_vecs)
        for doc_id, doc_vec in dense.vectors.items()
    }
    return fuse_and_rank(raw_bm25, raw_dense, weights, k_candidates)


def yes_probability(l_yes: float, l_no: float) -> float:
    """exp(l_yes) / (exp(l_yes) + exp(l_no)), stable for any finite logits."""
    m = max(l_yes, l_no)
    ey = math.exp(l_yes - m)
    en = math.exp(l_no - m)
    return ey / (ey + en)


def rerank(
    candidates: list[ScoredDoc],
    meme_summary: str,
    model: ModelBackend,
    doc_texts: dict[str, str],
    parallelism: int = 1,
) -> list[ScoredDoc]:
    """Fill p_rel from a yes/no relevance probe per candidate, then re-sort.

    A model failure on one candidate zeroes that candidate's p_rel (gate
    fail-closed) and the run continues.
    """

    def probe(candidate: ScoredDoc) -> float:
        prompt = RERANK_PROMPT.format(
            document=doc_texts.get(candidate.doc_id, ""), query=meme_summary
        )
        try:
            logits = model.yes_no_logits(prompt)
        except ModelError as exc:
            log.warning(
                "rerank probe failed for %s (%s); scoring 0", candidate.doc_id, exc
            )
            return 0.0
        return yes_probability(logits.l_yes, logits.l_no)

    if parallelism > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            p_rels = list(pool.map(probe, candidates))
    else:
        p_rels = [probe(c) for c in candidates]
    for candidate, p_rel in zip(candidates, p_rels):
        candidate.p_rel = p_rel
    candidates.sort(key=lambda c: (-(c.p_rel or 0.0), c.doc_id))
    return candidates


def gate(
    candidates: Sequence[ScoredDoc],
    config: GateConfig,
    entries_by_id: dict[str, KbEntry],
    query_set: QuerySet,
) -> KnowledgeContext:
    """Keep candidates whose p_rel clears tau_rel (boundary inclusive),
    truncated to k_final; an empty context is a legitimate outcome."""
    kept = [
        c
        for c in candidates
        if c.p_rel is not None and c.p_rel >= config.tau_rel
    ]
    kept.sort(key=lambda c: (-(c.p_rel or 0.0), c.doc_id))
    fragments = tuple(
        Fragment(entry=entries_by_id[c.doc_id], s_hybrid=c.s_hybrid, p_rel=c.p_rel)
        for c in kept[: config.k_final]
    )
    return KnowledgeContext(fragments=fragments, query_set=query_set, config=config)


@dataclass
class KnowledgePipeline:
    """Immutable wiring of indexes, models, and gate settings.

    gather() is a pure function of the meme with the mock backend; concurrent
    calls over different memes are safe because all state is read-only.
    """

    bundle: IndexBundle
    chat_model: ModelBackend
    logit_model: ModelBackend
    embedder: ModelBackend
    weights: HybridWeights = field(default_factory=HybridWeights)
    gate_config: GateConfig = field(default_factory=GateConfig)
    parallelism: int = 1

    def gather(self, text: str, description: str) -> KnowledgeContext:
        """Full stage: expand, build query set, retrieve, rerank, gate."""
        expansion = expand_query(text, description, self.chat_model)
        qset = build_query_set(text, description, expansion)
        candidates = retrieve_candidates(
            qset,
            self.bundle.bm25,
            self.bundle.dense,
            self.embedder,
            self.weights,
            self.gate_config.k_candidates,
        )
        doc_texts = self.bundle.kb.documents()
        summary = " ".join(p for p in (text, description) if p)
        if candidates:
            candidates = rerank(
                candidates,
                summary,
                self.logit_model,
                doc_texts,
                parallelism=self.parallelism,
            )
        entries = {entry.id: entry for entry in self.bundle.kb}
        return gate(candidates, self.gate_config, entries, qset)
