"""Harmful-semantics lexicon: entries, loading, validation, statistics.

Each entry names a slang term or coded expression, the harm category it
belongs to, and a plain-language definition. Files are JSON Lines (see
jsonl.py); the canonical category set is fixed and unrecognized input
categories fold into Others with the original string kept as subcategory.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .errors import DuplicateIdError, ParseError
from .jsonl import read_records, write_records

log = logging.getLogger(__name__)

CATEGORIES = ("Sexism", "Racism", "Region", "LGBTQ", "Others")

_ENTRY_FIELDS = {"id", "term", "category", "subcategory", "definition", "aliases", "source"}


def normalize_category(raw: str) -> tuple[str, str]:
    """Map a raw category to (canonical, subcategory_suffix).

    Canonical names match case-insensitively; anything else folds into
    Others and the raw string is returned so it can be kept as subcategory.
    """
    folded = raw.strip().casefold()
    for canonical in CATEGORIES:
        if folded == canonical.casefold():
            return canonical, ""
    return "Others", raw.strip()


@dataclass(frozen=True)
class KbEntry:
    id: str
    term: str
    category: str
    definition: str
    subcategory: str = ""
    aliases: tuple[str, ...] = ()
    source: str = ""

    def document_text(self) -> str:
        """The text that represents this entry in a retrieval index."""
        parts = [self.term, *self.aliases, self.definition]
        return " ".join(p for p in parts if p)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "term": self.term,
            "category": self.category,
            "subcategory": self.subcategory,
            "definition": self.definition,
            "aliases": list(self.aliases),
            "source": self.source,
        }


def make_entry(
    *,
    id: str,
    term: str,
    category: str,
    definition: str,
    subcategory: str = "",
    aliases: tuple[str, ...] | list[str] = (),
    source: str = "",
) -> KbEntry:
    """Build an entry, folding unrecognized categories into Others."""
    canonical, fold = normalize_category(category)
    if fold and not subcategory:
        subcategory = fold
    return KbEntry(
        id=id,
        term=term,
        category=canonical,
        definition=definition,
        subcategory=subcategory,
        aliases=tuple(aliases),
        source=source,
    )


def validate_entry(entry: KbEntry) -> list[str]:
    """Return violation messages; an empty list means the entry is valid."""
    violations: list[str] = []
    if not isinstance(entry.id, str) or not entry.id.strip():
        violations.append("id: must be a non-empty string")
    if not isinstance(entry.term, str) or not entry.term.strip():
        violations.append("term: must be a non-empty string")
    if not isinstance(entry.definition, str) or not entry.definition.strip():
        violations.append("definition: must be a non-empty string")
    if entry.category not in CATEGORIES:
        violations.append(
            f"category: {entry.category!r} is not one of {', '.join(CATEGORIES)}"
        )
    if not isinstance(entry.subcategory, str):
        violations.append("subcategory: must be a string")
    if not all(isinstance(a, str) and a.strip() for a in entry.aliases):
        violations.append("aliases: every alias must be a non-empty string")
    if not isinstance(entry.source, str):
        violations.append("source: must be a string")
    return violations


def _entry_from_record(record: dict[str, Any], lineno: int) -> tuple[KbEntry, list[str]]:
    for key in sorted(record.keys() - _ENTRY_FIELDS):
        log.warning("line %d: ignoring unknown field %r", lineno, key)
    known = {k: v for k, v in record.items() if k in _ENTRY_FIELDS}
    for key in ("id", "term", "category", "definition", "subcategory", "source"):
        if key in known and not isinstance(known[key], str):
            return (
                KbEntry(id="", term="", category="Others", definition=""),
                [f"{key}: must be a string, got {type(known[key]).__name__}"],
            )
    aliases = known.get("aliases", [])
    if not isinstance(aliases, list):
        return (
            KbEntry(id="", term="", category="Others", definition=""),
            ["aliases: must be a list of strings"],
        )
    entry = make_entry(
        id=known.get("id", ""),
        term=known.get("term", ""),
        category=known.get("category", ""),
        definition=known.get("definition", ""),
        subcategory=known.get("subcategory", ""),
        aliases=tuple(str(a) if isinstance(a, str) else a for a in aliases),
        source=known.get("source", ""),
    )
    return entry, validate_entry(entry)


@dataclass
class KnowledgeBase:
    entries: list[KbEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id: dict[str, KbEntry] = {}
        for entry in self.entries:
            if entry.id in self._by_id:
                raise DuplicateIdError(entry.id)
            self._by_id[entry.id] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[KbEntry]:
        return iter(self.entries)

    def get(self, entry_id: str) -> KbEntry | None:
        return self._by_id.get(entry_id)

    def documents(self) -> dict[str, str]:
        """id -> index text for every entry."""
        return {e.id: e.document_text() for e in self.entries}

    def to_records(self) -> list[dict[str, Any]]:
        return [e.to_record() for e in self.entries]


@dataclass(frozen=True)
class KbStats:
    total: int
    category_counts: dict[str, int]
    definition_length_mean: float | None
    definition_length_std: float | None

    def to_record(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "category_counts": dict(self.category_counts),
            "definition_length_mean": self.definition_length_mean,
            "definition_length_std": self.definition_length_std,
        }


def mean_std(lengths: list[int]) -> tuple[float | None, float | None]:
    """Mean and population standard deviation; (None, None) when empty."""
    if not lengths:
        return None, None
    mean = math.fsum(lengths) / len(lengths)
    variance = math.fsum((x - mean) ** 2 for x in lengths) / len(lengths)
    return mean, math.sqrt(variance)


def kb_stats(kb: KnowledgeBase) -> KbStats:
    counts = {c: 0 for c in CATEGORIES}
    for entry in kb:
        counts[entry.category] += 1
    mean, std = mean_std([len(e.definition) for e in kb])
    return KbStats(
        total=len(kb),
        category_counts=counts,
        definition_length_mean=mean,
        definition_length_std=std,
    )


def scan_kb(path: str | Path) -> tuple[KnowledgeBase, list[str]]:
    """Parse a lexicon file, collecting every problem instead of stopping.

    Returns the valid entries (first occurrence wins on duplicate ids) and a
    list of human-readable problem lines.
    """
    entries: list[KbEntry] = []
    seen: set[str] = set()
    problems: list[str] = []
    for lineno, record in read_records(path):
        entry, violations = _entry_from_record(record, lineno)
        if violations:
            problems.extend(f"line {lineno}: {v}" for v in violations)
            continue
        if entry.id in seen:
            problems.append(f"line {lineno}: duplicate id: {entry.id!r}")
            continue
        seen.add(entry.id)
        entries.append(entry)
    return KnowledgeBase(entries), problems


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a lexicon file; raises on the first invalid or duplicate entry."""
    entries: list[KbEntry] = []
    seen: set[str] = set()
    for lineno, record in read_records(path):
        entry, violations = _entry_from_record(record, lineno)
        if violations:
            raise ParseError("; ".join(violations), line=lineno)
        if entry.id in seen:
            raise DuplicateIdError(entry.id)
        seen.add(entry.id)
        entries.append(entry)
    return KnowledgeBase(entries)


def save_kb(kb: KnowledgeBase, path: str | Path) -> int:
    return write_records(path, kb.to_records())
