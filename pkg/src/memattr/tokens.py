"""Deterministic tokenizer for mixed Chinese/Latin meme text.

Runs of CJK ideographs become overlapping character bigrams (a run of length
one becomes a unigram); runs of other alphanumeric characters become
lowercased words. Everything else only delimits. No external segmenter, no
model state: the same string always yields the same token sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class TokenKind(Enum):
    CJK_BIGRAM = "cjk_bigram"
    CJK_UNIGRAM = "cjk_unigram"
    LATIN_WORD = "latin_word"
    DIGIT = "digit"


@dataclass(frozen=True)
class Token:
    surface: str
    kind: TokenKind


# Unified ideographs, extension A, and the compatibility block; kana and
# hangul deliberately fall through to the word path.
_CJK_RANGES = ((0x3400, 0x4DBF), (0x4E00, 0x9FFF), (0xF900, 0xFAFF))


def is_cjk(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[Token]:
    """Split text into CJK bigrams/unigrams and lowercased words.

    A numeric run keeps its digits and is tagged DIGIT; mixed alphanumeric
    runs are LATIN_WORD. The output order follows the input left to right.
    """
    tokens: list[Token] = []
    cjk_run: list[str] = []
    word_run: list[str] = []

    def flush_cjk() -> None:
        if len(cjk_run) == 1:
            tokens.append(Token(cjk_run[0], TokenKind.CJK_UNIGRAM))
        else:
            for i in range(len(cjk_run) - 1):
                tokens.append(Token(cjk_run[i] + cjk_run[i + 1], TokenKind.CJK_BIGRAM))
        cjk_run.clear()

    def flush_word() -> None:
        word = "".join(word_run).lower()
        kind = TokenKind.DIGIT if word.isdigit() else TokenKind.LATIN_WORD
        tokens.append(Token(word, kind))
        word_run.clear()

    for ch in text:
        if is_cjk(ch):
            if word_run:
                flush_word()
            cjk_run.append(ch)
        elif ch.isalnum():
            if cjk_run:
                flush_cjk()
            word_run.append(ch)
        else:
            if cjk_run:
                flush_cjk()
            if word_run:
                flush_word()
    if cjk_run:
        flush_cjk()
    if word_run:
        flush_word()
    return tokens


def has_cjk(text: str) -> bool:
    return any(is_cjk(ch) for ch in text)


def surfaces(text: str) -> list[str]:
    """Token surface strings only; the common input to indexing and metrics."""
    return [token.surface for token in tokenize(text)]
