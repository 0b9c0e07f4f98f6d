"""Classification and generation metrics.

Harmful is the positive class throughout. Generation metrics tokenize with
the package tokenizer (CJK bigrams, lowercased words), score in [0, 1], and
are rendered x100 in reports.

BLEU-4 convention (the common add-epsilon smoothing): modified n-gram
precisions for n = 1..4 clipped against the reference counts; a zero
numerator becomes epsilon = 1e-9; an order with no candidate n-grams at all
scores epsilon over a denominator of 1. The geometric mean of the four
precisions is multiplied by brevity penalty exp(1 - r/c) when c < r, with r
the reference length closest to c (ties to the shorter). An empty candidate
scores 0. ROUGE-L is the sentence-level LCS F-measure with beta = 1, and 0
when either side has no tokens.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .dataset import HarmLabel
from .errors import EmptyReferenceError, LengthMismatchError
from .tokens import surfaces

BLEU_EPSILON = 1e-9
BLEU_MAX_ORDER = 4


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(
    pred: Sequence[HarmLabel], gold: Sequence[HarmLabel]
) -> ConfusionCounts:
    if len(pred) != len(gold):
        raise LengthMismatchError(len(pred), len(gold))
    tp = fp = fn = tn = 0
    for p, g in zip(pred, gold):
        if p is HarmLabel.HARMFUL and g is HarmLabel.HARMFUL:
            tp += 1
        elif p is HarmLabel.HARMFUL:
            fp += 1
        elif g is HarmLabel.HARMFUL:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None

    def to_record(self) -> dict[str, float | None]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def prf1(c: ConfusionCounts) -> ClassificationReport:
    """Accuracy plus harmful-class precision/recall/F1.

    Any 0/0 ratio is reported as absent (None), never as 0.
    """
    accuracy = (c.tp + c.tn) / c.total if c.total else None
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else None
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassificationReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1
    )


def ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def bleu4(candidate: str, references: Sequence[str]) -> float:
    """BLEU-4 per the module docstring convention; in [0, 1]."""
    if not references:
        raise EmptyReferenceError()
    cand = surfaces(candidate)
    refs = [surfaces(r) for r in references]
    c = len(cand)
    if c == 0:
        return 0.0
    log_precisions: list[float] = []
    for order in range(1, BLEU_MAX_ORDER + 1):
        cand_counts = ngram_counts(cand, order)
        max_ref_counts: Counter = Counter()
        for ref in refs:
            for gram, count in ngram_counts(ref, order).items():
                if count > max_ref_counts[gram]:
                    max_ref_counts[gram] = count
        clipped = sum(
            min(count, max_ref_counts[gram]) for gram, count in cand_counts.items()
        )
        total = sum(cand_counts.values())
        numerator = clipped if clipped > 0 else BLEU_EPSILON
        denominator = total if total > 0 else 1
        log_precisions.append(math.log(numerator / denominator))
    geo_mean = math.exp(math.fsum(log_precisions) / BLEU_MAX_ORDER)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    brevity = math.exp(1.0 - r / c) if c < r else 1.0
    return brevity * geo_mean


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic O(len(a) * len(b)) longest-common-subsequence length."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """Sentence-level ROUGE-L F-measure (beta = 1); in [0, 1].

    P = LCS/len(candidate) and R = LCS/len(reference) by definition; the
    function is deliberately asymmetric in its arguments.
    """
    cand = surfaces(candidate)
    ref = surfaces(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)
