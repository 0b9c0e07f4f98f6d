"""Run-level evaluation: metric aggregation, Likert judging, reports.

Classification metrics cover every record; generation metrics (BLEU-4,
ROUGE-L) and Likert judging cover only the gold-harmful subset, scored
against the harmful interpretation as reference, because explanation quality
is evaluated exclusively on harmful memes.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from .dataset import HarmLabel, MemeRecord
from .errors import IdMismatchError, JudgeParseError
from .gateway import ChatRequest, ModelBackend
from .metrics import (
    ClassificationReport,
    ConfusionCounts,
    bleu4,
    confusion,
    prf1,
    rouge_l,
)
from .reasoning import Decision, MemeTuple, ParseStatus

log = logging.getLogger(__name__)

LIKERT_RUBRIC_VERSION = "likert-rubric-v1"

LIKERT_DIMENSIONS = (
    "informativeness",
    "soundness",
    "cultural_relevance",
    "conciseness",
    "persuasiveness",
)

# Version the rubric text together with LIKERT_RUBRIC_VERSION: judged scores
# are only comparable across runs that used the same rubric.
LIKERT_RUBRIC = """Score the explanation of a Chinese meme on a 5-point Likert scale across five dimensions: informativeness, soundness, cultural relevance, conciseness, persuasiveness.

Meme Text: {text}
Meme Image Description: {description}
Explanation: {explanation}

Reply with exactly five numbers from 1 to 5 (half points allowed), separated by commas, in the dimension order given above. Reply with the numbers only."""

# Published human-annotation aggregate over the five dimensions, kept as the
# comparison row in rendered score tables.
HUMAN_REFERENCE_LIKERT = (3.14, 4.03, 2.90, 4.79, 3.46)


@dataclass(frozen=True)
class LikertScores:
    informativeness: float
    soundness: float
    cultural_relevance: float
    conciseness: float
    persuasiveness: float
    clamped: tuple[str, ...] = ()

    def values(self) -> tuple[float, float, float, float, float]:
        return (
            self.informativeness,
            self.soundness,
            self.cultural_relevance,
            self.conciseness,
            self.persuasiveness,
        )

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = dict(zip(LIKERT_DIMENSIONS, self.values()))
        if self.clamped:
            record["clamped"] = list(self.clamped)
        return record


_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def parse_likert_line(text: str) -> tuple[float, ...] | None:
    """First line carrying at least five numbers -> its first five numbers."""
    for line in text.splitlines():
        numbers = _NUMBER.findall(line)
        if len(numbers) >= 5:
            return tuple(float(n) for n in numbers[:5])
    return None


def clamp_scores(raw: Sequence[float]) -> LikertScores:
    clamped: list[str] = []
    values: list[float] = []
    for dim, value in zip(LIKERT_DIMENSIONS, raw):
        bounded = min(5.0, max(1.0, value))
        if bounded != value:
            clamped.append(dim)
        values.append(bounded)
    return LikertScores(*values, clamped=tuple(clamped))


def likert_judge(
    explanation: str, meme: MemeTuple, judge: ModelBackend
) -> LikertScores:
    """One judged score set; an unparseable reply is retried once."""
    prompt = LIKERT_RUBRIC.format(
        text=meme.text, description=meme.description, explanation=explanation
    )
    request = ChatRequest(system="", user=prompt, temperature=0.0)
    for attempt in range(2):
        response = judge.chat(request)
        raw = parse_likert_line(response.text)
        if raw is not None:
            scores = clamp_scores(raw)
            if scores.clamped:
                log.warning(
                    "judge scores outside [1,5] clamped: %s", ", ".join(scores.clamped)
                )
            return scores
        log.warning("judge reply had no five-score line (attempt %d)", attempt + 1)
    raise JudgeParseError("judge reply had no five-score line after retry")


@dataclass(frozen=True)
class DecisionRecord:
    """One prediction joined to a dataset record by id."""

    id: str
    decision: Decision
    p_rels: tuple[float, ...] = ()


@dataclass(frozen=True)
class EvalConfig:
    judge: ModelBackend | None = None
    judge_name: str = ""
    likert: bool = False
    config_echo: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunReport:
    classification: ClassificationReport
    confusion: ConfusionCounts
    generation: dict[str, float] | None
    likert: LikertScores | None
    likert_rubric: str | None
    judge_name: str | None
    per_record: list[dict[str, Any]]
    notes: list[str]
    config_echo: dict[str, Any]

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "classification": {
                **{
                    k: _round(v)
                    for k, v in self.classification.to_record().items()
                },
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            },
            "generation": (
                {k: _round(v) for k, v in self.generation.items()}
                if self.generation is not None
                else None
            ),
            "likert": (
                {
                    **{
                        k: _round(v)
                        for k, v in zip(LIKERT_DIMENSIONS, self.likert.values())
                    },
                    "rubric": self.likert_rubric,
                    "judge": self.judge_name,
                }
                if self.likert is not None
                else None
            ),
            "per_record": self.per_record,
            "notes": list(self.notes),
            "config": self.config_echo,
        }
        return record


def _round(value: float | None, places: int = 10) -> float | None:
    # Fixed rounding keeps report bytes identical across libm variants.
    return None if value is None else round(value, places)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def evaluate_run(
    decisions: Sequence[DecisionRecord],
    records: Sequence[MemeRecord],
    config: EvalConfig = EvalConfig(),
) -> RunReport:
    """Join predictions to gold records by id and aggregate every metric.

    The report is invariant under any consistent reordering of the inputs:
    pairs are joined by id and per-record rows are sorted by id.
    """
    by_id: dict[str, DecisionRecord] = {}
    for dec in decisions:
        if dec.id in by_id:
            raise IdMismatchError(f"duplicate prediction id: {dec.id!r}")
        by_id[dec.id] = dec
    record_ids = {r.id for r in records}
    missing = sorted(record_ids - by_id.keys())
    extra = sorted(by_id.keys() - record_ids)
    if missing or extra:
        raise IdMismatchError(
            f"predictions do not join records: missing {missing[:5]}, extra {extra[:5]}"
        )

    ordered = sorted(records, key=lambda r: r.id)
    pred = [by_id[r.id].decision.label for r in ordered]
    gold = [r.label for r in ordered]
    counts = confusion(pred, gold)
    classification = prf1(counts)

    per_record: list[dict[str, Any]] = []
    bleu_values: list[float] = []
    rouge_values: list[float] = []
    likert_rows: list[LikertScores] = []
    fallback_count = 0
    for record in ordered:
        dec = by_id[record.id]
        row: dict[str, Any] = {
            "id": record.id,
            "pred": dec.decision.label.value,
            "gold": record.label.value,
            "parse_status": dec.decision.parse_status.value,
        }
        if dec.decision.parse_status is ParseStatus.FALLBACK:
            fallback_count += 1
        if record.label is HarmLabel.HARMFUL:
            b = bleu4(dec.decision.reason, [record.exp_harmful])
            r = rouge_l(dec.decision.reason, record.exp_harmful)
            bleu_values.append(b)
            rouge_values.append(r)
            row["bleu4"] = _round(b)
            row["rouge_l"] = _round(r)
            if config.likert and config.judge is not None:
                meme = MemeTuple(
                    text=record.text,
                    description=record.description,
                    image=record.image_ref or None,
                )
                scores = likert_judge(dec.decision.reason, meme, config.judge)
                likert_rows.append(scores)
                row["likert"] = scores.to_record()
        per_record.append(row)

    generation = None
    if bleu_values:
        generation = {"bleu4": _mean(bleu_values), "rouge_l": _mean(rouge_values)}

    likert_summary = None
    if likert_rows:
        columns = list(zip(*(s.values() for s in likert_rows)))
        likert_summary = LikertScores(*(_mean(col) for col in columns))

    notes = []
    if fallback_count:
        notes.append(f"{fallback_count} decision(s) used the fail-open fallback label")

    judge_name = None
    if likert_summary is not None and config.judge_name:
        judge_name = config.judge_name

    return RunReport(
        classification=classification,
        confusion=counts,
        generation=generation,
        likert=likert_summary,
        likert_rubric=LIKERT_RUBRIC_VERSION if likert_summary is not None else None,
        judge_name=judge_name,
        per_record=per_record,
        notes=notes,
        config_echo=dict(config.config_echo),
    )


def _format_cell(value: float | None, places: int) -> str:
    return "-" if value is None else f"{value:.{places}f}"


def render_tables(report: RunReport, run_label: str = "run") -> str:
    """Plain-text score tables in the published column layouts.

    The classification block uses columns Acc./P/R/F1 on a 0-1 scale; the
    explanation block uses the five Likert dimensions plus BLEU-4 and
    ROUGE-L x100, with the human annotation aggregate as a reference row.
    """
    lines: list[str] = []
    c = report.classification
    lines.append("Detection")
    header = f"{'':<12}{'Acc.':>8}{'P':>8}{'R':>8}{'F1':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    lines.append(
        f"{run_label:<12}"
        f"{_format_cell(c.accuracy, 3):>8}"
        f"{_format_cell(c.precision, 3):>8}"
        f"{_format_cell(c.recall, 3):>8}"
        f"{_format_cell(c.f1, 3):>8}"
    )
    lines.append("")
    lines.append("Explanation")
    header = (
        f"{'':<12}{'Info.':>8}{'Sound.':>8}{'Cult.':>8}{'Conc.':>8}{'Pers.':>8}"
        f"{'BLEU-4':>9}{'ROUGE-L':>9}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    likert_cells = (
        [f"{v:.2f}" for v in report.likert.values()]
        if report.likert is not None
        else ["-"] * 5
    )
    gen = report.generation
    gen_cells = (
        [f"{gen['bleu4'] * 100:.2f}", f"{gen['rouge_l'] * 100:.2f}"]
        if gen is not None
        else ["-", "-"]
    )
    lines.append(
        f"{run_label:<12}"
        + "".join(f"{cell:>8}" for cell in likert_cells)
        + "".join(f"{cell:>9}" for cell in gen_cells)
    )
    lines.append(
        f"{'human':<12}"
        + "".join(f"{v:>8.2f}" for v in HUMAN_REFERENCE_LIKERT)
        + f"{'-':>9}{'-':>9}"
    )
    if report.notes:
        lines.append("")
        lines.extend(f"note: {note}" for note in report.notes)
    return "\n".join(lines) + "\n"
