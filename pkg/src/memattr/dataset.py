"""Meme dataset model: labeled records with paired interpretations.

Every record carries both a harmful and a non-harmful interpretation of the
meme; harmful records additionally name the harm type. Files are JSON Lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import DuplicateIdError, ParseError
from .jsonl import read_records, write_records
from .kb import mean_std


class HarmLabel(Enum):
    HARMFUL = "harmful"
    NON_HARMFUL = "non-harmful"


class HarmType(Enum):
    TARGETED = "targeted"
    GENERAL_OFFENSE = "offense"
    SEXUAL_INNUENDO = "sexual"
    DISPARAGING_CULTURE = "disparaging"


SPLITS = ("train", "test")


@dataclass(frozen=True)
class MemeRecord:
    id: str
    text: str
    description: str
    label: HarmLabel
    exp_harmful: str
    exp_nonharmful: str
    split: str
    harm_type: HarmType | None = None
    image_ref: str = ""

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image_ref": self.image_ref,
            "text": self.text,
            "description": self.description,
            "label": self.label.value,
            "harm_type": self.harm_type.value if self.harm_type else None,
            "exp_harmful": self.exp_harmful,
            "exp_nonharmful": self.exp_nonharmful,
            "split": self.split,
        }


def validate_record(rec: MemeRecord) -> list[str]:
    violations: list[str] = []
    if not rec.id.strip():
        violations.append("id: must be a non-empty string")
    if not rec.text.strip() and not rec.description.strip():
        violations.append("text: text and description must not both be empty")
    if rec.label is HarmLabel.HARMFUL and rec.harm_type is None:
        violations.append("harm_type: required for harmful records")
    if rec.label is HarmLabel.NON_HARMFUL and rec.harm_type is not None:
        violations.append("harm_type: must be absent for non-harmful records")
    if not rec.exp_harmful.strip():
        violations.append("exp_harmful: must be a non-empty string")
    if not rec.exp_nonharmful.strip():
        violations.append("exp_nonharmful: must be a non-empty string")
    if rec.split not in SPLITS:
        violations.append(f"split: {rec.split!r} is not one of {', '.join(SPLITS)}")
    return violations


def _record_from_dict(record: dict[str, Any], lineno: int) -> MemeRecord:
    def text_field(key: str, default: str = "") -> str:
        value = record.get(key, default)
        if value is None:
            value = default
        if not isinstance(value, str):
            raise ParseError(
                f"{key}: must be a string, got {type(value).__name__}", line=lineno
            )
        return value

    raw_label = text_field("label")
    try:
        label = HarmLabel(raw_label)
    except ValueError:
        raise ParseError(
            f"label: {raw_label!r} is not one of "
            f"{', '.join(l.value for l in HarmLabel)}",
            line=lineno,
        ) from None

    raw_type = record.get("harm_type")
    harm_type: HarmType | None = None
    if raw_type is not None and raw_type != "":
        if not isinstance(raw_type, str):
            raise ParseError("harm_type: must be a string or null", line=lineno)
        try:
            harm_type = HarmType(raw_type)
        except ValueError:
            raise ParseError(
                f"harm_type: {raw_type!r} is not one of "
                f"{', '.join(t.value for t in HarmType)}",
                line=lineno,
            ) from None

    rec = MemeRecord(
        id=text_field("id"),
        image_ref=text_field("image_ref"),
        text=text_field("text"),
        description=text_field("description"),
        label=label,
        harm_type=harm_type,
        exp_harmful=text_field("exp_harmful"),
        exp_nonharmful=text_field("exp_nonharmful"),
        split=text_field("split"),
    )
    violations = validate_record(rec)
    if violations:
        raise ParseError("; ".join(violations), line=lineno)
    return rec


def record_from_json_line(line: str, lineno: int = 1) -> MemeRecord:
    """Parse and validate a single dataset line (used by the CLI)."""
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError(f"expected an object, got {type(raw).__name__}", line=lineno)
    return _record_from_dict(raw, lineno)


def load_dataset(path: str | Path) -> list[MemeRecord]:
    """Load and validate a dataset file; duplicate ids are rejected."""
    records: list[MemeRecord] = []
    seen: set[str] = set()
    for lineno, raw in read_records(path):
        rec = _record_from_dict(raw, lineno)
        if rec.id in seen:
            raise DuplicateIdError(rec.id)
        seen.add(rec.id)
        records.append(rec)
    return records


def save_dataset(records: list[MemeRecord], path: str | Path) -> int:
    return write_records(path, (r.to_record() for r in records))


@dataclass(frozen=True)
class DatasetStats:
    total: int
    label_counts: dict[str, int]
    split_counts: dict[str, dict[str, int]]
    harm_type_counts: dict[str, int]
    harm_type_by_split: dict[str, dict[str, int]]
    explanation_length_mean: float | None
    explanation_length_std: float | None

    def to_record(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "label_counts": dict(self.label_counts),
            "split_counts": {s: dict(c) for s, c in self.split_counts.items()},
            "harm_type_counts": dict(self.harm_type_counts),
            "harm_type_by_split": {
                s: dict(c) for s, c in self.harm_type_by_split.items()
            },
            "explanation_length_mean": self.explanation_length_mean,
            "explanation_length_std": self.explanation_length_std,
        }


def dataset_stats(records: list[MemeRecord]) -> DatasetStats:
    """Order-independent counts plus explanation length mean/population std.

    Lengths are Unicode character counts over both interpretations of every
    record. Nothing is asserted here: callers that want consistency checks
    run consistency_warnings on the result.
    """
    label_counts = {l.value: 0 for l in HarmLabel}
    split_counts = {s: {l.value: 0 for l in HarmLabel} for s in SPLITS}
    type_counts = {t.value: 0 for t in HarmType}
    type_by_split = {s: {t.value: 0 for t in HarmType} for s in SPLITS}
    lengths: list[int] = []
    for rec in records:
        label_counts[rec.label.value] += 1
        split_counts.setdefault(rec.split, {l.value: 0 for l in HarmLabel})
        split_counts[rec.split][rec.label.value] += 1
        if rec.harm_type is not None:
            type_counts[rec.harm_type.value] += 1
            type_by_split.setdefault(rec.split, {t.value: 0 for t in HarmType})
            type_by_split[rec.split][rec.harm_type.value] += 1
        lengths.append(len(rec.exp_harmful))
        lengths.append(len(rec.exp_nonharmful))
    mean, std = mean_std(lengths)
    return DatasetStats(
        total=len(records),
        label_counts=label_counts,
        split_counts=split_counts,
        harm_type_counts=type_counts,
        harm_type_by_split=type_by_split,
        explanation_length_mean=mean,
        explanation_length_std=std,
    )


def consistency_warnings(stats: DatasetStats) -> list[str]:
    """Non-fatal cross-checks; published tables occasionally fail these."""
    warnings: list[str] = []
    type_sum = sum(stats.harm_type_counts.values())
    harmful = stats.label_counts.get(HarmLabel.HARMFUL.value, 0)
    if type_sum != harmful:
        warnings.append(
            f"harm_type counts sum to {type_sum} but there are {harmful} harmful records"
        )
    split_sum = sum(sum(c.values()) for c in stats.split_counts.values())
    if split_sum != stats.total:
        warnings.append(
            f"split counts sum to {split_sum} but there are {stats.total} records"
        )
    return warnings
