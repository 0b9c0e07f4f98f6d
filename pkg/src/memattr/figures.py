"""Matplotlib figure rendering for reports and dataset statistics.

Figures land as PNG files next to the delimited report output; every
subcommand that emits a report accepts --figures DIR. This module is
imported lazily by the CLI so headless metric runs never pay for it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .dataset import DatasetStats
from .evaluate import HUMAN_REFERENCE_LIKERT, LIKERT_DIMENSIONS, RunReport

_BAR_COLOR = "#4878b0"
_REF_COLOR = "#b0b0b0"


def _save(fig: "plt.Figure", path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def save_report_figures(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Classification bars, and Likert bars when the report has them."""
    out_dir = Path(out_dir)
    saved: list[Path] = []

    c = report.classification
    pairs = [
        (name, value)
        for name, value in (
            ("Acc.", c.accuracy),
            ("P", c.precision),
            ("R", c.recall),
            ("F1", c.f1),
        )
        if value is not None
    ]
    if pairs:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        names = [p[0] for p in pairs]
        values = [p[1] for p in pairs]
        ax.bar(names, values, color=_BAR_COLOR)
        ax.set_ylim(0, 1)
        ax.set_title("Detection metrics")
        for i, value in enumerate(values):
            ax.text(i, value + 0.02, f"{value:.3f}", ha="center", fontsize=8)
        saved.append(_save(fig, out_dir / "classification.png"))

    if report.generation is not None:
        fig, ax = plt.subplots(figsize=(4, 3.2))
        names = ["BLEU-4", "ROUGE-L"]
        values = [report.generation["bleu4"] * 100, report.generation["rouge_l"] * 100]
        ax.bar(names, values, color=_BAR_COLOR)
        ax.set_ylim(0, 100)
        ax.set_title("Explanation overlap (x100)")
        for i, value in enumerate(values):
            ax.text(i, value + 2, f"{value:.2f}", ha="center", fontsize=8)
        saved.append(_save(fig, out_dir / "generation.png"))

    if report.likert is not None:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        positions = range(len(LIKERT_DIMENSIONS))
        width = 0.38
        ax.bar(
            [p - width / 2 for p in positions],
            report.likert.values(),
            width,
            color=_BAR_COLOR,
            label="run",
        )
        ax.bar(
            [p + width / 2 for p in positions],
            HUMAN_REFERENCE_LIKERT,
            width,
            color=_REF_COLOR,
            label="human reference",
        )
        ax.set_xticks(list(positions))
        ax.set_xticklabels(
            [d.replace("_", " ") for d in LIKERT_DIMENSIONS], fontsize=8
        )
        ax.set_ylim(0, 5)
        ax.set_title("Likert dimensions")
        ax.legend(fontsize=8)
        saved.append(_save(fig, out_dir / "likert.png"))

    return saved


def save_dataset_figures(stats: DatasetStats, out_dir: str | Path) -> list[Path]:
    """Label counts per split and the harm-type distribution."""
    out_dir = Path(out_dir)
    saved: list[Path] = []

    splits = sorted(stats.split_counts)
    if splits:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        labels = sorted(stats.label_counts)
        width = 0.8 / max(len(labels), 1)
        for offset, label in enumerate(labels):
            values = [stats.split_counts[s].get(label, 0) for s in splits]
            positions = [i + offset * width for i in range(len(splits))]
            ax.bar(positions, values, width, label=label)
        ax.set_xticks([i + width * (len(labels) - 1) / 2 for i in range(len(splits))])
        ax.set_xticklabels(splits)
        ax.set_title("Records per split")
        ax.legend(fontsize=8)
        saved.append(_save(fig, out_dir / "splits.png"))

    if any(stats.harm_type_counts.values()):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        names = sorted(stats.harm_type_counts)
        values = [stats.harm_type_counts[n] for n in names]
        ax.bar(names, values, color=_BAR_COLOR)
        ax.set_title("Harm types")
        saved.append(_save(fig, out_dir / "harm_types.png"))

    return saved
