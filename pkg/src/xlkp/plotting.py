"""Report figures, rendered off-screen to image files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402

# PNG metadata otherwise embeds the matplotlib version string
_SAVE_KW = {"metadata": {"Software": None}, "dpi": 100}


def plot_language_f1(report: EvalReport, path: str | Path) -> Path:
    """Bar chart of per-language P/R/F1 (percent) with the unweighted average."""
    langs = sorted(report.per_language)
    rows = [report.per_language[lang] for lang in langs] + [report.overall]
    labels = langs + ["Average"]
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels) + 1.5), 3.5))
    for j, (name, attr) in enumerate((("P", "precision"), ("R", "recall"), ("F1", "f1"))):
        xs = [i + (j - 1) * width for i in range(len(labels))]
        ax.bar(xs, [100 * getattr(r, attr) for r in rows], width, label=name)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 100)
    ax.set_ylabel("score (%)")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return out


def plot_rgit_trajectory(records: Sequence[dict], path: str | Path, final_recall5: float | None = None) -> Path:
    """Per-iteration dev recall@5, pseudo-pair count and label accuracy.

    `records` are iteration log records as written to ``log.jsonl``.
    """
    ts = [r["t"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    if records and "recall@5" in records[0]:
        ax1.plot(ts, [r["recall@5"] for r in records], marker="o", label="recall@5")
    acc = [(r["t"], r["label_accuracy"]) for r in records if r.get("label_accuracy") is not None]
    if acc:
        ax1.plot([a[0] for a in acc], [a[1] for a in acc], marker="s", label="pseudo label accuracy")
    if final_recall5 is not None:
        ax1.axhline(final_recall5, linestyle="--", color="gray", label="final recall@5")
    ax1.set_xlabel("iteration")
    ax1.set_ylim(0, 1)
    ax1.legend(fontsize="small")
    ax2.bar(ts, [r["pseudo_count"] for r in records], color="tab:green")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("pseudo pairs admitted")
    for ax in (ax1, ax2):
        ax.set_xticks(ts)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return out
