"""Figure rendering for evaluation reports.

Everything draws through the Agg backend and writes PNG files; nothing here
opens a window. Each function returns the path it wrote.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import AblationRow, EvalReport
from .training import TrainHistory


def save_confusion_heatmap(report: EvalReport, path, title: str = "confusion") -> Path:
    path = Path(path)
    n = len(report.class_names)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * n), max(3.5, 0.45 * n)))
    counts = report.confusion.astype(float)
    row_sums = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, row_sums, out=np.zeros_like(counts),
                     where=row_sums > 0)
    im = ax.imshow(norm, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(report.class_names, rotation=90, fontsize=7)
    ax.set_yticklabels(report.class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_history_curves(history: TrainHistory, path) -> Path:
    path = Path(path)
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = range(len(history.train_loss))
    ax1.plot(epochs, history.train_loss, color="tab:red", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:red")
    ax2 = ax1.twinx()
    ax2.plot(epochs, history.val_acc, color="tab:blue", label="val acc")
    ax2.set_ylabel("val accuracy", color="tab:blue")
    ax2.set_ylim(0.0, 1.05)
    if history.best_epoch >= 0:
        ax2.axvline(history.best_epoch, color="gray", linestyle=":",
                    linewidth=1)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sensitivity_bars(report: EvalReport, path,
                          title: str = "order corruption") -> Path:
    path = Path(path)
    modes = sorted(report.corruption)
    fig, ax = plt.subplots(figsize=(1.0 + 1.4 * max(1, len(modes)), 4))
    x = np.arange(len(modes))
    clean = [report.overall_acc] * len(modes)
    corrupted = [report.corruption[m].accuracy for m in modes]
    ax.bar(x - 0.2, clean, width=0.4, label="clean", color="tab:blue")
    ax.bar(x + 0.2, corrupted, width=0.4, label="corrupted",
           color="tab:orange")
    ax.set_xticks(x)
    ax.set_xticklabels(modes)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_ablation_bars(rows: Sequence[AblationRow], path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(1.0 + 1.6 * max(1, len(rows)), 4))
    x = np.arange(len(rows))
    sym = [r.report.sym_acc for r in rows]
    nsym = [r.report.nsym_acc for r in rows]
    ax.bar(x - 0.2, sym, width=0.4, label="symmetric pairs",
           color="tab:green")
    ax.bar(x + 0.2, nsym, width=0.4, label="non-symmetric",
           color="tab:purple")
    ax.set_xticks(x)
    ax.set_xticklabels([r.name for r in rows], rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title("component ladder")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
