"""Matplotlib figures for run reports.  Everything renders off-screen to files."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .clip import Emotion  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


@contextmanager
def report_style():
    with matplotlib.rc_context(STYLE):
        yield


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def confusion_figure(cm: np.ndarray, labels: Sequence[str] | None = None, title: str = "Confusion matrix"):
    labels = labels or [e.title for e in Emotion]
    cm = np.asarray(cm)
    with report_style():
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        image = ax.imshow(cm, cmap="Blues", vmin=0)
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        threshold = cm.max() / 2 if cm.size and cm.max() > 0 else 0
        for (i, j), value in np.ndenumerate(cm):
            if value:
                ax.text(j, i, str(value), ha="center", va="center",
                        color="white" if value > threshold else "black", fontsize=7)
        fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    return fig


def save_confusion(cm, path, **kwargs) -> Path:
    return _finish(confusion_figure(cm, **kwargs), path)


def save_curves(history: Sequence[Mapping[str, float]], path, title: str = "Training curves") -> Path:
    epochs = [row["epoch"] for row in history]
    with report_style():
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        ax_loss.plot(epochs, [row["loss"] for row in history], marker=".", label="train")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("cross-entropy")
        ax_acc.plot(epochs, [row["train_accuracy"] for row in history], marker=".", label="train")
        if any("test_accuracy" in row for row in history):
            ax_acc.plot(epochs, [row.get("test_accuracy", np.nan) for row in history], marker=".", label="test")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0, 1.02)
        ax_acc.legend(frameon=False)
        fig.suptitle(title)
    return _finish(fig, path)


def save_ablation(summary: Sequence[Mapping[str, float]], path, reference: Mapping[str, float] | None = None) -> Path:
    """Bar chart of mean accuracy per variant with min/max whiskers."""
    ids = [row["variant"] for row in summary]
    means = np.array([row["mean"] for row in summary]) * 100
    lows = means - np.array([row["min"] for row in summary]) * 100
    highs = np.array([row["max"] for row in summary]) * 100 - means
    x = np.arange(len(ids))
    with report_style():
        fig, ax = plt.subplots(figsize=(4.8, 3.0))
        width = 0.4 if reference else 0.6
        ax.bar(x, means, width, yerr=[lows.tolist(), highs.tolist()], capsize=3, label="this run")
        if reference:
            ax.bar(x + width, [reference.get(i, np.nan) for i in ids], width, label="reference", alpha=0.6)
            ax.legend(frameon=False)
        ax.set_xticks(x + (width / 2 if reference else 0), [f"Model-{i}" for i in ids])
        ax.set_ylabel("test accuracy (%)")
        ax.set_ylim(0, 100)
    return _finish(fig, path)
