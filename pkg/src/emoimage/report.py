"""Run reports: the flat metrics file, summary tables and figure emission.

Metrics file format: one ``key=value`` pair per line, keys sorted.  Stable
keys are ``accuracy``, ``cm.<true>.<pred>`` (lower-case class names),
``epoch.<n>.loss`` / ``epoch.<n>.train_accuracy`` / ``epoch.<n>.test_accuracy``,
and ``manifest`` / ``manifest_sha256`` identifying the split.
Floats are written with ``repr`` so parsing returns the identical value.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import plotting
from .clip import Emotion, NUM_CLASSES
from .config import REFERENCE_ACCURACY

CLASS_KEYS = [e.name.lower() for e in Emotion]


@dataclass
class RunReport:
    variant: str
    seed: int
    accuracy: float
    confusion: np.ndarray
    history: list[dict[str, float]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    manifest: str = ""
    best_epoch: int = -1
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def test_counts(self) -> np.ndarray:
        return np.asarray(self.confusion).sum(axis=1)


def metrics_dict(report: RunReport) -> dict[str, Any]:
    # the manifest is identified by name and content, never by its absolute location
    manifest = Path(report.manifest) if report.manifest else None
    out: dict[str, Any] = {
        "variant": report.variant,
        "seed": int(report.seed),
        "accuracy": float(report.accuracy),
        "best_epoch": int(report.best_epoch),
        "n_test": int(np.asarray(report.confusion).sum()),
        "manifest": manifest.name if manifest else "",
    }
    if manifest is not None and manifest.is_file():
        out["manifest_sha256"] = hashlib.sha256(manifest.read_bytes()).hexdigest()
    if report.error:
        out["error"] = report.error
    cm = np.asarray(report.confusion)
    for i, true in enumerate(CLASS_KEYS):
        for j, pred in enumerate(CLASS_KEYS):
            out[f"cm.{true}.{pred}"] = int(cm[i, j])
    for row in report.history:
        n = int(row["epoch"])
        for key, value in row.items():
            if key != "epoch":
                out[f"epoch.{n}.{key}"] = float(value)
    return out


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics(report: RunReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    items = sorted(metrics_dict(report).items())
    path.write_text("".join(f"{key}={_format(value)}\n" for key, value in items))
    return path


def _parse_value(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_metrics(path) -> dict[str, Any]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = _parse_value(value)
    return out


def report_from_metrics(metrics: dict[str, Any]) -> RunReport:
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for i, true in enumerate(CLASS_KEYS):
        for j, pred in enumerate(CLASS_KEYS):
            cm[i, j] = int(metrics.get(f"cm.{true}.{pred}", 0))
    epochs: dict[int, dict[str, float]] = {}
    for key, value in metrics.items():
        if key.startswith("epoch."):
            _, n, name = key.split(".", 2)
            epochs.setdefault(int(n), {"epoch": int(n)})[name] = float(value)
    return RunReport(
        variant=str(metrics.get("variant", "")),
        seed=int(metrics.get("seed", 0)),
        accuracy=float(metrics.get("accuracy", float(np.trace(cm)) / max(cm.sum(), 1))),
        confusion=cm,
        history=[epochs[n] for n in sorted(epochs)],
        manifest=str(metrics.get("manifest", "")),
        best_epoch=int(metrics.get("best_epoch", -1)),
        error=str(metrics.get("error", "")),
    )


def summary_text(report: RunReport) -> str:
    lines = [
        f"variant\tModel-{report.variant}",
        f"seed\t{report.seed}",
        f"accuracy\t{report.accuracy:.4f}",
        f"best_epoch\t{report.best_epoch}",
    ]
    if report.variant in REFERENCE_ACCURACY:
        lines.append(f"reference_accuracy\t{REFERENCE_ACCURACY[report.variant] / 100:.4f}")
    if report.error:
        lines.append(f"error\t{report.error}")
    lines.append("")
    lines.append("true\\pred\t" + "\t".join(e.title for e in Emotion) + "\ttotal")
    cm = np.asarray(report.confusion)
    for i, e in enumerate(Emotion):
        lines.append(e.title + "\t" + "\t".join(str(int(v)) for v in cm[i]) + f"\t{int(cm[i].sum())}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, out_dir) -> dict[str, Path]:
    """Write summary table, metrics file, config snapshot and the two figures."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir}: {exc}") from exc
    paths = {
        "summary": out_dir / "summary.tsv",
        "metrics": out_dir / "metrics.txt",
        "confusion": out_dir / "confusion.png",
        "curves": out_dir / "curves.png",
    }
    paths["summary"].write_text(summary_text(report))
    write_metrics(report, paths["metrics"])
    if report.config:
        paths["config"] = out_dir / "config.json"
        paths["config"].write_text(json.dumps(report.config, indent=2, sort_keys=True) + "\n")
    plotting.save_confusion(report.confusion, paths["confusion"], title=f"Model-{report.variant} (seed {report.seed})")
    if report.history:
        plotting.save_curves(report.history, paths["curves"], title=f"Model-{report.variant}")
    else:
        del paths["curves"]
    return paths


def summarize(reports: Sequence[RunReport]) -> list[dict[str, Any]]:
    """Per-variant mean/min/max accuracy, sorted by mean accuracy, best first."""
    by_variant: dict[str, list[float]] = {}
    failures: dict[str, int] = {}
    for r in reports:
        if r.ok:
            by_variant.setdefault(r.variant, []).append(r.accuracy)
        else:
            failures[r.variant] = failures.get(r.variant, 0) + 1
    rows = []
    for variant, accs in by_variant.items():
        accs_arr = np.array(accs)
        rows.append(
            {
                "variant": variant,
                "runs": len(accs),
                "failed": failures.get(variant, 0),
                "mean": float(accs_arr.mean()),
                "min": float(accs_arr.min()),
                "max": float(accs_arr.max()),
                "reference": REFERENCE_ACCURACY.get(variant, float("nan")) / 100,
            }
        )
    for variant, count in failures.items():
        if variant not in by_variant:
            rows.append({"variant": variant, "runs": 0, "failed": count, "mean": float("nan"),
                         "min": float("nan"), "max": float("nan"),
                         "reference": REFERENCE_ACCURACY.get(variant, float("nan")) / 100})
    rows.sort(key=lambda r: (-r["mean"] if r["runs"] else float("inf"), r["variant"]))
    return rows


def summary_table(rows: Sequence[dict[str, Any]]) -> str:
    header = "variant\truns\tfailed\tmean\tmin\tmax\trange\treference"
    lines = [header]
    for r in rows:
        spread = (r["max"] - r["min"]) / 2
        lines.append(
            f"Model-{r['variant']}\t{r['runs']}\t{r['failed']}\t{r['mean']:.4f}\t{r['min']:.4f}\t"
            f"{r['max']:.4f}\t±{spread:.4f}\t{r['reference']:.4f}"
        )
    return "\n".join(lines) + "\n"


def emit_ablation(reports: Sequence[RunReport], out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = summarize(reports)
    paths = {"summary": out_dir / "ablation.tsv"}
    paths["summary"].write_text(summary_table(rows))
    plotted = [r for r in rows if r["runs"]]
    if plotted:
        reference = {k: v for k, v in REFERENCE_ACCURACY.items()}
        paths["figure"] = plotting.save_ablation(plotted, out_dir / "ablation.png", reference)
    return paths
