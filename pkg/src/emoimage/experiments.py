"""Experiment harness: single runs, the A-F ablation matrix and feature-order search."""

from __future__ import annotations

import itertools
import logging
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dsp
from .clip import AudioClip, NUM_CLASSES
from .config import RunConfig
from .dataset import (
    REFERENCE_SPLIT,
    DatasetSplit,
    Pipeline,
    evaluation_batches,
    make_batches,
    split,
    split_by_speaker,
    write_manifest,
)
from .features import FeatureOrder, trim_silence
from .model import build_vgg16, evaluate, load_pretrained_features, save_checkpoint, train
from .report import RunReport, emit_ablation, emit_report, summarize

log = logging.getLogger(__name__)


def make_split(corpus: Sequence[AudioClip], cfg: RunConfig, targets=REFERENCE_SPLIT) -> DatasetSplit:
    if cfg.test_speakers:
        return split_by_speaker(corpus, cfg.test_speakers, cfg.split_seed)
    return split(corpus, targets, cfg.split_seed)


def make_pipeline(cfg: RunConfig) -> Pipeline:
    return Pipeline(
        dsp=cfg.dsp,
        trim=cfg.trim,
        order=cfg.order,
        signal_aug=cfg.signal_aug if cfg.signal_aug_enabled else None,
        cutmix=cfg.cutmix if cfg.cutmix_enabled else None,
        pad=cfg.padding,
    )


def run_experiment(
    cfg: RunConfig,
    data: DatasetSplit,
    weights=None,
    out_dir=None,
    manifest_path=None,
) -> RunReport:
    """Train one configuration and report its best test-epoch metrics."""
    tc = cfg.train
    pipeline = make_pipeline(cfg)
    model = build_vgg16(tc.use_batch_norm, NUM_CLASSES, classifier_hidden=tc.classifier_hidden, dropout=tc.dropout, seed=tc.seed)
    if weights is not None:
        load_pretrained_features(model, weights)
    test_batches = list(evaluation_batches(data.test, pipeline))
    best = {"accuracy": -1.0, "epoch": -1, "confusion": None}
    out_dir = Path(out_dir) if out_dir is not None else None

    def on_epoch_end(epoch, net):
        result = evaluate(net, test_batches)
        if result.accuracy > best["accuracy"]:
            best.update(accuracy=result.accuracy, epoch=epoch, confusion=result.confusion)
            if out_dir is not None and cfg.save_checkpoint:
                save_checkpoint(net, out_dir / "best.vggw", {"epoch": epoch, "accuracy": repr(result.accuracy), "config": cfg.digest()})
        return {"test_accuracy": result.accuracy}

    def batches(epoch):
        rng = np.random.default_rng([tc.seed, epoch])
        return make_batches(data.train, tc.batch_size, rng, pipeline)

    result = train(model, batches, tc, on_epoch_end)
    if best["confusion"] is None:
        final = evaluate(model, test_batches)
        best.update(accuracy=final.accuracy, epoch=-1, confusion=final.confusion)
    history = [{"epoch": m.epoch, "loss": m.loss, "train_accuracy": m.accuracy, **m.extra} for m in result.history]
    return RunReport(
        variant=cfg.variant,
        seed=tc.seed,
        accuracy=best["accuracy"],
        confusion=best["confusion"],
        history=history,
        config=cfg.to_dict(),
        manifest=str(manifest_path or ""),
        best_epoch=best["epoch"],
    )


def run_ablation(
    variants: Iterable[str],
    base: RunConfig,
    seeds: Sequence[int],
    corpus: Sequence[AudioClip],
    weights=None,
    out_dir=None,
    targets=REFERENCE_SPLIT,
) -> tuple[list[RunReport], list[dict]]:
    """One train+eval per (variant, seed).  Failed runs are reported, not raised."""
    variants = list(dict.fromkeys(v.upper() for v in variants))
    if not variants:
        raise ValueError("nothing to run")
    if not seeds:
        raise ValueError("nothing to run: no seeds")
    out_dir = Path(out_dir) if out_dir is not None else None
    data = make_split(corpus, base, targets)
    manifest = write_manifest(data, out_dir / "split_manifest.tsv") if out_dir is not None else None
    reports = []
    for variant in variants:
        for seed in seeds:
            run_dir = out_dir / f"model-{variant}" / f"seed-{seed}" if out_dir is not None else None
            try:
                cfg = base.with_variant(variant).with_seed(seed)
                report = run_experiment(cfg, data, weights, run_dir, manifest)
            except Exception as exc:  # keep the rest of the matrix running
                log.error("run %s/%s failed: %s", variant, seed, exc)
                log.debug("%s", traceback.format_exc())
                report = RunReport(variant, seed, float("nan"), np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64),
                                   manifest=str(manifest or ""), error=f"{type(exc).__name__}: {exc}")
            if run_dir is not None:
                emit_report(report, run_dir)
            reports.append(report)
    if out_dir is not None:
        emit_ablation(reports, out_dir)
    return reports, summarize(reports)


# -- feature order search --------------------------------------------------------


@dataclass(frozen=True)
class LogisticConfig:
    l2: float = 1e-4
    iterations: int = 500
    learning_rate: float = 0.5


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_logistic(X: np.ndarray, y: np.ndarray, num_classes: int, cfg: LogisticConfig = LogisticConfig()):
    """Multinomial logistic regression by full-batch gradient descent.

    Features are standardised with the training statistics; returns a
    predict function.
    """
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Z = (X - mean) / std
    n, d = Z.shape
    Y = np.eye(num_classes)[y]
    W = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    for _ in range(cfg.iterations):
        G = (_softmax(Z @ W + b) - Y) / n
        W -= cfg.learning_rate * (Z.T @ G + cfg.l2 * W)
        b -= cfg.learning_rate * G.sum(axis=0)

    def predict(Xq):
        return np.argmax(((Xq - mean) / std) @ W + b, axis=1)

    return predict


def cv_accuracy(X, y, folds: Sequence[np.ndarray], num_classes: int, cfg: LogisticConfig = LogisticConfig()) -> float:
    scores = []
    everything = np.arange(len(y))
    for held in folds:
        fit_idx = np.setdiff1d(everything, held)
        predict = fit_logistic(X[fit_idx], y[fit_idx], num_classes, cfg)
        scores.append(np.mean(predict(X[held]) == y[held]))
    return float(np.mean(scores))


def kfold(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]


def block_vectors(clips: Sequence[AudioClip], cfg: RunConfig) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Time-averaged feature blocks, one row per clip."""
    rows: dict[str, list[np.ndarray]] = {name: [] for name in dsp.BLOCK_NAMES}
    for clip in clips:
        samples = trim_silence(clip, cfg.trim).samples if cfg.trim is not None else clip.samples
        samples = np.pad(samples, (0, max(0, cfg.dsp.frame_length - len(samples))))
        for name, block in dsp.extract_blocks(samples, cfg.dsp).items():
            rows[name].append(block.data.mean(axis=1))
    labels = np.array([int(c.label) for c in clips])
    return {name: np.vstack(v) for name, v in rows.items()}, labels


@dataclass
class OrderSearchResult:
    ranked: list[tuple[FeatureOrder, float]]
    shortlist: list[FeatureOrder]

    @property
    def best_score(self) -> float:
        return self.ranked[0][1]


def order_search_vectors(
    blocks: dict[str, np.ndarray],
    labels: np.ndarray,
    seed: int = 0,
    folds: int = 5,
    cfg: LogisticConfig = LogisticConfig(),
    orders: Iterable[Sequence[str]] | None = None,
    num_classes: int = NUM_CLASSES,
) -> OrderSearchResult:
    if orders is None:
        orders = itertools.permutations(dsp.BLOCK_NAMES)
    fold_idx = kfold(len(labels), folds, np.random.default_rng(seed))
    scored = []
    for perm in orders:
        order = FeatureOrder(tuple(perm))
        X = np.hstack([blocks[name] for name in order])
        scored.append((order, cv_accuracy(X, labels, fold_idx, num_classes, cfg)))
    # stable sort keeps enumeration order among ties
    ranked = sorted(scored, key=lambda item: -item[1])
    top = ranked[0][1]
    return OrderSearchResult(ranked, [o for o, s in ranked if s == top])


def order_search(corpus: Sequence[AudioClip], seed: int = 0, cfg: RunConfig | None = None, **kwargs) -> OrderSearchResult:
    """Score all 720 block orders with logistic regression on time-averaged features.

    ``corpus`` should be the training split; scoring is k-fold
    cross-validation inside it.
    """
    cfg = cfg or RunConfig()
    blocks, labels = block_vectors(corpus, cfg)
    return order_search_vectors(blocks, labels, seed, **kwargs)


def write_order_ranking(result: OrderSearchResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["rank\tcv_accuracy\tshortlisted\torder"]
    shortlisted = {str(o) for o in result.shortlist}
    for rank, (order, score) in enumerate(result.ranked, start=1):
        lines.append(f"{rank}\t{score!r}\t{int(str(order) in shortlisted)}\t{order}")
    path.write_text("\n".join(lines) + "\n")
    return path
