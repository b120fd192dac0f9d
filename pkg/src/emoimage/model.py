"""VGG-16 (optionally batch-normalised) for feature images, plus train/evaluate.

Layers carry the conventional VGG names (``conv1_1`` ... ``conv5_3``,
``bn1_1`` ..., ``fc6``-``fc8``); weight archives use the same names.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from . import archive
from .clip import NUM_CLASSES

log = logging.getLogger(__name__)

# output channels of each conv block
VGG16_BLOCKS = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))
MIN_INPUT = 32
BN_STATS = ("weight", "bias", "running_mean", "running_var")


class VGG(nn.Module):
    def __init__(
        self,
        blocks: Sequence[Sequence[int]] = VGG16_BLOCKS,
        use_batch_norm: bool = True,
        num_classes: int = NUM_CLASSES,
        classifier_hidden: int = 4096,
        dropout: float = 0.5,
        pool_size: int = 7,
        in_channels: int = 3,
    ):
        super().__init__()
        if num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        self.blocks = tuple(tuple(b) for b in blocks)
        self.use_batch_norm = use_batch_norm
        self.min_input = 2 ** len(self.blocks)
        layers = OrderedDict()
        channels = in_channels
        for b, widths in enumerate(self.blocks, start=1):
            for i, width in enumerate(widths, start=1):
                layers[f"conv{b}_{i}"] = nn.Conv2d(channels, width, kernel_size=3, padding=1)
                if use_batch_norm:
                    layers[f"bn{b}_{i}"] = nn.BatchNorm2d(width)
                layers[f"relu{b}_{i}"] = nn.ReLU(inplace=True)
                channels = width
            layers[f"pool{b}"] = nn.MaxPool2d(2, 2)
        self.features = nn.Sequential(layers)
        self.avgpool = nn.AdaptiveAvgPool2d((pool_size, pool_size))
        self.classifier = nn.Sequential(
            OrderedDict(
                fc6=nn.Linear(channels * pool_size * pool_size, classifier_hidden),
                relu6=nn.ReLU(inplace=True),
                drop6=nn.Dropout(dropout),
                fc7=nn.Linear(classifier_hidden, classifier_hidden),
                relu7=nn.ReLU(inplace=True),
                drop7=nn.Dropout(dropout),
                fc8=nn.Linear(classifier_hidden, num_classes),
            )
        )
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, 0.0, 0.01)
                nn.init.zeros_(module.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if min(x.shape[-2:]) < self.min_input:
            raise ValueError(f"input {tuple(x.shape[1:])} is below the {self.min_input}x{self.min_input} minimum")
        x = self.features(x)
        x = torch.flatten(self.avgpool(x), 1)
        return self.classifier(x)

    def feature_tensor_names(self) -> list[str]:
        names = []
        for name, module in self.features.named_children():
            if isinstance(module, nn.Conv2d):
                names += [f"{name}.weight", f"{name}.bias"]
            elif isinstance(module, nn.BatchNorm2d):
                names += [f"{name}.{stat}" for stat in BN_STATS]
        return names

    def conv_names(self) -> list[str]:
        return [n for n, m in self.features.named_children() if isinstance(m, nn.Conv2d)]

    def feature_parameters(self):
        return list(self.features.parameters())

    def classifier_parameters(self):
        return list(self.classifier.parameters())


def build_vgg16(
    use_batch_norm: bool = True,
    num_classes: int = NUM_CLASSES,
    *,
    classifier_hidden: int = 4096,
    dropout: float = 0.5,
    seed: int | None = None,
) -> VGG:
    if seed is not None:
        torch.manual_seed(seed)
    return VGG(VGG16_BLOCKS, use_batch_norm, num_classes, classifier_hidden, dropout)


# -- weight archives ------------------------------------------------------------


def _features_state(model: VGG) -> dict[str, torch.Tensor]:
    return {k: v for k, v in model.features.state_dict().items() if not k.endswith("num_batches_tracked")}


def load_pretrained_features(model: VGG, archive_path) -> VGG:
    """Overwrite conv (and, when present, batch-norm) tensors from an archive.

    The classifier keeps its fresh random initialisation.
    """
    tensors = archive.read_archive(archive_path)
    state = _features_state(model)
    updates = {}
    for name, current in state.items():
        layer = name.split(".")[0]
        if name not in tensors:
            if layer.startswith("bn"):
                continue
            raise archive.ArchiveError(f"missing tensor {name}")
        incoming = tensors[name]
        if tuple(incoming.shape) != tuple(current.shape):
            raise archive.ArchiveError(
                f"shape mismatch for {name}: archive {tuple(incoming.shape)}, model {tuple(current.shape)}"
            )
        updates[name] = torch.from_numpy(incoming.astype(np.float32)).to(current.dtype)
    model.features.load_state_dict(updates, strict=False)
    log.info("loaded %d feature tensors from %s", len(updates), archive_path)
    return model


def feature_archive_tensors(model: VGG) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in _features_state(model).items()}


def write_mock_archive(path, seed: int = 0, use_batch_norm: bool = True) -> Path:
    """Randomly initialised VGG-16 feature weights in archive form, for offline runs."""
    rng = np.random.default_rng(seed)
    tensors = {}
    channels = 3
    for b, widths in enumerate(VGG16_BLOCKS, start=1):
        for i, width in enumerate(widths, start=1):
            fan_out = width * 9
            tensors[f"conv{b}_{i}.weight"] = rng.normal(0.0, math.sqrt(2.0 / fan_out), (width, channels, 3, 3))
            tensors[f"conv{b}_{i}.bias"] = np.zeros(width)
            if use_batch_norm:
                tensors[f"bn{b}_{i}.weight"] = np.ones(width)
                tensors[f"bn{b}_{i}.bias"] = np.zeros(width)
                tensors[f"bn{b}_{i}.running_mean"] = np.zeros(width)
                tensors[f"bn{b}_{i}.running_var"] = np.ones(width)
            channels = width
    return archive.write_archive(path, tensors)


def convert_torchvision_state(state: Mapping[str, "torch.Tensor | np.ndarray"]) -> dict[str, np.ndarray]:
    """Rename a torchvision ``vgg16``/``vgg16_bn`` state dict to archive names."""
    indices = sorted({int(k.split(".")[1]) for k in state if k.startswith("features.")})
    names = iter(f"{b}_{i}" for b, widths in enumerate(VGG16_BLOCKS, start=1) for i in range(1, len(widths) + 1))
    out = {}
    current = None
    for idx in indices:
        prefix = f"features.{idx}."
        if prefix + "running_mean" in state:
            for stat in BN_STATS:
                out[f"bn{current}.{stat}"] = np.asarray(state[prefix + stat], dtype=np.float32)
        elif prefix + "weight" in state and np.asarray(state[prefix + "weight"]).ndim == 4:
            current = next(names)
            out[f"conv{current}.weight"] = np.asarray(state[prefix + "weight"], dtype=np.float32)
            out[f"conv{current}.bias"] = np.asarray(state[prefix + "bias"], dtype=np.float32)
    return out


def save_checkpoint(model: VGG, path, meta: Mapping[str, object] | None = None) -> Path:
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items() if not k.endswith("num_batches_tracked")}
    tensors = {k.split(".", 1)[1]: v for k, v in tensors.items()}
    path = archive.write_archive(path, tensors)
    meta = dict(meta or {})
    meta.setdefault("use_batch_norm", model.use_batch_norm)
    archive.write_metadata(Path(str(path) + ".meta"), meta)
    return path


def load_checkpoint(model: VGG, path) -> VGG:
    tensors = archive.read_archive(path)
    for part in (model.features, model.classifier):
        state = {k: v for k, v in part.state_dict().items() if not k.endswith("num_batches_tracked")}
        updates = {}
        for name, current in state.items():
            if name not in tensors:
                raise archive.ArchiveError(f"missing tensor {name}")
            if tuple(tensors[name].shape) != tuple(current.shape):
                raise archive.ArchiveError(
                    f"shape mismatch for {name}: archive {tuple(tensors[name].shape)}, model {tuple(current.shape)}"
                )
            updates[name] = torch.from_numpy(tensors[name])
        part.load_state_dict(updates, strict=False)
    return model


# -- training -------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 16
    epochs: int = 100
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    use_batch_norm: bool = True
    dropout: float = 0.5
    classifier_hidden: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))


class TrainingDiverged(RuntimeError):
    pass


def soft_cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of ``-sum(y * log_softmax(z))``."""
    return -(targets * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float
    extra: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainResult:
    model: VGG
    history: list[EpochMetrics]


def _as_tensor(array) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array, dtype=np.float32))


def train(
    model: VGG,
    batches: "Callable[[int], Iterable] | Iterable",
    cfg: TrainConfig,
    on_epoch_end: Callable[[int, VGG], Mapping[str, float]] | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> TrainResult:
    """Fine-tune with Adam on (possibly mixed) label distributions.

    ``batches`` is either a callable returning the batches of a given epoch
    or a re-iterable collection used unchanged every epoch.  A batch is
    anything with ``images``, ``labels`` and optionally ``weight`` /
    ``step_end`` (see :class:`emoimage.dataset.LabeledBatch`).
    """
    torch.manual_seed(cfg.seed)
    if optimizer is None:
        optimizer = torch.optim.Adam(
            model.parameters(), lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay
        )
    history = []
    for epoch in range(cfg.epochs):
        model.train()
        epoch_batches = batches(epoch) if callable(batches) else batches
        total_loss, correct, seen = 0.0, 0, 0
        optimizer.zero_grad(set_to_none=True)
        pending = False
        for index, batch in enumerate(epoch_batches):
            x = _as_tensor(batch.images)
            y = torch.from_numpy(np.asarray(batch.labels, dtype=np.float32))
            logits = model(x)
            loss = soft_cross_entropy(logits, y)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {index}")
            (loss * getattr(batch, "weight", 1.0)).backward()
            pending = True
            if getattr(batch, "step_end", True):
                optimizer.step()
                optimizer.zero_grad(set_to_none=True)
                pending = False
            n = len(x)
            total_loss += loss.item() * n
            correct += int((logits.argmax(1) == y.argmax(1)).sum())
            seen += n
        if pending:
            optimizer.step()
            optimizer.zero_grad(set_to_none=True)
        metrics = EpochMetrics(epoch, total_loss / max(seen, 1), correct / max(seen, 1))
        if on_epoch_end is not None:
            metrics.extra.update(on_epoch_end(epoch, model) or {})
        log.info("epoch %d: loss %.4f, train accuracy %.4f %s", epoch, metrics.loss, metrics.accuracy, metrics.extra)
        history.append(metrics)
    return TrainResult(model, history)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: list[tuple[str, int, int]]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def confusion_matrix(true: Sequence[int], pred: Sequence[int], num_classes: int = NUM_CLASSES) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm


@torch.no_grad()
def evaluate(model: VGG, batches: Iterable, num_classes: int = NUM_CLASSES) -> EvalResult:
    """Accuracy and confusion matrix (true class on rows) in inference mode."""
    model.eval()
    true, pred, rows = [], [], []
    for batch in batches:
        logits = model(_as_tensor(batch.images))
        p = logits.argmax(1).tolist()
        t = np.asarray(batch.labels).argmax(1).tolist()
        ids = getattr(batch, "clip_ids", ("",) * len(p))
        true += t
        pred += p
        rows += list(zip(ids, t, p))
    if not true:
        raise ValueError("empty test set")
    cm = confusion_matrix(true, pred, num_classes)
    return EvalResult(float(np.trace(cm)) / float(cm.sum()), cm, rows)
