"""Silence trimming and assembly of spectral blocks into 3-channel images.

A feature image is a ``[3 x width x 230]`` array: channel 0 stacks the six
min-max normalised blocks along the feature axis, channels 1 and 2 hold its
first and second forward differences along time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dsp, rawio
from .clip import AudioClip, Emotion, NUM_CLASSES, check_distribution, one_hot

log = logging.getLogger(__name__)

IMAGE_HEIGHT = 230
DEFAULT_ORDER = ("mfcc", "mel", "chroma", "contrast", "tonnetz", "hp_mel")


@dataclass(frozen=True)
class TrimConfig:
    threshold_db: float = -30.0
    min_pause: float = 0.1
    frame_length: int = 512
    hop: int = 128


def _voiced_mask(samples: np.ndarray, cfg: TrimConfig) -> np.ndarray:
    """Per-sample flag: True where the surrounding frame is above threshold."""
    n = samples.size
    pad = cfg.frame_length // 2
    x = np.pad(samples.astype(np.float64), pad)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_length)[:: cfg.hop]
    rms = np.sqrt(np.mean(frames**2, axis=1))
    peak = rms.max()
    if peak <= 0:
        raise ValueError("all-silent clip")
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(rms / peak)
    voiced = level > cfg.threshold_db
    # frame i is centred on sample i*hop and speaks for the hop-wide cell around it
    mask = np.zeros(n, dtype=bool)
    half = cfg.hop // 2
    last = len(voiced) - 1
    for i in np.flatnonzero(voiced):
        lo = 0 if i == 0 else max(0, i * cfg.hop - half)
        hi = n if i == last else min(n, i * cfg.hop + half)
        mask[lo:hi] = True
    return mask


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def trim_silence(clip: AudioClip, cfg: TrimConfig = TrimConfig()) -> AudioClip:
    """Drop leading/trailing silence and any internal pause above ``min_pause``."""
    samples = np.asarray(clip.samples)
    if samples.size == 0:
        raise ValueError("all-silent clip")
    mask = _voiced_mask(samples, cfg)
    runs = _runs(mask)
    if not runs:
        raise ValueError("all-silent clip")
    max_gap = int(round(cfg.min_pause * clip.sample_rate))
    merged = [list(runs[0])]
    for start, stop in runs[1:]:
        if start - merged[-1][1] <= max_gap:
            merged[-1][1] = stop
        else:
            merged.append([start, stop])
    if len(merged) == 1 and merged[0] == [0, samples.size]:
        return clip
    kept = np.concatenate([samples[a:b] for a, b in merged])
    return clip.with_samples(kept)


@dataclass(frozen=True)
class FeatureOrder:
    permutation: tuple[str, ...] = DEFAULT_ORDER

    def __post_init__(self):
        perm = tuple(self.permutation)
        object.__setattr__(self, "permutation", perm)
        if sorted(perm) != sorted(dsp.BLOCK_NAMES) or len(set(perm)) != len(perm):
            raise ValueError(f"feature order must use each of {dsp.BLOCK_NAMES} exactly once, got {perm}")

    def __iter__(self):
        return iter(self.permutation)

    def __str__(self) -> str:
        return ",".join(self.permutation)

    @classmethod
    def parse(cls, text: str) -> "FeatureOrder":
        return cls(tuple(part.strip() for part in text.split(",") if part.strip()))


@dataclass(frozen=True, eq=False)
class FeatureImage:
    data: np.ndarray
    layout: tuple[tuple[str, tuple[int, int]], ...]
    source_id: str = ""
    label: np.ndarray = field(default_factory=lambda: np.full(NUM_CLASSES, 1.0 / NUM_CLASSES))

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"feature image must be [3 x W x H], got {self.data.shape}")
        height = self.data.shape[2]
        cursor = 0
        for _, (lo, hi) in self.layout:
            if lo != cursor or hi <= lo:
                raise ValueError("layout row ranges must tile the feature axis")
            cursor = hi
        if cursor != height:
            raise ValueError(f"layout covers {cursor} rows, image has {height}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature image contains non-finite values")
        object.__setattr__(self, "label", check_distribution(self.label))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def order(self) -> FeatureOrder:
        return FeatureOrder(tuple(name for name, _ in self.layout))

    def block(self, name: str, channel: int = 0) -> np.ndarray:
        """Rows of one block as ``[bins x frames]``, i.e. the composed input orientation."""
        for block_name, (lo, hi) in self.layout:
            if block_name == name:
                return self.data[channel, :, lo:hi].T
        raise KeyError(name)


def normalize_block(block: np.ndarray) -> np.ndarray:
    lo, hi = block.min(), block.max()
    if hi == lo:
        return np.zeros_like(block, dtype=np.float64)
    return (block - lo) / (hi - lo)


def time_difference(x: np.ndarray, order: int = 1) -> np.ndarray:
    """Forward difference along axis 0 (time), zero-filled at the tail."""
    out = np.zeros_like(x)
    if order == 1:
        out[:-1] = x[1:] - x[:-1]
    elif order == 2:
        out[:-2] = x[2:] - 2.0 * x[1:-1] + x[:-2]
    else:
        raise ValueError("order must be 1 or 2")
    return out


def compose(
    blocks: Mapping[str, "dsp.Spectrogram | np.ndarray"],
    order: FeatureOrder = FeatureOrder(),
    *,
    source_id: str = "",
    label=None,
    height: int = IMAGE_HEIGHT,
) -> FeatureImage:
    arrays = {name: np.asarray(getattr(b, "data", b), dtype=np.float64) for name, b in blocks.items()}
    missing = [name for name in order if name not in arrays]
    if missing:
        raise ValueError(f"missing feature blocks: {missing}")
    widths = {arrays[name].shape[1] for name in order}
    if len(widths) != 1:
        raise ValueError(f"feature blocks disagree on frame count: {sorted(widths)}")
    total = sum(arrays[name].shape[0] for name in order)
    if total != height:
        raise ValueError(f"block heights sum to {total}, expected {height}")

    rows, layout, cursor = [], [], 0
    for name in order:
        block = normalize_block(arrays[name])
        rows.append(block)
        layout.append((name, (cursor, cursor + block.shape[0])))
        cursor += block.shape[0]
    base = np.vstack(rows).T  # [W x H]
    data = np.stack([base, time_difference(base, 1), time_difference(base, 2)])
    if label is None:
        label = np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)
    elif isinstance(label, Emotion):
        label = one_hot(label)
    return FeatureImage(data, tuple(layout), source_id, np.asarray(label, dtype=np.float64))


def image_from_samples(
    samples,
    cfg: dsp.DspConfig = dsp.DspConfig(),
    order: FeatureOrder = FeatureOrder(),
    *,
    source_id: str = "",
    label=None,
) -> FeatureImage:
    blocks = dsp.extract_blocks(samples, cfg)
    return compose(blocks, order, source_id=source_id, label=label, height=sum(dsp.block_heights(cfg).values()))


def image_from_clip(
    clip: AudioClip,
    cfg: dsp.DspConfig = dsp.DspConfig(),
    order: FeatureOrder = FeatureOrder(),
) -> FeatureImage:
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(f"clip {clip.clip_id} is {clip.sample_rate} Hz, pipeline expects {cfg.sample_rate} Hz")
    return image_from_samples(clip.samples, cfg, order, source_id=clip.clip_id, label=clip.label)


def save_image(image: FeatureImage, stem) -> None:
    layout = ",".join(f"{name}:{lo}:{hi}" for name, (lo, hi) in image.layout)
    label = ",".join(repr(float(v)) for v in image.label)
    rawio.save_tensor(stem, image.data, layout=layout, label=label, source_id=image.source_id)


def load_image(stem) -> FeatureImage:
    data, header = rawio.load_tensor(stem)
    layout = []
    for item in header["layout"].split(","):
        name, lo, hi = item.split(":")
        layout.append((name, (int(lo), int(hi))))
    label = np.array([float(v) for v in header["label"].split(",")])
    return FeatureImage(data.astype(np.float64), tuple(layout), header.get("source_id", ""), label)


def log_width_stats(images: Sequence[FeatureImage]) -> dict[str, float]:
    widths = np.array([im.width for im in images])
    stats = {"min": float(widths.min()), "max": float(widths.max()), "mean": float(widths.mean())}
    log.info("feature image widths: min %(min).0f, max %(max).0f, mean %(mean).1f", stats)
    return stats
