"""Signal-level augmentation of raw clips and CutMix on feature images.

All randomness comes from an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.signal

from .clip import AudioClip
from .dsp import hann
from .features import FeatureImage

SIGNAL_TRANSFORMS = ("noise", "stretch", "pitch", "gain")


@dataclass(frozen=True)
class CutMixParams:
    alpha: float = 1.0
    probability: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("CutMix alpha must be positive")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("CutMix probability must lie in [0, 1]")


def _check_range(name, bounds):
    lo, hi = bounds
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"{name} range must be finite and ordered, got {bounds}")


@dataclass(frozen=True)
class SignalAugConfig:
    noise_snr_db: tuple[float, float] = (15.0, 30.0)
    time_stretch: tuple[float, float] = (0.9, 1.1)
    pitch_shift_semitones: tuple[float, float] = (-2.0, 2.0)
    gain_db: tuple[float, float] = (-6.0, 6.0)
    probability: float = 0.5
    transforms: tuple[str, ...] = SIGNAL_TRANSFORMS

    def __post_init__(self):
        for name in ("noise_snr_db", "time_stretch", "pitch_shift_semitones", "gain_db"):
            value = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, value)
            _check_range(name, value)
        if self.time_stretch[0] <= 0:
            raise ValueError("time stretch rates must be positive")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        unknown = set(self.transforms) - set(SIGNAL_TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown signal transforms: {sorted(unknown)}")
        object.__setattr__(self, "transforms", tuple(self.transforms))


# -- CutMix -------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    t0: int
    t1: int
    f0: int
    f1: int

    @property
    def area(self) -> int:
        return (self.t1 - self.t0) * (self.f1 - self.f0)


def sample_box(width: int, height: int, lam: float, rng: np.random.Generator) -> Box:
    """Rectangle with the image's aspect ratio and area ``(1 - lam) W H``.

    The box is placed uniformly among the positions where it fits entirely,
    so ``lam == 0`` always yields the full image.
    """
    scale = np.sqrt(1.0 - lam)
    w = int(round(width * scale))
    h = int(round(height * scale))
    t0 = int(rng.integers(0, width - w + 1))
    f0 = int(rng.integers(0, height - h + 1))
    return Box(t0, t0 + w, f0, f0 + h)


def paste(a: np.ndarray, b: np.ndarray, box: Box) -> np.ndarray:
    out = a.copy()
    out[:, box.t0 : box.t1, box.f0 : box.f1] = b[:, box.t0 : box.t1, box.f0 : box.f1]
    return out


def cutmix_arrays(a, b, label_a, label_b, lam, rng):
    """CutMix on raw ``[C x W x H]`` arrays.

    Returns ``(image, label, lam, box)``; ``lam`` is recomputed from the
    integer box so that it equals the kept-area fraction exactly.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"CutMix needs equal shapes, got {a.shape} and {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    _, width, height = a.shape
    box = sample_box(width, height, lam, rng)
    lam = 1.0 - box.area / (width * height)
    label = lam * np.asarray(label_a) + (1.0 - lam) * np.asarray(label_b)
    return paste(a, b, box), label, lam, box


def cutmix(
    a: FeatureImage,
    b: FeatureImage,
    lam: float | None,
    rng: np.random.Generator,
    params: CutMixParams = CutMixParams(),
) -> FeatureImage:
    if lam is None:
        lam = float(rng.beta(params.alpha, params.alpha))
    data, label, lam, _ = cutmix_arrays(a.data, b.data, a.label, b.label, lam, rng)
    return FeatureImage(data, a.layout, a.source_id, label)


def cutmix_batch(images: np.ndarray, labels: np.ndarray, params: CutMixParams, rng: np.random.Generator):
    """Mix a padded batch ``[B x C x W x H]`` against a shuffled copy of itself.

    Each item is mixed with probability ``params.probability``.  Partners
    are drawn from the unmixed batch.  Returns new arrays and the per-item
    lambdas (1.0 for untouched items).
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.float64)
    out_images = images.copy()
    out_labels = labels.copy()
    lams = np.ones(len(images))
    partner = rng.permutation(len(images))
    for i, j in enumerate(partner):
        if rng.random() >= params.probability:
            continue
        lam = float(rng.beta(params.alpha, params.alpha))
        out_images[i], out_labels[i], lams[i], _ = cutmix_arrays(images[i], images[j], labels[i], labels[j], lam, rng)
    return out_images, out_labels, lams


def cutmix_ragged(images: Sequence[np.ndarray], labels: np.ndarray, params: CutMixParams, rng: np.random.Generator):
    """CutMix for unpadded images of differing widths.

    The box is cut from the time span both images share; lambda is the kept
    fraction of the receiving image's full area.
    """
    labels = np.asarray(labels, dtype=np.float64)
    out_images = [np.array(im, copy=True) for im in images]
    out_labels = labels.copy()
    lams = np.ones(len(images))
    partner = rng.permutation(len(images))
    for i, j in enumerate(partner):
        if rng.random() >= params.probability:
            continue
        lam = float(rng.beta(params.alpha, params.alpha))
        a, b = images[i], images[j]
        common = min(a.shape[1], b.shape[1])
        _, _, _, box = cutmix_arrays(a[:, :common], b[:, :common], labels[i], labels[j], lam, rng)
        out_images[i] = paste(a, b, box)
        lams[i] = 1.0 - box.area / (a.shape[1] * a.shape[2])
        out_labels[i] = lams[i] * labels[i] + (1.0 - lams[i]) * labels[j]
    return out_images, out_labels, lams


# -- signal level -------------------------------------------------------------


def add_noise(samples: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    rms = np.sqrt(np.mean(samples**2))
    noise_rms = rms / (10.0 ** (snr_db / 20.0))
    return samples + rng.normal(0.0, noise_rms, size=samples.shape)


def apply_gain(samples: np.ndarray, gain_db: float) -> np.ndarray:
    return samples * 10.0 ** (gain_db / 20.0)


def time_stretch(samples: np.ndarray, rate: float, n_fft: int = 512, hop: int = 128) -> np.ndarray:
    """Phase-vocoder stretch; output length is ``round(len / rate)``."""
    n = samples.size
    target = int(round(n / rate))
    if rate == 1.0:
        return samples.copy()
    # pad so the final hop is covered by a full frame
    length = max(n, n_fft)
    x = np.pad(samples, (0, length - n + (n_fft - length) % hop))
    window = hann(n_fft)
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    spec = np.fft.rfft(frames * window, axis=1).T
    n_frames = spec.shape[1]
    steps = np.arange(0, max(n_frames - 1, 1), rate)
    spec = np.concatenate([spec, np.zeros((spec.shape[0], 2), dtype=spec.dtype)], axis=1)
    expected = np.pi * hop * np.arange(spec.shape[0]) / (n_fft / 2)
    phase = np.angle(spec[:, 0])
    out = np.empty((spec.shape[0], steps.size), dtype=complex)
    for k, step in enumerate(steps):
        i = int(step)
        frac = step - i
        mag = (1.0 - frac) * np.abs(spec[:, i]) + frac * np.abs(spec[:, i + 1])
        out[:, k] = mag * np.exp(1j * phase)
        delta = np.angle(spec[:, i + 1]) - np.angle(spec[:, i]) - expected
        delta -= 2.0 * np.pi * np.round(delta / (2.0 * np.pi))
        phase = phase + expected + delta
    y = _overlap_add(np.fft.irfft(out.T, n=n_fft, axis=1), window, hop)
    if y.size >= target:
        return y[:target]
    return np.pad(y, (0, target - y.size))


def _overlap_add(frames: np.ndarray, window: np.ndarray, hop: int) -> np.ndarray:
    n_fft = frames.shape[1]
    length = n_fft + hop * (len(frames) - 1)
    y = np.zeros(length)
    norm = np.zeros(length)
    for k, frame in enumerate(frames):
        y[k * hop : k * hop + n_fft] += frame * window
        norm[k * hop : k * hop + n_fft] += window**2
    # the first and last samples see almost no window mass; leave them tapered
    floor = 0.1 * norm.max()
    return y / np.maximum(norm, floor)


def pitch_shift(samples: np.ndarray, semitones: float) -> np.ndarray:
    """Shift pitch while keeping the length: stretch, then resample back."""
    if semitones == 0:
        return samples.copy()
    factor = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(samples, 1.0 / factor)
    return scipy.signal.resample(stretched, samples.size)


def augment_signal(clip: AudioClip, cfg: SignalAugConfig, rng: np.random.Generator) -> AudioClip:
    """With probability ``cfg.probability`` apply a random nonempty subset of transforms."""
    if not cfg.transforms or rng.random() >= cfg.probability:
        return clip
    chosen = [name for name in cfg.transforms if rng.random() < 0.5]
    if not chosen:
        chosen = [cfg.transforms[int(rng.integers(len(cfg.transforms)))]]
    y = np.asarray(clip.samples, dtype=np.float64)
    for name in SIGNAL_TRANSFORMS:
        if name not in chosen:
            continue
        if name == "stretch":
            y = time_stretch(y, float(rng.uniform(*cfg.time_stretch)))
        elif name == "pitch":
            y = pitch_shift(y, float(rng.uniform(*cfg.pitch_shift_semitones)))
        elif name == "noise":
            y = add_noise(y, float(rng.uniform(*cfg.noise_snr_db)), rng)
        elif name == "gain":
            y = apply_gain(y, float(rng.uniform(*cfg.gain_db)))
    return clip.with_samples(y)
