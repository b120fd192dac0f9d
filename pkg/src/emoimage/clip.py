"""Emotion labels and the audio clip record shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class Emotion(enum.IntEnum):
    # index order follows the dataset summary table (train/test counts)
    FEAR = 0
    SADNESS = 1
    DISGUST = 2
    ANGER = 3
    BOREDOM = 4
    NEUTRAL = 5
    HAPPINESS = 6

    @property
    def title(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str) -> "Emotion":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown emotion {name!r}") from None

    def distribution(self) -> np.ndarray:
        return one_hot(self)


NUM_CLASSES = len(Emotion)


def one_hot(label: Emotion) -> np.ndarray:
    out = np.zeros(NUM_CLASSES)
    out[int(label)] = 1.0
    return out


def check_distribution(dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (NUM_CLASSES,):
        raise ValueError(f"label distribution must have {NUM_CLASSES} entries")
    if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("label distribution must be nonnegative and sum to 1")
    return dist


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    label: Emotion
    speaker: str = ""
    clip_id: str = ""
    text_code: str = ""

    def __post_init__(self):
        if np.asarray(self.samples).ndim != 1:
            raise ValueError("clips are mono: samples must be 1-D")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return replace(self, samples=samples)
