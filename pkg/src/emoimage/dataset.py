"""EmoDB ingestion, stratified splitting and per-batch padded mini-batches."""

from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.io.wavfile

from . import dsp
from .augment import CutMixParams, SignalAugConfig, augment_signal, cutmix_batch, cutmix_ragged
from .clip import AudioClip, Emotion, one_hot
from .features import FeatureOrder, TrimConfig, image_from_samples, trim_silence

log = logging.getLogger(__name__)

EMODB_SIZE = 535
EMODB_SAMPLE_RATE = 16000

# German initials used in EmoDB file names
EMODB_LETTERS = {
    "W": Emotion.ANGER,  # Ärger
    "L": Emotion.BOREDOM,  # Langeweile
    "E": Emotion.DISGUST,  # Ekel
    "A": Emotion.FEAR,  # Angst
    "F": Emotion.HAPPINESS,  # Freude
    "T": Emotion.SADNESS,  # Trauer
    "N": Emotion.NEUTRAL,
}

# (train, test) per class of the reference random stratified split.
REFERENCE_SPLIT = {
    Emotion.FEAR: (55, 14),
    Emotion.SADNESS: (50, 12),
    Emotion.DISGUST: (37, 9),
    Emotion.ANGER: (102, 25),
    Emotion.BOREDOM: (65, 16),
    Emotion.NEUTRAL: (64, 15),
    Emotion.HAPPINESS: (56, 15),
}

_NAME_RE = re.compile(r"^(?P<speaker>\d{2})(?P<text>[a-z]\d{2})(?P<emotion>[A-Z])(?P<version>[a-z])$")


def parse_emodb_name(filename: str) -> dict:
    """``03a01Wa.wav`` -> speaker ``03``, text ``a01``, emotion Anger, version ``a``."""
    stem = Path(filename).stem
    match = _NAME_RE.match(stem)
    if not match or match["emotion"] not in EMODB_LETTERS:
        raise ValueError(f"unparseable EmoDB file name: {filename}")
    return {
        "speaker": match["speaker"],
        "text_code": match["text"],
        "emotion": EMODB_LETTERS[match["emotion"]],
        "version": match["version"],
    }


def read_wav(path, expected_rate: int = EMODB_SAMPLE_RATE) -> np.ndarray:
    rate, data = scipy.io.wavfile.read(path)
    if rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    raise ValueError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(path, samples, rate: int = EMODB_SAMPLE_RATE) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, rate, pcm)


def load_emodb(root) -> list[AudioClip]:
    root = Path(root)
    wav_dir = root / "wav" if not any(root.glob("*.wav")) and (root / "wav").is_dir() else root
    paths = sorted(wav_dir.glob("*.wav"))
    corpus = []
    for path in paths:
        meta = parse_emodb_name(path.name)
        corpus.append(
            AudioClip(
                samples=read_wav(path),
                sample_rate=EMODB_SAMPLE_RATE,
                label=meta["emotion"],
                speaker=meta["speaker"],
                clip_id=path.stem,
                text_code=meta["text_code"],
            )
        )
    if len(corpus) != EMODB_SIZE:
        warnings.warn(f"EmoDB corpus at {wav_dir} has {len(corpus)} clips, expected {EMODB_SIZE}", stacklevel=2)
    return corpus


def class_counts(clips: Sequence[AudioClip]) -> dict[Emotion, int]:
    counts = {e: 0 for e in Emotion}
    for clip in clips:
        counts[clip.label] += 1
    return counts


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[AudioClip, ...]
    test: tuple[AudioClip, ...]
    seed: int | None = None

    def manifest(self) -> list[tuple[str, str]]:
        rows = [(c.clip_id, "train") for c in self.train] + [(c.clip_id, "test") for c in self.test]
        return sorted(rows)


def split(corpus: Sequence[AudioClip], target_counts: Mapping[Emotion, tuple[int, int]] = REFERENCE_SPLIT, seed: int = 0) -> DatasetSplit:
    """Random split with exact per-class (train, test) counts."""
    by_class: dict[Emotion, list[AudioClip]] = {e: [] for e in Emotion}
    for clip in corpus:
        by_class[clip.label].append(clip)
    deficient = []
    for emotion, (n_train, n_test) in target_counts.items():
        have = len(by_class[Emotion(emotion)])
        if n_train + n_test > have:
            deficient.append(f"{Emotion(emotion).title}: need {n_train + n_test}, have {have}")
    if deficient:
        raise ValueError("infeasible split targets: " + "; ".join(deficient))

    rng = np.random.default_rng(seed)
    train, test = [], []
    for emotion in Emotion:
        n_train, n_test = target_counts.get(emotion, (0, 0))
        pool = sorted(by_class[emotion], key=lambda c: c.clip_id)
        picked = rng.permutation(len(pool))
        train += [pool[i] for i in picked[:n_train]]
        test += [pool[i] for i in picked[n_train : n_train + n_test]]
    left_out = len(corpus) - len(train) - len(test)
    if left_out:
        log.warning("%d clips are not covered by the split targets", left_out)
    return DatasetSplit(tuple(train), tuple(test), seed)


def split_by_speaker(corpus: Sequence[AudioClip], test_speakers: Sequence[str], seed: int | None = None) -> DatasetSplit:
    """Speaker-disjoint alternative: every clip of ``test_speakers`` goes to test."""
    held_out = set(test_speakers)
    train = tuple(c for c in corpus if c.speaker not in held_out)
    test = tuple(c for c in corpus if c.speaker in held_out)
    return DatasetSplit(train, test, seed)


def write_manifest(split_: DatasetSplit, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{name}\t{part}\n" for name, part in split_.manifest()))
    return path


def read_manifest(path) -> dict[str, str]:
    rows = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            name, part = line.split("\t")
            rows[name] = part
    return rows


def split_from_manifest(corpus: Sequence[AudioClip], path) -> DatasetSplit:
    rows = read_manifest(path)
    train = tuple(c for c in corpus if rows.get(c.clip_id) == "train")
    test = tuple(c for c in corpus if rows.get(c.clip_id) == "test")
    return DatasetSplit(train, test)


# -- batching -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    """One forward pass worth of images.

    ``signals`` keeps the zero-padded raw audio the images were computed
    from.  ``weight`` is this batch's share of its optimizer step, and
    ``step_end`` marks the batch after which the step is taken.
    """

    images: np.ndarray
    labels: np.ndarray
    valid_widths: np.ndarray
    signals: list[np.ndarray]
    lengths: np.ndarray
    clip_ids: tuple[str, ...]
    weight: float = 1.0
    step_end: bool = True

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError("a batch holds at least one item")
        if self.images.shape[2] != int(self.valid_widths.max()):
            raise ValueError("batch width must equal the longest valid width")

    @property
    def size(self) -> int:
        return len(self.images)


@dataclass
class Pipeline:
    dsp: dsp.DspConfig = field(default_factory=dsp.DspConfig)
    trim: TrimConfig | None = field(default_factory=TrimConfig)
    order: FeatureOrder = field(default_factory=FeatureOrder)
    signal_aug: SignalAugConfig | None = None
    cutmix: CutMixParams | None = None
    pad: bool = True
    min_frames: int = 32
    _trimmed: dict = field(default_factory=dict, repr=False)

    @property
    def min_samples(self) -> int:
        """Shortest signal whose image reaches ``min_frames`` columns."""
        hop = self.dsp.hop
        need = (self.min_frames - 1) * hop if self.dsp.center else (self.min_frames - 1) * hop + self.dsp.frame_length
        return max(need, self.dsp.frame_length)

    def prepare(self, clip: AudioClip) -> np.ndarray:
        """Trimmed samples of a clip, cached by clip id."""
        if self.trim is None:
            return np.asarray(clip.samples, dtype=np.float64)
        key = clip.clip_id or id(clip)
        if key not in self._trimmed:
            self._trimmed[key] = np.asarray(trim_silence(clip, self.trim).samples, dtype=np.float64)
        return self._trimmed[key]

    def signal(self, clip: AudioClip, rng: np.random.Generator | None) -> np.ndarray:
        """Trimmed and, when configured, augmented samples (not yet padded)."""
        samples = self.prepare(clip)
        if self.signal_aug is not None and rng is not None:
            samples = augment_signal(clip.with_samples(samples), self.signal_aug, rng).samples
        return samples

    def image(self, samples: np.ndarray) -> np.ndarray:
        return image_from_samples(samples, self.dsp, self.order).data.astype(np.float32)

    def evaluation(self) -> "Pipeline":
        """Same features without any augmentation, sharing the trim cache."""
        return Pipeline(self.dsp, self.trim, self.order, None, None, self.pad, self.min_frames, self._trimmed)


def pad_signals(signals: Sequence[np.ndarray], min_length: int = 0) -> np.ndarray:
    longest = max(min_length, max(len(s) for s in signals))
    out = np.zeros((len(signals), longest))
    for i, s in enumerate(signals):
        out[i, : len(s)] = s
    return out


def make_batches(
    clips: Sequence[AudioClip],
    batch_size: int,
    rng: np.random.Generator | None,
    pipeline: Pipeline,
    shuffle: bool = True,
) -> Iterator[LabeledBatch]:
    """Yield training batches for one epoch.

    With padding, every raw signal in a batch is zero-padded to the batch's
    longest signal before feature extraction, so all images share a width.
    Without padding each clip becomes its own single-item batch and the
    ``batch_size`` items of a group share one optimizer step.  Either way a
    signal is zero-padded up to ``pipeline.min_samples`` so its image meets
    the network's minimum width.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if shuffle and rng is None:
        raise ValueError("shuffling needs a random generator")
    order = rng.permutation(len(clips)) if shuffle else np.arange(len(clips))
    groups = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    children = rng.spawn(len(groups)) if rng is not None else [None] * len(groups)
    for group, child in zip(groups, children):
        members = [clips[i] for i in group]
        signals = [pipeline.signal(c, child) for c in members]
        labels = np.stack([one_hot(c.label) for c in members])
        ids = tuple(c.clip_id for c in members)
        lengths = np.array([len(s) for s in signals])
        floor = pipeline.min_samples
        widths = np.array([pipeline.dsp.n_frames(max(n, floor)) for n in lengths])
        if pipeline.pad:
            padded = pad_signals(signals, floor)
            images = np.stack([pipeline.image(s) for s in padded])
            if pipeline.cutmix is not None and child is not None:
                images, labels, _ = cutmix_batch(images, labels, pipeline.cutmix, child)
            yield LabeledBatch(
                images.astype(np.float32), labels, widths, list(padded), lengths, ids
            )
        else:
            signals = [pad_signals([s], floor)[0] for s in signals]
            images = [pipeline.image(s) for s in signals]
            if pipeline.cutmix is not None and child is not None:
                images, labels, _ = cutmix_ragged(images, labels, pipeline.cutmix, child)
            for k, image in enumerate(images):
                yield LabeledBatch(
                    image[None].astype(np.float32),
                    labels[k : k + 1],
                    widths[k : k + 1],
                    [signals[k]],
                    lengths[k : k + 1],
                    ids[k : k + 1],
                    weight=1.0 / len(images),
                    step_end=k == len(images) - 1,
                )


def evaluation_batches(clips: Sequence[AudioClip], pipeline: Pipeline) -> Iterator[LabeledBatch]:
    """Test-time stream: fixed order, one unpadded, unaugmented clip per batch."""
    plain = pipeline.evaluation()
    plain.pad = False
    for batch in make_batches(clips, 1, None, plain, shuffle=False):
        yield batch
