import warnings

import numpy as np
import pytest

from emoimage.augment import CutMixParams, SignalAugConfig
from emoimage.clip import AudioClip, Emotion
from emoimage.dataset import (
    REFERENCE_SPLIT,
    Pipeline,
    class_counts,
    evaluation_batches,
    load_emodb,
    make_batches,
    parse_emodb_name,
    read_manifest,
    read_wav,
    split,
    split_by_speaker,
    split_from_manifest,
    write_manifest,
    write_wav,
)

from checks import padding_violations
from conftest import EMODB_TOTALS, SR, synthetic_clip, synthetic_corpus, tone

# a small analysis frame keeps the many-clip batching tests fast
FAST = Pipeline(trim=None)


def names(clips):
    return [c.clip_id for c in clips]


# -- files -----------------------------------------------------------------------


def test_parse_emodb_name():
    meta = parse_emodb_name("03a01Wa.wav")
    assert meta == {"speaker": "03", "text_code": "a01", "emotion": Emotion.ANGER, "version": "a"}
    assert parse_emodb_name("16b10Tb.wav")["emotion"] == Emotion.SADNESS
    with pytest.raises(ValueError, match="03a01Xa"):
        parse_emodb_name("03a01Xa.wav")


def test_wav_round_trip_and_rate_check(tmp_path):
    x = 0.5 * tone(200.0, 0.3)
    write_wav(tmp_path / "03a01Fa.wav", x)
    back = read_wav(tmp_path / "03a01Fa.wav")
    assert np.max(np.abs(back - x)) <= 1 / 32768
    write_wav(tmp_path / "slow.wav", x, rate=8000)
    with pytest.raises(ValueError, match="8000"):
        read_wav(tmp_path / "slow.wav")


def test_load_small_directory(tmp_path):
    for clip in synthetic_corpus({Emotion.ANGER: 2, Emotion.FEAR: 1}):
        write_wav(tmp_path / f"{clip.clip_id}.wav", clip.samples)
    with pytest.warns(UserWarning, match="3 clips"):
        corpus = load_emodb(tmp_path)
    assert len(corpus) == 3
    assert class_counts(corpus)[Emotion.ANGER] == 2
    assert all(c.sample_rate == SR and c.speaker for c in corpus)


def test_load_empty_directory_warns(tmp_path):
    with pytest.warns(UserWarning, match="0 clips"):
        assert load_emodb(tmp_path) == []


# -- splitting -------------------------------------------------------------------


@pytest.fixture(scope="module")
def emodb_like():
    # durations are irrelevant for splitting
    return synthetic_corpus(EMODB_TOTALS, seconds=(0.05, 0.06))


def test_reference_split_counts_exact(emodb_like):
    data = split(emodb_like, seed=0)
    train, test = class_counts(data.train), class_counts(data.test)
    for emotion, (n_train, n_test) in REFERENCE_SPLIT.items():
        assert (train[emotion], test[emotion]) == (n_train, n_test)
    assert len(data.train) == 429 and len(data.test) == 106
    assert not set(names(data.train)) & set(names(data.test))


def test_split_deterministic_per_seed(emodb_like):
    assert names(split(emodb_like, seed=4).test) == names(split(emodb_like, seed=4).test)
    assert names(split(emodb_like, seed=4).test) != names(split(emodb_like, seed=5).test)
    # input order does not matter
    assert sorted(names(split(emodb_like[::-1], seed=4).test)) == sorted(names(split(emodb_like, seed=4).test))


def test_infeasible_targets(emodb_like):
    with pytest.raises(ValueError, match="Anger: need 200, have 127"):
        split(emodb_like, {Emotion.ANGER: (200, 0)})


def test_manifest_round_trip(tmp_path, emodb_like):
    data = split(emodb_like, seed=1)
    path = write_manifest(data, tmp_path / "m.tsv")
    rows = read_manifest(path)
    assert len(rows) == 535 and set(rows.values()) == {"train", "test"}
    again = split_from_manifest(emodb_like, path)
    assert set(names(again.test)) == set(names(data.test))


def test_speaker_split_is_disjoint(emodb_like):
    data = split_by_speaker(emodb_like, ["03", "08"])
    assert {c.speaker for c in data.test} == {"03", "08"}
    assert not {c.speaker for c in data.train} & {"03", "08"}
    assert len(data.train) + len(data.test) == 535


# -- batching --------------------------------------------------------------------


@pytest.mark.parametrize("seconds", [(1.3, 2.1, 1.1), (0.3, 0.5, 0.2)])
def test_padded_batch_shares_width_and_zero_region(seconds):
    clips = [synthetic_clip(Emotion.FEAR, i, s, i) for i, s in enumerate(seconds)]
    batch = next(make_batches(clips, 3, np.random.default_rng(0), FAST, shuffle=False))
    longest = max(int(max(seconds) * SR), FAST.min_samples)
    assert batch.images.shape == (3, 3, FAST.dsp.n_frames(longest), 230)
    assert batch.images.shape[2] >= 32
    assert padding_violations(batch) == []
    assert list(batch.lengths) == [int(s * SR) for s in seconds]
    assert all(s.size == longest for s in batch.signals)


def test_epoch_batch_sizes_and_coverage():
    clips = synthetic_corpus({e: 0 for e in Emotion} | {Emotion.ANGER: 429}, seconds=(0.02, 0.04))
    batches = list(make_batches(clips, 16, np.random.default_rng(1), FAST))
    assert [b.size for b in batches] == [16] * 26 + [13]
    seen = [cid for b in batches for cid in b.clip_ids]
    assert sorted(seen) == sorted(names(clips))
    assert all(padding_violations(b) == [] for b in batches)


def test_batches_are_seeded():
    clips = synthetic_corpus({Emotion.FEAR: 5, Emotion.ANGER: 5}, seconds=(0.05, 0.1))
    pipe = Pipeline(dsp=FAST.dsp, trim=None, signal_aug=SignalAugConfig(probability=1.0), cutmix=CutMixParams(probability=1.0))
    a = list(make_batches(clips, 4, np.random.default_rng(7), pipe))
    b = list(make_batches(clips, 4, np.random.default_rng(7), pipe))
    for x, y in zip(a, b):
        assert x.clip_ids == y.clip_ids
        assert np.array_equal(x.images, y.images) and np.array_equal(x.labels, y.labels)
        np.testing.assert_allclose(x.labels.sum(axis=1), 1.0)


def test_unpadded_batches_accumulate():
    clips = synthetic_corpus({Emotion.SADNESS: 7}, seconds=(0.05, 0.2))
    pipe = Pipeline(dsp=FAST.dsp, trim=None, pad=False)
    batches = list(make_batches(clips, 3, np.random.default_rng(2), pipe))
    assert all(b.size == 1 for b in batches)
    assert [b.step_end for b in batches] == [False, False, True, False, False, True, True]
    assert [round(b.weight, 6) for b in batches] == [0.333333] * 6 + [1.0]
    for b in batches:
        assert b.images.shape[2] == FAST.dsp.n_frames(max(b.lengths[0], pipe.min_samples)) == 32
        assert padding_violations(b) == []


def test_test_clips_never_augmented():
    clips = synthetic_corpus({Emotion.BOREDOM: 3}, seconds=(0.1, 0.2))
    loud = Pipeline(dsp=FAST.dsp, trim=None, signal_aug=SignalAugConfig(probability=1.0), cutmix=CutMixParams(probability=1.0))
    plain = Pipeline(dsp=FAST.dsp, trim=None)
    for batch, clip in zip(evaluation_batches(clips, loud), clips):
        assert batch.size == 1 and batch.clip_ids == (clip.clip_id,)
        padded = np.pad(clip.samples, (0, plain.min_samples - clip.samples.size))
        np.testing.assert_array_equal(batch.images[0], plain.image(padded))
        np.testing.assert_array_equal(batch.signals[0][: clip.samples.size], clip.samples)


def test_short_clips_reach_the_minimum_width():
    clip = AudioClip(tone(200.0, 0.01), SR, Emotion.FEAR, clip_id="x")
    pipe = Pipeline(trim=None)
    assert pipe.min_samples == 31 * 512
    batch = next(make_batches([clip], 1, None, pipe, shuffle=False))
    assert batch.images.shape[2] == 32 and batch.lengths[0] == 160
    with pytest.raises(ValueError):
        list(make_batches([clip], 0, np.random.default_rng(0), pipe))


def test_trim_cache_reused():
    clips = synthetic_corpus({Emotion.FEAR: 2}, seconds=(0.3, 0.4))
    pipe = Pipeline(dsp=FAST.dsp)
    first = pipe.prepare(clips[0])
    assert pipe.prepare(clips[0]) is first
    assert pipe.evaluation()._trimmed is pipe._trimmed


@pytest.mark.emodb
def test_real_emodb_split(emodb_root):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        corpus = load_emodb(emodb_root)
    assert len(corpus) == 535
    data = split(corpus, seed=0)
    assert len(data.train) == 429 and len(data.test) == 106
    assert {c.sample_rate for c in corpus} == {16000}
