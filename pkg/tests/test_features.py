import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emoimage import dsp
from emoimage.clip import AudioClip, Emotion
from emoimage.features import (
    FeatureImage,
    FeatureOrder,
    TrimConfig,
    compose,
    image_from_clip,
    image_from_samples,
    load_image,
    normalize_block,
    save_image,
    time_difference,
    trim_silence,
)

from conftest import SR, tone

HEIGHTS = dsp.block_heights(dsp.DspConfig())


def random_blocks(width, seed=0):
    rng = np.random.default_rng(seed)
    return {name: rng.normal(0, 5, (h, width)) for name, h in HEIGHTS.items()}


# -- trimming --------------------------------------------------------------------


def test_trim_drops_leading_and_trailing_silence():
    x = np.concatenate([np.zeros(SR // 2), tone(200.0, 1.0), np.zeros(SR // 2)])
    out = trim_silence(AudioClip(x, SR, Emotion.NEUTRAL))
    assert abs(out.samples.size - SR) <= 512


def test_trim_removes_long_pause_only():
    burst = tone(300.0, 0.4)
    long_gap = np.concatenate([burst, np.zeros(int(0.3 * SR)), burst])
    short_gap = np.concatenate([burst, np.zeros(int(0.05 * SR)), burst])
    assert abs(trim_silence(AudioClip(long_gap, SR, Emotion.ANGER)).samples.size - 2 * burst.size) <= 512
    assert trim_silence(AudioClip(short_gap, SR, Emotion.ANGER)).samples.size == short_gap.size


def test_trim_without_silence_is_identity():
    clip = AudioClip(tone(250.0, 1.0), SR, Emotion.FEAR)
    out = trim_silence(clip)
    assert np.array_equal(out.samples, clip.samples)


def test_trim_all_silent_raises():
    with pytest.raises(ValueError, match="all-silent clip"):
        trim_silence(AudioClip(np.zeros(SR), SR, Emotion.FEAR))


def test_trim_threshold_is_relative_to_peak():
    quiet = 0.001 * tone(200.0, 0.5)
    x = np.concatenate([quiet, tone(200.0, 0.5)])
    # -60 dB relative to the loud half: dropped at -30, kept at -80
    assert trim_silence(AudioClip(x, SR, Emotion.SADNESS)).samples.size < 0.6 * x.size
    assert trim_silence(AudioClip(x, SR, Emotion.SADNESS), TrimConfig(threshold_db=-80)).samples.size == x.size


# -- composition -----------------------------------------------------------------


@pytest.mark.parametrize("seconds", [1.5, 2.7, 4.0, 9.0])
def test_image_shape_for_emodb_lengths(seconds):
    x = tone(150.0, seconds) + 0.01 * np.random.default_rng(0).standard_normal(int(seconds * SR))
    image = image_from_samples(x)
    assert image.data.shape == (3, 1 + x.size // 512, 230)
    assert image.width == 1 + x.size // 512 and image.height == 230


def test_channel0_is_per_block_minmax():
    image = compose(random_blocks(20))
    base = image.data[0]
    assert base.min() >= 0 and base.max() <= 1
    for name, (lo, hi) in image.layout:
        block = base[:, lo:hi]
        assert block.min() == 0.0 and block.max() == 1.0


def test_constant_block_becomes_zero():
    blocks = random_blocks(12)
    blocks["chroma"] = np.full((12, 12), 4.2)
    image = compose(blocks)
    assert np.all(image.block("chroma") == 0)
    assert np.all(normalize_block(np.ones((3, 3))) == 0)


def test_delta_channels_definition():
    image = compose(random_blocks(15, seed=3))
    x = image.data[0]
    W = x.shape[0]
    for t in range(W - 1):
        np.testing.assert_array_equal(image.data[1, t], x[t + 1] - x[t])
    for t in range(W - 2):
        np.testing.assert_allclose(image.data[2, t], x[t + 2] - 2 * x[t + 1] + x[t], atol=1e-15)
    assert np.all(image.data[1, -1] == 0) and np.all(image.data[2, -2:] == 0)
    with pytest.raises(ValueError):
        time_difference(x, 3)


@settings(max_examples=40, deadline=None)
@given(st.permutations(dsp.BLOCK_NAMES), st.integers(1, 30))
def test_layout_round_trip(perm, width):
    blocks = random_blocks(width, seed=width)
    image = compose(blocks, FeatureOrder(tuple(perm)))
    assert image.order == FeatureOrder(tuple(perm))
    for name, block in blocks.items():
        np.testing.assert_array_equal(image.block(name), normalize_block(block))


def test_all_orders_tile_the_height():
    for perm in itertools.permutations(dsp.BLOCK_NAMES):
        image = compose(random_blocks(2), FeatureOrder(perm))
        cursor = 0
        for name, (lo, hi) in image.layout:
            assert lo == cursor and hi - lo == HEIGHTS[name]
            cursor = hi
        assert cursor == 230


def test_composition_is_idempotent():
    image = compose(random_blocks(9, seed=5))
    again = compose({name: image.block(name) for name in dsp.BLOCK_NAMES})
    np.testing.assert_array_equal(again.data, image.data)


def test_compose_rejects_bad_blocks():
    blocks = random_blocks(10)
    blocks["mel"] = blocks["mel"][:, :9]
    with pytest.raises(ValueError, match="frame count"):
        compose(blocks)
    blocks = random_blocks(10)
    blocks["mel"] = blocks["mel"][:100]
    with pytest.raises(ValueError, match="expected 230"):
        compose(blocks)
    with pytest.raises(ValueError, match="missing"):
        compose({k: v for k, v in random_blocks(4).items() if k != "tonnetz"})


def test_feature_order_validation_and_parse():
    with pytest.raises(ValueError):
        FeatureOrder(("mfcc", "mfcc", "chroma", "contrast", "tonnetz", "hp_mel"))
    with pytest.raises(ValueError):
        FeatureOrder(("mfcc", "mel"))
    order = FeatureOrder(("hp_mel", "tonnetz", "contrast", "chroma", "mel", "mfcc"))
    assert FeatureOrder.parse(str(order)) == order


def test_image_validation():
    with pytest.raises(ValueError):
        FeatureImage(np.zeros((2, 5, 230)), (("mfcc", (0, 230)),))
    with pytest.raises(ValueError):
        FeatureImage(np.zeros((3, 5, 230)), (("mfcc", (0, 100)),))


def test_serialization_round_trip(tmp_path):
    image = compose(random_blocks(17, seed=9), label=Emotion.BOREDOM, source_id="03a01La")
    image = FeatureImage(image.data.astype(np.float32).astype(np.float64), image.layout, image.source_id, image.label)
    save_image(image, tmp_path / "img")
    back = load_image(tmp_path / "img")
    np.testing.assert_array_equal(back.data, image.data)
    assert back.layout == image.layout and back.source_id == "03a01La"
    np.testing.assert_array_equal(back.label, image.label)
    header = (tmp_path / "img.txt").read_text()
    assert "shape: 3 17 230" in header


def test_image_from_clip_checks_rate():
    clip = AudioClip(tone(200.0, 0.5, sr=8000), 8000, Emotion.FEAR)
    with pytest.raises(ValueError, match="Hz"):
        image_from_clip(clip)
