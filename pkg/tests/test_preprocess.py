"""Tests for resize, background subtraction, normalization and augmentation."""

import numpy as np
import pytest

from src.errors import ConfigError, ShapeError
from src.preprocess import (
    JITTER_GAIN,
    JITTER_OFFSET,
    AugmentDraw,
    Stats,
    StatsAccumulator,
    augment,
    compute_stats,
    normalize,
    preprocess,
    resize,
    subtract_background,
)


@pytest.fixture
def frame():
    return np.random.default_rng(0).uniform(0, 1, (16, 16, 3)).astype(np.float32)


class TestStats:
    def test_mean_and_std(self):
        signals = [np.full((4, 4, 3), v, dtype=np.float32) for v in (0.0, 2.0)]
        stats = compute_stats(signals)
        assert stats.mean == pytest.approx((1.0, 1.0, 1.0))
        assert stats.std == pytest.approx((1.0, 1.0, 1.0))

    def test_zero_spread_channel_kept_finite(self):
        signal = np.zeros((4, 4, 3))
        signal[..., 0] = np.arange(16).reshape(4, 4)
        stats = compute_stats([signal])
        assert stats.std[1] == 1.0
        assert stats.std[0] > 0

    def test_merge_equals_single_pass(self, frame):
        a, b = StatsAccumulator(), StatsAccumulator()
        a.add(frame[:8])
        b.add(frame[8:])
        a.merge(b)
        whole = compute_stats([frame])
        assert a.result().mean == pytest.approx(whole.mean)
        assert a.result().std == pytest.approx(whole.std)

    def test_empty(self):
        with pytest.raises(ConfigError):
            StatsAccumulator().result()

    def test_nonpositive_std(self):
        with pytest.raises(ConfigError):
            Stats((0, 0, 0), (1, 0, 1))

    def test_dict_roundtrip(self):
        stats = Stats((0.1, -0.2, 0.3), (1.5, 2.0, 0.5))
        assert Stats.from_dict(stats.to_dict()) == stats


class TestResize:
    def test_noop_at_size(self, frame):
        assert resize(frame, 16) is frame

    def test_dims(self, frame):
        out = resize(frame, 8)
        assert out.shape == (8, 8, 3)
        assert out.dtype == np.float32

    def test_constant_stays_constant(self):
        out = resize(np.full((10, 10, 3), 0.25, dtype=np.float32), 32)
        np.testing.assert_allclose(out, 0.25, rtol=1e-6)

    def test_wide_stack(self):
        assert resize(np.zeros((8, 8, 12), dtype=np.float32), 16).shape == (16, 16, 12)


class TestNormalize:
    def test_subtract_background(self, frame):
        np.testing.assert_array_equal(subtract_background(frame, frame), 0.0)

    def test_subtract_dims_mismatch(self, frame):
        with pytest.raises(ShapeError):
            subtract_background(frame, frame[:8])

    def test_per_channel(self):
        signal = np.ones((2, 2, 3), dtype=np.float32)
        out = normalize(signal, Stats((1.0, 0.0, 0.5), (1.0, 2.0, 0.5)))
        np.testing.assert_allclose(out[0, 0], [0.0, 0.5, 1.0])

    def test_stack_tiles_channels(self):
        stack = np.ones((2, 2, 6), dtype=np.float32)
        out = normalize(stack, Stats((0.0, 1.0, 0.0), (1.0, 1.0, 2.0)))
        np.testing.assert_allclose(out[0, 0], [1.0, 0.0, 0.5, 1.0, 0.0, 0.5])

    def test_channel_count_multiple_of_three(self):
        with pytest.raises(ShapeError):
            normalize(np.zeros((2, 2, 4)), Stats())

    def test_preprocess_zero_signal_maps_to_minus_mean_over_std(self, frame):
        out = preprocess(frame, frame, Stats((0.5, 0.5, 0.5), (0.25, 0.25, 0.25)), size=8)
        np.testing.assert_allclose(out, -2.0)


class TestAugment:
    def test_eval_mode_identity(self, frame):
        stack = np.tile(frame, (1, 1, 2))
        s, c = augment(frame, stack, None)
        assert s is frame and c is stack

    def test_shared_draw(self, frame):
        # the stack copy of the frame must be augmented exactly like the frame
        stack = np.concatenate([frame, frame], axis=-1)
        s, c = augment(frame, stack, np.random.default_rng(3))
        np.testing.assert_allclose(c[..., :3], s, rtol=1e-6)
        np.testing.assert_allclose(c[..., 3:], s, rtol=1e-6)

    def test_changes_signal(self, frame):
        s, _ = augment(frame, None, np.random.default_rng(1))
        assert not np.array_equal(s, frame)

    def test_draw_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = AugmentDraw.sample(rng)
            assert all(0.9 <= g <= 1.1 for g in d.gain)
            assert all(-0.02 <= o <= 0.02 for o in d.offset)
            assert 0.0 <= d.sigma_px <= 1.0

    def test_blur_spatial_only(self):
        # a single lit channel must not leak into the others
        signal = np.zeros((9, 9, 3), dtype=np.float32)
        signal[4, 4, 0] = 1.0
        out = AugmentDraw(sigma_px=1.0).apply(signal)
        np.testing.assert_array_equal(out[..., 1:], 0.0)
        assert out[4, 3, 0] > 0

    def test_empty_stack_passthrough(self, frame):
        empty = np.zeros((16, 16, 0), dtype=np.float32)
        _, c = augment(frame, empty, np.random.default_rng(0))
        assert c.shape == (16, 16, 0)

    def test_output_bounded_over_many_draws(self, frame):
        signal = frame - 0.5
        bound = JITTER_GAIN[1] * np.abs(signal).max() + max(abs(o) for o in JITTER_OFFSET)
        rng = np.random.default_rng(12)
        for _ in range(200):
            s, _ = augment(signal, None, rng)
            assert np.abs(s).max() <= bound + 1e-6
