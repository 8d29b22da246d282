import numpy as np
import pytest
from scipy import signal

from dwnhar.augment import (
    AugmentConfig, apply_all, augment_batch, axis_flip, butterworth_sos, jitter, lowpass,
    rotate3, rotation_matrix, sample_stream, scale, time_mask, time_shift,
)


def shift_oracle(xs, k):
    n = len(xs)
    return [xs[i - k] if 0 <= i - k < n else 0 for i in range(n)]


@pytest.mark.parametrize("k", [-5, -4, -1, 0, 1, 2, 3, 4, 7])
def test_time_shift_matches_index_oracle(k):
    xs = [1, 2, 3, 4]
    assert time_shift(np.array([xs]), k)[0].tolist() == shift_oracle(xs, k)


def test_time_shift_examples():
    assert time_shift(np.array([[1, 2, 3, 4]]), 2).tolist() == [[0, 0, 1, 2]]
    assert time_shift(np.array([[1, 2, 3, 4]]), -1).tolist() == [[2, 3, 4, 0]]


def test_scale():
    w = np.array([[1.0, 2.0]])
    np.testing.assert_allclose(scale(w, 1.1), [[1.1, 2.2]])
    assert np.array_equal(scale(w, 1.0), w)
    assert not scale(np.zeros((2, 3)), 0.9).any()


def test_jitter_statistics():
    rng = np.random.default_rng(7)
    w = np.zeros((1, 1_000_000))
    d = jitter(w, rng, 0.05) - w
    assert 0.0024 <= d.var() <= 0.0026
    assert abs(d.mean()) <= 0.001
    assert np.array_equal(jitter(w[:, :10], rng, 0.0), w[:, :10])


def test_time_mask():
    assert time_mask(np.ones((1, 5)), 2, 2).tolist() == [[1, 1, 0, 0, 1]]
    assert np.array_equal(time_mask(np.ones((2, 5)), 3, 0), np.ones((2, 5)))
    assert not time_mask(np.ones((2, 5)), 0, 5).any()
    with pytest.raises(ValueError):
        time_mask(np.ones((1, 5)), 4, 2)


def test_axis_flip():
    assert axis_flip(np.array([[1.0, -2.0]]), [True]).tolist() == [[-1.0, 2.0]]
    w = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(axis_flip(w, [False, False, False]), w)
    m = [True, False, True]
    assert np.array_equal(axis_flip(axis_flip(w, m), m), w)


def test_rotation_about_z():
    r = rotation_matrix([0, 0, 1], 10.0)
    th = np.deg2rad(10.0)
    np.testing.assert_allclose(r @ [1, 0, 0], [np.cos(th), np.sin(th), 0], atol=1e-12)


def test_rotation_is_orthogonal_and_keeps_norm(rng):
    w = rng.normal(size=(9, 128))
    out = rotate3(w, rng.normal(size=3), 7.3)
    np.testing.assert_allclose(np.linalg.norm(out[:3], axis=0), np.linalg.norm(w[:3], axis=0),
                               atol=1e-6)
    assert np.array_equal(out[3:], w[3:])
    assert np.array_equal(rotate3(w, [1, 2, 3], 0.0), w)
    r = rotation_matrix(rng.normal(size=3), -9.0)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)


def _amplitude_gain(freq, n=2000):
    t = np.arange(n) / 50.0
    x = np.sin(2 * np.pi * freq * t)[None, :]
    y = lowpass(x, 20.0, 50.0)
    core = slice(n // 4, 3 * n // 4)
    return np.sqrt(np.mean(y[0, core] ** 2) / np.mean(x[0, core] ** 2))


def test_lowpass_frequency_response():
    sos = butterworth_sos(20.0, 50.0)
    # designed response; forward-backward filtering squares the magnitude
    _, h = signal.sosfreqz(sos, worN=[5.0, 24.0], fs=50.0)
    expected = np.abs(h) ** 2
    assert 20 * np.log10(expected[1]) <= -6
    assert abs(expected[0] - 1) < 0.05
    g5, g24 = _amplitude_gain(5.0), _amplitude_gain(24.0)
    assert abs(g5 - 1) < 0.05
    assert 20 * np.log10(g24) <= -6
    np.testing.assert_allclose([g5, g24], expected, rtol=0.02)


def test_lowpass_keeps_dc():
    w = np.full((3, 128), 2.5)
    np.testing.assert_allclose(lowpass(w), w, atol=1e-6)


def test_config_rejects_cutoff_above_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        AugmentConfig(lowpass_cutoff_hz=30.0)


def test_apply_all_identity_cases(rng):
    w = rng.normal(size=(9, 128))
    assert np.array_equal(apply_all(w, AugmentConfig(p=0.0), rng), w)
    ident = AugmentConfig(p=1.0, max_shift=0, scale_range=(1.0, 1.0), jitter_sigma=0.0,
                          max_mask_len=0, max_flip_axes=0, max_rotation_deg=0.0,
                          lowpass_cutoff_hz=None)
    assert np.array_equal(apply_all(w, ident, np.random.default_rng(3)), w)


def test_apply_all_deterministic(rng):
    w = rng.normal(size=(9, 128)).astype(np.float32)
    cfg = AugmentConfig(p=0.9, seed=11)
    a = apply_all(w, cfg, sample_stream(11, 4, 2))
    b = apply_all(w, cfg, sample_stream(11, 4, 2))
    assert a.tobytes() == b.tobytes()
    assert a.shape == w.shape and a.dtype == w.dtype


def test_augment_batch_keys(rng):
    w = rng.normal(size=(4, 9, 32))
    cfg = AugmentConfig(p=1.0, seed=5)
    a = augment_batch(w, cfg, [(0, i) for i in range(4)])
    b = augment_batch(w[::-1].copy(), cfg, [(0, i) for i in reversed(range(4))])
    assert np.array_equal(a, b[::-1])
