"""Stochastic 1-D augmentations for ``[channels, timesteps]`` sensor windows.

Every transform returns a new array of the same shape. ``apply_all`` runs the
seven transforms in a fixed order, each with independent probability ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

BUTTERWORTH_ORDER = 4
TRANSFORM_ORDER = ("shift", "scale", "jitter", "mask", "flip", "rotate", "lowpass")


@dataclass(frozen=True)
class AugmentConfig:
    p: float = 0.3
    max_shift: int = 10
    scale_range: tuple = (0.9, 1.1)
    jitter_sigma: float = 0.05
    max_mask_len: int = 10
    max_flip_axes: int | None = None  # None: any number of channels
    max_rotation_deg: float = 10.0
    lowpass_cutoff_hz: float | None = 20.0  # None disables filtering
    sample_rate_hz: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"augmentation probability must be in [0, 1], got {self.p}")
        lo, hi = self.scale_range
        if lo > hi:
            raise ValueError(f"bad scale_range {self.scale_range}")
        if self.max_shift < 0 or self.max_mask_len < 0 or self.jitter_sigma < 0:
            raise ValueError("shift, mask length and jitter sigma must be non-negative")
        if self.lowpass_cutoff_hz is not None and not (
            0 < self.lowpass_cutoff_hz < self.sample_rate_hz / 2
        ):
            raise ValueError(
                f"lowpass cutoff {self.lowpass_cutoff_hz} Hz must lie strictly below "
                f"Nyquist ({self.sample_rate_hz / 2} Hz)"
            )


def time_shift(window, shift: int) -> np.ndarray:
    """Move samples ``shift`` steps later in time (negative: earlier); vacated steps are 0."""
    w = np.asarray(window)
    out = np.zeros_like(w)
    t = w.shape[-1]
    if shift >= t or -shift >= t:
        return out
    if shift > 0:
        out[..., shift:] = w[..., :t - shift]
    elif shift < 0:
        out[..., :t + shift] = w[..., -shift:]
    else:
        out[...] = w
    return out


def scale(window, factor: float) -> np.ndarray:
    w = np.asarray(window)
    return (w * factor).astype(w.dtype, copy=False)


def jitter(window, rng: np.random.Generator, sigma: float = 0.05) -> np.ndarray:
    w = np.asarray(window)
    if sigma == 0:
        return w.copy()
    return (w + rng.normal(0.0, sigma, size=w.shape)).astype(w.dtype, copy=False)


def time_mask(window, start: int, length: int) -> np.ndarray:
    w = np.asarray(window)
    if start < 0 or length < 0 or start + length > w.shape[-1]:
        raise ValueError(f"mask [{start}, {start + length}) outside window of {w.shape[-1]}")
    out = w.copy()
    out[..., start:start + length] = 0
    return out


def axis_flip(window, mask) -> np.ndarray:
    """Negate every channel whose mask bit is set; an empty mask is the identity."""
    w = np.asarray(window)
    out = w.copy()
    m = np.zeros(w.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    m[:mask.size] = mask
    out[m] = -out[m]
    return out


def rotation_matrix(axis, angle_deg: float) -> np.ndarray:
    """Axis-angle (Rodrigues) rotation matrix."""
    a = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = a / norm
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) * c + s * k + (1 - c) * np.outer([x, y, z], [x, y, z])


def rotate3(window, axis, angle_deg: float) -> np.ndarray:
    """Rotate channels 0..2 (one 3-vector per timestep); other channels untouched."""
    w = np.asarray(window)
    out = w.copy()
    r = rotation_matrix(axis, angle_deg)
    out[:3] = (r @ w[:3].astype(np.float64)).astype(w.dtype, copy=False)
    return out


@lru_cache(maxsize=16)
def butterworth_sos(cutoff_hz: float, sample_rate_hz: float, order: int = BUTTERWORTH_ORDER):
    return signal.butter(order, cutoff_hz, btype="low", fs=sample_rate_hz, output="sos")


def lowpass(window, cutoff_hz: float = 20.0, sample_rate_hz: float = 50.0) -> np.ndarray:
    """Zero-phase (forward-backward) 4th-order Butterworth low-pass along time."""
    w = np.asarray(window)
    sos = butterworth_sos(float(cutoff_hz), float(sample_rate_hz))
    return signal.sosfiltfilt(sos, w, axis=-1).astype(w.dtype, copy=False)


def sample_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent random stream for one sample (e.g. keys = epoch, sample index)."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def apply_all(window, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(window).copy()
    if config.p == 0:
        return w
    channels, timesteps = w.shape
    for name in TRANSFORM_ORDER:
        if rng.random() >= config.p:
            continue
        if name == "shift":
            w = time_shift(w, int(rng.integers(-config.max_shift, config.max_shift + 1)))
        elif name == "scale":
            w = scale(w, rng.uniform(*config.scale_range))
        elif name == "jitter":
            w = jitter(w, rng, config.jitter_sigma)
        elif name == "mask":
            length = int(rng.integers(0, min(config.max_mask_len, timesteps) + 1))
            start = int(rng.integers(0, timesteps - length + 1))
            w = time_mask(w, start, length)
        elif name == "flip":
            limit = channels if config.max_flip_axes is None else min(config.max_flip_axes, channels)
            if limit > 0:
                k = int(rng.integers(1, limit + 1))
                mask = np.zeros(channels, dtype=bool)
                mask[rng.choice(channels, size=k, replace=False)] = True
                w = axis_flip(w, mask)
        elif name == "rotate":
            axis = rng.normal(size=3)
            angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg)
            if channels >= 3 and angle != 0:
                w = rotate3(w, axis, angle)
        elif name == "lowpass":
            if config.lowpass_cutoff_hz is not None:
                w = lowpass(w, config.lowpass_cutoff_hz, config.sample_rate_hz)
    return w


def augment_batch(windows, config: AugmentConfig, keys) -> np.ndarray:
    """Augment ``[N, C, T]`` windows; ``keys[i]`` seeds sample i's stream."""
    out = np.empty_like(windows)
    for i, key in enumerate(keys):
        out[i] = apply_all(windows[i], config, sample_stream(config.seed, *np.atleast_1d(key)))
    return out
