"""Thermometer (unary) encoding of multi-channel sensor windows.

Bit layout of an encoded window is channel-major, then time, then bit index:
bit ``(c, t, k)`` lives at flat position ``(c * timesteps + t) * B + k``.
Model mapping indices refer to this layout, so it must not change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateChannelError(ValueError):
    """A channel has too few distinct values to place B thresholds."""

    def __init__(self, channel: int, distinct: int, bits: int):
        super().__init__(
            f"channel {channel} has {distinct} distinct values, need at least {bits}"
        )
        self.channel = channel


@dataclass(frozen=True)
class ThermometerEncoder:
    thresholds: np.ndarray  # [num_channels, B], float64

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=np.float64)
        if thr.ndim != 2 or thr.shape[0] == 0 or thr.shape[1] == 0:
            raise ValueError(f"thresholds must be a non-empty 2-D matrix, got {thr.shape}")
        if not np.all(np.isfinite(thr)):
            raise ValueError("thresholds must be finite")
        if np.any(np.diff(thr, axis=1) < 0):
            raise ValueError("threshold rows must be non-decreasing")
        thr.setflags(write=False)
        object.__setattr__(self, "thresholds", thr)

    @property
    def num_channels(self) -> int:
        return self.thresholds.shape[0]

    @property
    def bits_per_value(self) -> int:
        return self.thresholds.shape[1]

    def input_width(self, timesteps: int) -> int:
        return self.num_channels * timesteps * self.bits_per_value


def fit_distributive(train_values, bits_per_value: int) -> ThermometerEncoder:
    """Fit per-channel thresholds at the k/(B+1) empirical quantiles.

    ``train_values`` is either an array shaped ``[samples, channels, timesteps]``
    or ``[channels, n]``, or a sequence with one 1-D array per channel. All
    values of a channel are pooled across samples and time. Quantiles use
    linear interpolation between order statistics.
    """
    if bits_per_value < 1:
        raise ValueError("bits_per_value must be positive")
    if isinstance(train_values, np.ndarray):
        arr = train_values
        if arr.ndim == 3:
            per_channel = [arr[:, c, :].ravel() for c in range(arr.shape[1])]
        elif arr.ndim == 2:
            per_channel = list(arr)
        else:
            raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
    else:
        per_channel = [np.ravel(np.asarray(v)) for v in train_values]

    probs = np.arange(1, bits_per_value + 1) / (bits_per_value + 1)
    rows = []
    for c, values in enumerate(per_channel):
        values = np.asarray(values, dtype=np.float64)
        distinct = np.unique(values).size
        if distinct < bits_per_value or distinct < 2:
            raise DegenerateChannelError(c, distinct, bits_per_value)
        rows.append(np.quantile(values, probs, method="linear"))
    return ThermometerEncoder(np.stack(rows))


def encode(encoder: ThermometerEncoder, window) -> np.ndarray:
    """Encode one window ``[C, T]`` or a batch ``[N, C, T]`` into uint8 bits.

    Bit ``(c, t, k)`` is 1 iff ``window[c, t] > thresholds[c, k]`` (ties
    encode as 0). Output is flat per sample.
    """
    w = np.asarray(window)
    single = w.ndim == 2
    if single:
        w = w[None]
    if w.ndim != 3:
        raise ValueError(f"expected [C, T] or [N, C, T] window, got shape {np.shape(window)}")
    if w.shape[1] != encoder.num_channels:
        raise ValueError(
            f"window has {w.shape[1]} channels, encoder expects {encoder.num_channels}"
        )
    thr = encoder.thresholds
    bits = (w[:, :, :, None] > thr[None, :, None, :]).astype(np.uint8)
    bits = bits.reshape(w.shape[0], -1)
    return bits[0] if single else bits


def decode_counts(encoder: ThermometerEncoder, bits, timesteps: int) -> np.ndarray:
    """Ones-count per (channel, time) group, shaped ``[..., C, T]``."""
    b = np.asarray(bits)
    shape = b.shape[:-1] + (encoder.num_channels, timesteps, encoder.bits_per_value)
    return b.reshape(shape).sum(axis=-1)
