"""Small synthetic stand-in for UCI-HAR with the same array shapes.

Each class is a distinct mix of per-channel sinusoids plus Gaussian noise, so a
LUT classifier can separate the classes. Used by tests and CLI smoke runs when
the real dataset is not available.
"""

import numpy as np

from .datahar import HarDataset


def make_har_like(n: int, seed: int = 0, channels: int = 9, timesteps: int = 128,
                  num_classes: int = 6, noise: float = 0.3, subjects=range(1, 6),
                  split: str = "train") -> HarDataset:
    rng = np.random.default_rng(seed)
    proto = np.random.default_rng(12345)  # class prototypes shared by every split
    freq = proto.uniform(0.5, 6.0, size=(num_classes, channels))
    amp = proto.uniform(0.2, 1.0, size=(num_classes, channels))
    offset = proto.normal(0.0, 0.5, size=(num_classes, channels))
    t = np.arange(timesteps) / 50.0
    labels = rng.integers(0, num_classes, size=n)
    phase = rng.uniform(0, 2 * np.pi, size=(n, channels, 1))
    w = (amp[labels][..., None] * np.sin(2 * np.pi * freq[labels][..., None] * t + phase)
         + offset[labels][..., None]
         + rng.normal(0.0, noise, size=(n, channels, timesteps)))
    subj = rng.choice(np.asarray(list(subjects)), size=n)
    return HarDataset(w.astype(np.float32), labels.astype(np.int64) + 1, subj.astype(np.int64), split)
