"""Loader for the raw inertial signals of the UCI-HAR dataset.

Expects the published directory layout::

    <root>/train/Inertial Signals/body_acc_x_train.txt  (and 8 siblings)
    <root>/train/y_train.txt
    <root>/train/subject_train.txt
    <root>/test/...

Labels keep the dataset's 1..6 numbering; models use ``label - 1`` as class index.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CHANNEL_ORDER = (
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z",
)
ACTIVITY_NAMES = (
    "walking", "walking_upstairs", "walking_downstairs",
    "sitting", "standing", "lying",
)
TIMESTEPS = 128
SPLITS = ("train", "test")
_CACHE_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class HarSample:
    window: np.ndarray  # [9, 128] float32
    label: int
    subject_id: int


@dataclass(frozen=True)
class HarDataset:
    windows: np.ndarray   # [N, 9, 128] float32
    labels: np.ndarray    # [N] int64, 1..6
    subjects: np.ndarray  # [N] int64
    split_tag: str
    channel_order: tuple = CHANNEL_ORDER

    def __post_init__(self):
        n = len(self.labels)
        if self.windows.shape[0] != n or self.subjects.shape[0] != n:
            raise ValueError("windows, labels and subjects disagree on sample count")
        for arr in (self.windows, self.labels, self.subjects):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> HarSample:
        return HarSample(self.windows[i], int(self.labels[i]), int(self.subjects[i]))

    @property
    def class_indices(self) -> np.ndarray:
        return self.labels - 1

    def subset(self, idx) -> "HarDataset":
        idx = np.asarray(idx)
        return HarDataset(
            self.windows[idx].copy(), self.labels[idx].copy(),
            self.subjects[idx].copy(), self.split_tag, self.channel_order,
        )


def _source_files(root: Path, split: str) -> list[Path]:
    sig = root / split / "Inertial Signals"
    files = [sig / f"{name}_{split}.txt" for name in CHANNEL_ORDER]
    files.append(root / split / f"y_{split}.txt")
    files.append(root / split / f"subject_{split}.txt")
    return files


def _read_matrix(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != TIMESTEPS:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {TIMESTEPS} values, found {len(fields)}"
                )
            try:
                rows.append(np.array(fields, dtype=np.float64))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        return np.empty((0, TIMESTEPS), dtype=np.float32)
    return np.stack(rows).astype(np.float32)


def _read_ints(path: Path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                values.append(int(s))
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: not an integer: {s!r}") from None
    return np.asarray(values, dtype=np.int64)


def _stamp(files: list[Path]) -> np.ndarray:
    st = [os.stat(f) for f in files]
    return np.array([[s.st_size, s.st_mtime_ns] for s in st], dtype=np.int64)


def _parse(root: Path, split: str) -> HarDataset:
    files = _source_files(root, split)
    channels = []
    for f in files[:9]:
        m = _read_matrix(f)
        if channels and m.shape[0] != channels[0].shape[0]:
            raise DatasetFormatError(
                f"{f}: {m.shape[0]} rows, but {files[0]} has {channels[0].shape[0]}"
            )
        channels.append(m)
    labels = _read_ints(files[9])
    subjects = _read_ints(files[10])
    n = channels[0].shape[0]
    for f, arr in ((files[9], labels), (files[10], subjects)):
        if arr.shape[0] != n:
            raise DatasetFormatError(f"{f}: {arr.shape[0]} rows, signal files have {n}")
    bad = np.flatnonzero((labels < 1) | (labels > 6))
    if bad.size:
        raise DatasetFormatError(
            f"{files[9]}:{bad[0] + 1}: label {labels[bad[0]]} outside 1..6"
        )
    windows = np.stack(channels, axis=1)
    return HarDataset(windows, labels, subjects, split)


def load_split(root_dir, split: str, use_cache: bool = True) -> HarDataset:
    """Load one split; a parsed copy is cached next to the source files."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    root = Path(root_dir)
    files = _source_files(root, split)
    for f in files:
        if not f.is_file():
            raise FileNotFoundError(f"missing dataset file: {f}")
    stamp = _stamp(files)
    cache = root / split / f".dwnhar_cache_{split}.npz"
    if use_cache and cache.is_file():
        try:
            with np.load(cache) as z:
                if int(z["version"]) == _CACHE_VERSION and np.array_equal(z["stamp"], stamp):
                    return HarDataset(z["windows"], z["labels"], z["subjects"], split)
        except (OSError, KeyError, ValueError):
            log.warning("ignoring unreadable cache %s", cache)
    ds = _parse(root, split)
    if use_cache:
        try:
            np.savez(cache, version=_CACHE_VERSION, stamp=stamp, windows=ds.windows,
                     labels=ds.labels, subjects=ds.subjects)
        except OSError as exc:
            log.warning("could not write cache %s: %s", cache, exc)
    return ds


def class_distribution(ds: HarDataset) -> dict[int, int]:
    if len(ds) == 0:
        raise ValueError("class distribution of an empty dataset")
    return dict(sorted(Counter(int(x) for x in ds.labels).items()))


def write_split(root_dir, split: str, windows, labels, subjects) -> None:
    """Write arrays in the published text layout (used for fixtures and tests)."""
    root = Path(root_dir)
    sig = root / split / "Inertial Signals"
    sig.mkdir(parents=True, exist_ok=True)
    windows = np.asarray(windows)
    for c, name in enumerate(CHANNEL_ORDER):
        np.savetxt(sig / f"{name}_{split}.txt", windows[:, c, :], fmt="%.8e")
    np.savetxt(root / split / f"y_{split}.txt", np.asarray(labels), fmt="%d")
    np.savetxt(root / split / f"subject_{split}.txt", np.asarray(subjects), fmt="%d")
