import numpy as np
import pytest

from dwnhar import datahar
from dwnhar.datahar import DatasetFormatError, HarDataset, class_distribution, load_split


def _write(root, split, n, rng, subjects):
    windows = rng.normal(size=(n, 9, 128)).astype(np.float32)
    labels = rng.integers(1, 7, size=n)
    subj = rng.choice(subjects, size=n)
    datahar.write_split(root, split, windows, labels, subj)
    return windows, labels, subj


@pytest.fixture
def har_dir(tmp_path, rng):
    tr = _write(tmp_path, "train", 14, rng, [1, 3, 5])
    te = _write(tmp_path, "test", 6, rng, [2, 4])
    return tmp_path, tr, te


def test_load_shapes_and_channel_order(har_dir):
    root, (w, y, s), _ = har_dir
    ds = load_split(root, "train")
    assert len(ds) == 14
    assert ds.windows.shape == (14, 9, 128)
    assert ds.windows.dtype == np.float32
    assert ds.channel_order[:3] == ("body_acc_x", "body_acc_y", "body_acc_z")
    np.testing.assert_allclose(ds.windows, w, rtol=1e-6)
    assert ds.labels.tolist() == y.tolist()
    sample = ds[3]
    assert sample.window.shape == (9, 128) and sample.label == y[3] and sample.subject_id == s[3]


def test_subjects_disjoint(har_dir):
    root = har_dir[0]
    tr, te = load_split(root, "train"), load_split(root, "test")
    assert not set(tr.subjects.tolist()) & set(te.subjects.tolist())


def test_reload_deterministic_and_cached(har_dir):
    root = har_dir[0]
    a = load_split(root, "train")
    assert (root / "train" / ".dwnhar_cache_train.npz").is_file()
    b = load_split(root, "train")
    c = load_split(root, "train", use_cache=False)
    for other in (b, c):
        assert np.array_equal(a.windows, other.windows)
        assert np.array_equal(a.labels, other.labels)


def test_cache_invalidated_by_source_change(har_dir, rng):
    root = har_dir[0]
    load_split(root, "train")
    _write(root, "train", 9, rng, [1])
    assert len(load_split(root, "train")) == 9


def test_short_row_names_file_and_line(har_dir):
    root = har_dir[0]
    f = root / "train" / "Inertial Signals" / "body_gyro_y_train.txt"
    lines = f.read_text().splitlines()
    lines[4] = " ".join(lines[4].split()[:127])
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match=r"body_gyro_y_train.txt:5: expected 128 values, found 127"):
        load_split(root, "train")


def test_missing_file(har_dir):
    root = har_dir[0]
    (root / "test" / "subject_test.txt").unlink()
    with pytest.raises(FileNotFoundError, match="subject_test.txt"):
        load_split(root, "test")


def test_label_out_of_range(har_dir):
    root = har_dir[0]
    f = root / "test" / "y_test.txt"
    vals = f.read_text().split()
    vals[2] = "7"
    f.write_text("\n".join(vals) + "\n")
    with pytest.raises(DatasetFormatError, match="y_test.txt:3"):
        load_split(root, "test")


def test_row_count_mismatch(har_dir):
    root = har_dir[0]
    f = root / "test" / "Inertial Signals" / "total_acc_z_test.txt"
    f.write_text("\n".join(f.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(DatasetFormatError, match="rows"):
        load_split(root, "test")


def test_class_distribution():
    w = np.zeros((3, 9, 128), dtype=np.float32)
    ds = HarDataset(w, np.array([1, 1, 2]), np.array([1, 1, 1]), "train")
    assert class_distribution(ds) == {1: 2, 2: 1}
    empty = HarDataset(w[:0], np.array([], dtype=np.int64), np.array([], dtype=np.int64), "train")
    with pytest.raises(ValueError):
        class_distribution(empty)


def test_distribution_sums_to_size(har_dir):
    ds = load_split(har_dir[0], "train")
    assert sum(class_distribution(ds).values()) == len(ds)
