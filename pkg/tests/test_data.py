"""Synthetic shapes dataset and the small-image binary loader."""

import json

import numpy as np
import pytest

from semcodec import data as D


def test_make_shapes_counts_and_shape():
    X, y = D.make_shapes(1000, seed=7)
    assert X.shape == (1000, 3, 32, 32)
    assert y.shape == (1000,)
    counts = np.bincount(y, minlength=4)
    assert np.all(np.abs(counts - 250) <= 0.05 * 1000)


def test_make_shapes_deterministic():
    a, ya = D.make_shapes(64, seed=5)
    b, yb = D.make_shapes(64, seed=5)
    assert a.tobytes() == b.tobytes()
    assert np.array_equal(ya, yb)
    c, _ = D.make_shapes(64, seed=6)
    assert a.tobytes() != c.tobytes()


def test_make_shapes_rejects_bad_args():
    with pytest.raises(ValueError):
        D.make_shapes(0)
    with pytest.raises(ValueError):
        D.make_shapes(-5)
    with pytest.raises(ValueError):
        D.make_shapes(10, n_classes=1)
    with pytest.raises(ValueError):
        D.make_shapes(10, n_classes=11)
    X, y = D.make_shapes(20, seed=3, n_classes=10)
    assert set(y) == set(range(10))


def test_make_shapes_pixels_in_range():
    X, _ = D.make_shapes(32, seed=1)
    assert X.min() >= 0.0 and X.max() <= 1.0


def test_train_val_split():
    X, y = D.make_shapes(100, seed=2)
    (xt, yt), (xv, yv) = D.train_val_split(X, y, val_fraction=0.25, seed=3)
    assert xt.shape[0] == 75 and xv.shape[0] == 25
    assert yt.shape[0] == 75 and yv.shape[0] == 25
    # disjoint and exhaustive
    merged = np.concatenate([xt, xv])
    assert merged.shape[0] == 100
    assert np.unique(merged.reshape(100, -1), axis=0).shape[0] == 100


def test_save_and_load_round_trip(tmp_path):
    X, y = D.make_shapes(20, seed=9)
    manifest = D.save_dataset(tmp_path / "ds", X, y, {"kind": "synthetic-shapes", "seed": 9})
    assert manifest["n"] == 20
    assert sum(manifest["label_histogram"]) == 20
    back_X, back_y = D.load_dataset(tmp_path / "ds")
    # storage is float32, so compare at that precision
    assert np.allclose(back_X, X, atol=1e-6)
    assert np.array_equal(back_y, y)
    on_disk = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert set(on_disk["files"]) == {"images.npy", "labels.npy"}


def test_save_dataset_same_seed_identical_files(tmp_path):
    for name in ("a", "b"):
        X, y = D.make_shapes(16, seed=11)
        D.save_dataset(tmp_path / name, X, y, {"seed": 11})
    for fname in ("images.npy", "labels.npy", "manifest.json"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_load_small_binary(tmp_path):
    rng = np.random.default_rng(3)
    n = 12
    records = np.zeros((n, D.RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = rng.integers(0, 10, size=n)
    records[:, 1:] = rng.integers(0, 256, size=(n, 3072))
    path = tmp_path / "data.bin"
    records.tofile(path)
    X, y = D.load_small_binary(path)
    assert X.shape == (n, 3, 32, 32)
    assert np.array_equal(y, records[:, 0])
    assert X.max() <= 1.0 and X.min() >= 0.0
    X2, _ = D.load_small_binary(path, limit=5)
    assert X2.shape[0] == 5


def test_load_small_binary_rejects_ragged(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * (D.RECORD_BYTES + 7))
    with pytest.raises(ValueError, match="record"):
        D.load_small_binary(path)
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    with pytest.raises(ValueError):
        D.load_small_binary(empty)
