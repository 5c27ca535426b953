"""Desk-scale datasets: a deterministic synthetic shapes generator and a
loader for the common 10-class small-image binary format.

The synthetic set renders colored geometric shapes on noisy backgrounds,
32x32 RGB, constructed so a tiny CNN separates the classes quickly. All
randomness goes through one seeded generator; the same seed always yields
byte-identical arrays.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

SHAPE_CLASSES = ("circle", "square", "triangle", "cross", "diamond", "ring",
                 "hbar", "vbar", "saltire", "frame")
IMG_SIZE = 32


def _render_shape(rng, kind):
    img = rng.uniform(0.0, 0.2, size=3)[:, None, None] * np.ones((3, IMG_SIZE, IMG_SIZE))
    img += rng.normal(0.0, 0.01, size=img.shape)
    cy = rng.uniform(13, 19)
    cx = rng.uniform(13, 19)
    r = rng.uniform(7, 11)
    color = rng.uniform(0.6, 1.0, size=3)
    yy, xx = np.mgrid[0:IMG_SIZE, 0:IMG_SIZE].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    box = (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == "circle":
        mask = dy**2 + dx**2 <= r**2
    elif kind == "square":
        mask = np.maximum(np.abs(dy), np.abs(dx)) <= r * 0.85
    elif kind == "triangle":
        top = cy - r
        mask = (dy >= -r) & (dy <= r) & (np.abs(dx) <= (yy - top) * 0.55)
    elif kind == "cross":
        arm = r * 0.35
        mask = box & ((np.abs(dy) <= arm) | (np.abs(dx) <= arm))
    elif kind == "diamond":
        mask = np.abs(dy) + np.abs(dx) <= r
    elif kind == "ring":
        d2 = dy**2 + dx**2
        mask = (d2 <= r**2) & (d2 >= (0.55 * r) ** 2)
    elif kind == "hbar":
        mask = (np.abs(dy) <= r * 0.35) & (np.abs(dx) <= r)
    elif kind == "vbar":
        mask = (np.abs(dy) <= r) & (np.abs(dx) <= r * 0.35)
    elif kind == "saltire":
        mask = box & (np.abs(np.abs(dy) - np.abs(dx)) <= r * 0.3)
    elif kind == "frame":
        inner = np.maximum(np.abs(dy), np.abs(dx)) <= r * 0.5
        mask = box & ~inner
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    img = np.where(mask[None], color[:, None, None], img)
    return np.clip(img, 0.0, 1.0)


def make_shapes(n, seed=0, n_classes=4):
    """n samples, labels round-robin then shuffled; X is [n,3,32,32] float64."""
    if n <= 0:
        raise ValueError(f"need a positive sample count, got {n}")
    if not 2 <= n_classes <= len(SHAPE_CLASSES):
        raise ValueError(f"n_classes must be in [2, {len(SHAPE_CLASSES)}], got {n_classes}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    images = np.stack([_render_shape(rng, SHAPE_CLASSES[k]) for k in labels])
    return images, labels.astype(np.int64)


def train_val_split(images, labels, val_fraction=0.25, seed=0):
    n = images.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    val, train = order[:n_val], order[n_val:]
    return (images[train], labels[train]), (images[val], labels[val])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_dataset(out_dir, images, labels, meta):
    """images.npy + labels.npy + manifest.json with checksums and histogram."""
    os.makedirs(out_dir, exist_ok=True)
    img_path = os.path.join(out_dir, "images.npy")
    lab_path = os.path.join(out_dir, "labels.npy")
    np.save(img_path, images.astype(np.float32))
    np.save(lab_path, labels.astype(np.int64))
    hist = np.bincount(labels, minlength=int(labels.max()) + 1)
    manifest = {
        **meta,
        "n": int(images.shape[0]),
        "label_histogram": [int(c) for c in hist],
        "files": {
            "images.npy": _sha256(img_path),
            "labels.npy": _sha256(lab_path),
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_dataset(data_dir):
    images = np.load(os.path.join(data_dir, "images.npy")).astype(np.float64)
    labels = np.load(os.path.join(data_dir, "labels.npy"))
    return images, labels


RECORD_BYTES = 1 + 3 * 32 * 32


def load_small_binary(path, limit=None):
    """Read the 10-class binary image format (1 label byte + 3072 pixels)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: size {raw.size} is not a multiple of the {RECORD_BYTES}-byte record"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return images, labels
