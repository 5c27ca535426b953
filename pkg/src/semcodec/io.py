"""Deterministic metrics CSV and run-manifest emission."""

from __future__ import annotations

import csv
import hashlib
import json
import os

METRICS_COLUMNS = [
    "stage", "epoch", "ber", "seed", "accuracy", "wire_bits",
    "entropy_bits", "pos_fraction", "loss_total", "loss_div",
    "loss_cls", "loss_xai",
]


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cell(value):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        # repr is the shortest round-trip form, stable across runs
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows, columns=None):
    """Rows are dicts; missing keys become empty cells. Byte-deterministic."""
    columns = list(columns) if columns is not None else METRICS_COLUMNS
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def read_metrics_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_manifest(path, payload):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
