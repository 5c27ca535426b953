"""Binary checkpoint format for named parameter tensors.

Layout (little-endian): 8-byte magic, u16 version, u32 tensor count, then
per tensor: u16 name length, utf-8 name, u8 ndim, u32 dims, float64 data.
"""

from __future__ import annotations

import struct

import numpy as np

CKPT_MAGIC = b"SEMCCKPT"
CKPT_VERSION = 1


def save_checkpoint(path, params):
    """params maps name -> Tensor (or ndarray)."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<HI", CKPT_VERSION, len(params)))
        for name in sorted(params):
            data = getattr(params[name], "data", params[name])
            # tobytes() serializes in C order; ascontiguousarray would
            # promote 0-dim scalars to shape (1,)
            arr = np.asarray(data, dtype=np.float64)
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
    return path


def load_checkpoint(path):
    """Returns name -> float64 ndarray."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<HI", f.read(6))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            n_items = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n_items)
            if len(buf) != 8 * n_items:
                raise ValueError(f"{path}: truncated tensor {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return out


def load_into(params, path):
    """Load a checkpoint into live tensors; names and shapes must match."""
    loaded = load_checkpoint(path)
    missing = sorted(set(params) - set(loaded))
    extra = sorted(set(loaded) - set(params))
    if missing or extra:
        raise ValueError(f"{path}: checkpoint mismatch, missing={missing}, extra={extra}")
    for name, tensor in params.items():
        if loaded[name].shape != tensor.data.shape:
            raise ValueError(
                f"{path}: shape mismatch for {name}: "
                f"{loaded[name].shape} vs {tensor.data.shape}"
            )
        tensor.data[...] = loaded[name]
