"""Learnable non-uniform quantization with soft assignments.

A value z is softly assigned to each of n centers via
``softmax_j(-sigma * (z - c_j)^2)``; the temperature sigma controls how
close the soft value is to the nearest center. Hard assignment picks the
nearest center (ties to the lower index) and feeds fixed-length coding.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class QuantizerState:
    """Centers, temperature, and the last observed usage distribution.

    ``n`` must be a power of two so each index packs into
    ``bits_per_symbol = log2(n)`` bits.
    """

    def __init__(self, n=8, sigma=1.0):
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"number of centers must be a power of two >= 2, got {n}")
        self.n = n
        self.sigma = float(sigma)
        self.centers = Tensor(np.linspace(-1.0, 1.0, n), requires_grad=True)
        self.last_usage = np.full(n, 1.0 / n)

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.n))

    def init_centers_from(self, z):
        """Spread centers uniformly over the empirical range of a warm-up batch."""
        zd = z.data if isinstance(z, Tensor) else np.asarray(z)
        lo, hi = float(zd.min()), float(zd.max())
        if hi - lo < 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        self.centers.data[:] = np.linspace(lo, hi, self.n)

    def params(self):
        return [self.centers]

    def min_center_gap(self):
        c = np.sort(self.centers.data)
        return float(np.min(np.diff(c)))


def soft_quantize(z, q):
    """Differentiable quantization.

    Returns ``(z_soft, assign)`` where ``assign[..., j]`` is the softmax
    weight of center j and ``z_soft`` is the assignment-weighted center sum.
    """
    if q.sigma <= 0:
        raise ValueError(f"temperature must be positive, got {q.sigma}")
    z = T.as_tensor(z)
    flat = T.reshape(z, (z.size, 1))
    d2 = T.square(T.sub(flat, q.centers))
    assign = T.softmax(T.mul(d2, -q.sigma), axis=-1)
    z_soft = T.reshape(T.tsum(T.mul(assign, q.centers), axis=-1), z.shape)
    return z_soft, T.reshape(assign, (*z.shape, q.n))


def hard_quantize(z, q):
    """Index of the nearest center; ties break toward the lower index."""
    zd = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    d2 = (zd[..., None] - q.centers.data) ** 2
    return np.argmin(d2, axis=-1)


def dequantize(indices, q):
    return q.centers.data[np.asarray(indices)]


def straight_through(z, q):
    """Forward: nearest-center value. Backward: soft_quantize gradient."""
    z = T.as_tensor(z)
    z_soft, _ = soft_quantize(z, q)
    hard = dequantize(hard_quantize(z, q), q)
    return T.add(z_soft, Tensor(hard - z_soft.data))


def usage_distribution(assign):
    """Mean soft assignment over all positions -> probability vector [n]."""
    assign = T.as_tensor(assign)
    if assign.size == 0:
        raise ValueError("usage_distribution of an empty batch")
    n = assign.shape[-1]
    flat = T.reshape(assign, (assign.size // n, n))
    return T.tmean(flat, axis=0)


def usage_histogram(indices, n):
    """Hard-index usage frequencies (reporting-side counterpart)."""
    idx = np.asarray(indices).ravel()
    if idx.size == 0:
        raise ValueError("usage_histogram of an empty batch")
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    return counts / idx.size


def div_loss(p):
    """KL(p || uniform(n)) = sum_i p_i ln(n p_i), with 0 ln 0 := 0."""
    p = T.as_tensor(p)
    if np.any(p.data < 0):
        raise ValueError("probability vector has negative entries")
    n = p.size
    safe = T.clip_min(p, 1e-300)
    return T.tsum(T.mul(p, T.log(T.mul(safe, float(n)))))


def usage_entropy_bits(p):
    """Shannon entropy of a usage distribution, in bits."""
    p = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def anneal_sigma(epoch, total_epochs, sigma_start=1.0, sigma_end=300.0):
    """Geometric temperature schedule over stage-1 epochs."""
    if total_epochs <= 1:
        return sigma_end
    t = min(epoch, total_epochs - 1) / (total_epochs - 1)
    return float(sigma_start * (sigma_end / sigma_start) ** t)
