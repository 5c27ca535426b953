"""Codec building blocks: GDN/IGDN, PReLU, pooling, linear, and losses.

GDN follows the square/sqrt form
``y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2)``; the channel coupling
is evaluated as a 1x1 convolution so gradients come from the conv op.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

GDN_BETA_MIN = 1e-6


class GdnParams:
    """Per-channel offsets beta (length C) and C x C coupling weights gamma.

    Both are kept non-negative (beta >= beta_min) by ``project``, which the
    optimizer calls after every step.
    """

    def __init__(self, channels, gamma_init=0.1, beta_min=GDN_BETA_MIN):
        self.channels = channels
        self.beta_min = float(beta_min)
        self.beta = Tensor(np.ones(channels), requires_grad=True)
        self.gamma = Tensor(gamma_init * np.eye(channels), requires_grad=True)

    def project(self):
        np.maximum(self.beta.data, self.beta_min, out=self.beta.data)
        np.maximum(self.gamma.data, 0.0, out=self.gamma.data)

    def params(self):
        return {"beta": self.beta, "gamma": self.gamma}


class PreluParams:
    """PReLU slope; scalar by default, or one slope per channel."""

    def __init__(self, init=0.25, channels=None):
        if channels is None:
            self.slope = Tensor(np.asarray(init, dtype=np.float64), requires_grad=True)
        else:
            self.slope = Tensor(
                np.full((channels, 1, 1), init, dtype=np.float64), requires_grad=True
            )

    def params(self):
        return {"slope": self.slope}


def _check_gdn_channels(x, p):
    c = x.shape[-3]
    if c != p.channels:
        raise ShapeError(f"gdn channel mismatch: input has {c}, params have {p.channels}")


def _gdn_norm(x, p):
    gamma_k = T.reshape(p.gamma, (p.channels, p.channels, 1, 1))
    return T.sqrt(T.conv2d(T.square(x), gamma_k, bias=p.beta))


def gdn(x, p):
    """Divisive normalization: x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)."""
    _check_gdn_channels(x, p)
    return T.div(x, _gdn_norm(x, p))


def igdn(y, p):
    """Multiplicative counterpart used as a decoder layer.

    y_i * sqrt(beta_i + sum_j gamma_ij y_j^2) with its own learnable
    parameters; the literal functional inverse is ``igdn_exact``.
    """
    _check_gdn_channels(y, p)
    return T.mul(y, _gdn_norm(y, p))


def igdn_exact(y, p, max_iter=16, tol=1e-10):
    """Invert ``gdn`` by fixed-point iteration (test oracle, numpy only)."""
    yd = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    beta = p.beta.data.reshape(-1, 1, 1)
    gamma = p.gamma.data
    z = yd.copy()
    for _ in range(max_iter):
        mix = np.einsum("ij,...jhw->...ihw", gamma, z * z)
        z_next = yd * np.sqrt(beta + mix)
        resid = float(np.max(np.abs(z_next - z)))
        z = z_next
        if resid < tol:
            return z
    raise RuntimeError(
        f"igdn_exact did not converge in {max_iter} iterations (residual {resid:.3e})"
    )


def prelu(x, p):
    """x for x >= 0, slope * x otherwise."""
    slope = p.slope if isinstance(p, PreluParams) else slope_tensor(p)
    return T.sub(T.relu(x), T.mul(slope, T.relu(T.mul(x, -1.0))))


def slope_tensor(a):
    return a if isinstance(a, Tensor) else Tensor(a)


def linear(x, w, b=None):
    """x [N, in] with w [out, in] -> [N, out]."""
    out = T.matmul(x, T.transpose2d(w))
    if b is not None:
        out = T.add(out, b)
    return out


def global_avg_pool(x):
    """[N,C,H,W] (or [C,H,W]) -> per-channel means [N,C] (or [C])."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"global_avg_pool expects 3- or 4-d input, got {x.shape}")
    return T.tmean(x, axis=(-2, -1))


def reflection_pad2d(x, pad):
    return T.reflection_pad2d(x, pad)


def mse_loss(a, b):
    a, b = T.as_tensor(a), T.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse_loss shape mismatch: {a.shape} vs {b.shape}")
    return T.tmean(T.square(T.sub(a, b)))


def cross_entropy_loss(logits, labels):
    """Mean negative log-softmax at the true class (max-stabilized)."""
    logits = T.as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [N,K], got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(
            f"labels out of range [0, {k}): min={labels.min()}, max={labels.max()}"
        )
    shift = T.sub(logits, Tensor(logits.data.max(axis=1, keepdims=True)))
    lse = T.log(T.tsum(T.exp(shift), axis=1, keepdims=True))
    logp = T.sub(shift, lse)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    return -T.tmean(T.tsum(T.mul(logp, Tensor(onehot)), axis=1))


def accuracy(logits, labels):
    pred = np.argmax(logits.data if isinstance(logits, Tensor) else logits, axis=1)
    return float(np.mean(pred == np.asarray(labels)))
