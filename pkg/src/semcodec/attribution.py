"""Saliency attribution of offloaded latents, the attribution loss, and
pixel-level slicing with receiver-side recovery.

Attribution is gradient-times-input against the frozen edge-side network;
the loss rewards large positive attribution mass spread over many latent
pixels. Slicing center-crops the latent before transmission and the
receiver rebuilds the full extent by reflection padding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

log = logging.getLogger(__name__)

XAI_LOSS_CAP = 1e4


@dataclass
class AttributionMap:
    """phi with its summary statistics.

    phi stays a graph tensor so the loss can backpropagate through the
    positive-attribution sum; pos_count is a plain integer by design.
    """

    phi: Tensor
    m: int
    pos_sum: Tensor
    pos_count: int

    def __post_init__(self):
        if self.m != self.phi.size:
            raise ValueError(f"m={self.m} does not match phi size {self.phi.size}")
        if not 0 <= self.pos_count <= self.m:
            raise ValueError(f"pos_count {self.pos_count} outside [0, {self.m}]")


def _loss_gradient(z_data, forward_fn, loss_fn, labels):
    probe = Tensor(np.array(z_data, copy=True), requires_grad=True)
    loss = loss_fn(forward_fn(probe), labels)
    (g,) = T.grads_wrt(loss, [probe])
    return g


def attribute(z_hat, forward_fn, loss_fn, labels):
    """Gradient-times-input attribution of the received latent.

    ``forward_fn`` maps the latent to task logits through the edge-side
    models. The loss gradient is evaluated on detached values, so phi is
    differentiable with respect to z_hat only through the product.
    """
    g = _loss_gradient(z_hat.data, forward_fn, loss_fn, labels)
    phi = Tensor(g) * z_hat
    pos_sum = T.tsum(T.relu(phi))
    pos_count = int(np.count_nonzero(phi.data > 0))
    return AttributionMap(phi=phi, m=phi.size, pos_sum=pos_sum, pos_count=pos_count)


def attribute_integrated(z_hat, forward_fn, loss_fn, labels, steps=16):
    """Integrated gradients from a zero baseline, as a config alternative."""
    acc = np.zeros_like(z_hat.data)
    for k in range(1, steps + 1):
        acc += _loss_gradient(z_hat.data * (k / steps), forward_fn, loss_fn, labels)
    phi = Tensor(acc / steps) * z_hat
    pos_sum = T.tsum(T.relu(phi))
    pos_count = int(np.count_nonzero(phi.data > 0))
    return AttributionMap(phi=phi, m=phi.size, pos_sum=pos_sum, pos_count=pos_count)


def xai_loss(attr, lam=0.5, r=1.0):
    """lam/pos_sum + (1-lam)*m/pos_count - r, capped on degenerate maps.

    Returns a graph scalar; only the pos_sum term carries gradient.
    """
    if attr.pos_count == 0 or attr.pos_sum.data <= 0:
        log.warning(
            "degenerate attribution (pos_sum=%g, pos_count=%d); loss capped at %g",
            float(attr.pos_sum.data), attr.pos_count, XAI_LOSS_CAP,
        )
        return Tensor(XAI_LOSS_CAP)
    return lam / attr.pos_sum + ((1.0 - lam) * attr.m / attr.pos_count - r)


def importance_stats(attr, per_channel=False):
    """Fraction of positive-attribution pixels, overall or per channel."""
    pos = attr.phi.data > 0
    if not per_channel:
        return float(pos.mean())
    if attr.phi.ndim < 3:
        raise ValueError(f"per-channel stats need a [.., C, H, W] map, got {attr.phi.shape}")
    flat = pos.reshape(-1, *attr.phi.shape[-3:])
    return flat.mean(axis=(0, 2, 3))


# -- pixel-level slicing ---------------------------------------------------


@dataclass
class SliceSpec:
    """Center-crop geometry for one spatial ratio."""

    ratio: float
    s_h: int
    s_w: int
    p_h: int
    p_w: int


def make_slice_spec(h, w, ratio):
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"slice ratio must be in (0, 1], got {ratio}")
    s_h = math.floor(math.sqrt(ratio) * h)
    s_w = math.floor(math.sqrt(ratio) * w)
    if s_h < 1 or s_w < 1:
        raise ValueError(f"ratio {ratio} gives a degenerate {s_h}x{s_w} crop of {h}x{w}")
    return SliceSpec(
        ratio=float(ratio),
        s_h=s_h,
        s_w=s_w,
        p_h=(h - s_h) // 2,
        p_w=(w - s_w) // 2,
    )


def slice_latent(z, ratio):
    """Center-crop the last two axes; every channel is cut identically."""
    h, w = z.shape[-2:]
    spec = make_slice_spec(h, w, ratio)
    crop = T.crop2d(z, (spec.p_h, spec.p_h + spec.s_h), (spec.p_w, spec.p_w + spec.s_w))
    return crop, spec


def _iterative_reflect(x, top, bottom, left, right):
    # reflection can only mirror extent-1 rows at a time, so grow in rounds
    while top or bottom or left or right:
        h, w = x.shape[-2:]
        t = min(top, h - 1)
        b = min(bottom, h - 1)
        lft = min(left, w - 1)
        rgt = min(right, w - 1)
        if max(t, b) == 0 and (top or bottom):
            raise ValueError(f"cannot reflect a height-{h} crop any further")
        if max(lft, rgt) == 0 and (left or right):
            raise ValueError(f"cannot reflect a width-{w} crop any further")
        x = T.reflection_pad2d(x, (t, b, lft, rgt))
        top, bottom, left, right = top - t, bottom - b, left - lft, right - rgt
    return x


def recover_latent(crop, spec, h, w, mode="reflection"):
    """Rebuild the full latent extent around a received center crop.

    The transmitted interior lands exactly at its original offsets; the
    border is synthesized by reflection (default) or zeros (ablation).
    """
    if spec.p_h + spec.s_h > h or spec.p_w + spec.s_w > w:
        raise ValueError(f"slice spec {spec} does not fit inside {h}x{w}")
    pads = (spec.p_h, h - spec.p_h - spec.s_h, spec.p_w, w - spec.p_w - spec.s_w)
    if mode == "reflection":
        return _iterative_reflect(crop, *pads)
    if mode == "zero":
        return T.zero_pad2d(crop, pads)
    raise ValueError(f"unknown recovery mode {mode!r}")
