"""Two-stage codec training and BER-grid evaluation.

Stage 1 trains the codec as a denoising autoencoder on split-point
features: soft-quantized latents pick up the channel's symbol corruption
as an additive delta and the decoder learns to undo it. Stage 2 freezes
the task model and optimizes the weighted sum of the distribution
regularizer, the task cross-entropy, and the attribution loss through the
straight-through offload path.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import layers as L
from . import quantizer as Q
from .attribution import attribute, attribute_integrated, xai_loss
from .bits import pack_fixed, unpack_fixed
from .channel import BscChannel
from .models import offload
from .optim import Adam, scheduled_lr
from .tasks import DivergenceError
from .tensor import Tensor


@dataclass
class LossWeights:
    """Eq-style weights; loss_weight_alpha is distinct from the slice ratio."""

    loss_weight_alpha: float = 2.0
    beta: float = 1.0
    gamma: float = 1.0
    lam: float = 0.5
    r: float = 1.0

    def __post_init__(self):
        for name in ("loss_weight_alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass
class TrainConfig:
    stage1_epochs: int = 10
    stage2_epochs: int = 30
    batch_size: int = 32
    lr_codec: float = 0.005
    lr_factor: float = 0.2
    lr_milestones: tuple = (0.5, 0.8)
    ber_mode: str = "uniform_range"  # or "fixed"
    ber: float = 0.0
    ber_range: tuple = (1e-4, 5e-2)
    per_sample_ber: bool = True
    seed: int = 0
    sigma_start: float = 1.0
    sigma_end: float = 300.0
    one_stage: bool = False
    fixed_gate: bool = False
    slice_ratio: float | None = None
    recovery_mode: str = "reflection"
    side_info: str = "true"
    attribution: str = "grad_x_input"  # or "integrated"

    def __post_init__(self):
        if self.stage1_epochs <= 0 or self.stage2_epochs <= 0:
            raise ValueError("epoch counts must be positive")
        if self.lr_codec <= 0:
            raise ValueError("lr_codec must be positive")


def derive_seed(*parts):
    """Stable 63-bit seed from heterogeneous parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def make_channel(cfg, stage, seed_extra=0):
    ber = tuple(cfg.ber_range) if cfg.ber_mode == "uniform_range" else cfg.ber
    return BscChannel(ber=ber, seed=derive_seed(cfg.seed, stage, seed_extra))


def split_features(task, images, batch_size=64):
    """Frozen device-side features for an image array."""
    chunks = []
    with T.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunks.append(task.forward_device(Tensor(images[start:start + batch_size])).data)
    return np.concatenate(chunks, axis=0)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _stage1_batch_loss(codec, feats, channel, ber):
    """MSE between split features and their post-channel reconstruction."""
    f = Tensor(feats)
    z = codec.encoder.encode(f)
    z_soft, _ = Q.soft_quantize(z, codec.quant)
    sent_idx = Q.hard_quantize(z, codec.quant)
    stream = pack_fixed(sent_idx.ravel(), codec.quant.bits_per_symbol)
    noisy, info = channel.transmit(stream, ber=ber)
    recv_idx = unpack_fixed(noisy).reshape(sent_idx.shape)
    delta = Q.dequantize(recv_idx, codec.quant) - Q.dequantize(sent_idx, codec.quant)
    z_noisy = z_soft + Tensor(delta)
    recon = codec.decoder.decode(z_noisy, info["ber"])
    return L.mse_loss(f, recon), info["ber"]


def stage1_denoise(codec, features, cfg, val_features=None):
    """Denoising-autoencoder pretraining; returns per-epoch metric rows."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "stage1-batches"))
    channel = make_channel(cfg, "stage1")
    codec.quant.init_centers_from(
        codec.encoder.encode(Tensor(features[: min(64, len(features))]))
    )
    opt = Adam(codec.params(), lr=cfg.lr_codec)
    history = []
    step = 0
    for epoch in range(cfg.stage1_epochs):
        codec.quant.sigma = Q.anneal_sigma(
            epoch, cfg.stage1_epochs, cfg.sigma_start, cfg.sigma_end
        )
        opt.lr = scheduled_lr(
            cfg.lr_codec, epoch, cfg.stage1_epochs, cfg.lr_factor, cfg.lr_milestones
        )
        epoch_loss = 0.0
        n_batches = 0
        ber_sum = 0.0
        for idx in _batches(features.shape[0], cfg.batch_size, rng):
            loss, ber_used = _stage1_batch_loss(codec, features[idx], channel, None)
            if not np.isfinite(loss.data):
                raise DivergenceError("stage1", cfg.seed, step, float(loss.data))
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            codec.project()
            epoch_loss += float(loss.data)
            ber_sum += ber_used
            n_batches += 1
            step += 1
        row = {
            "stage": 1,
            "epoch": epoch,
            "seed": cfg.seed,
            "ber": ber_sum / n_batches,
            "loss_total": epoch_loss / n_batches,
        }
        if val_features is not None:
            row["val_loss"] = stage1_eval_loss(codec, val_features, ber=0.0)
        history.append(row)
    return history


def stage1_eval_loss(codec, features, ber=0.0, batch_size=64):
    """Held-out reconstruction MSE at a fixed BER."""
    channel = BscChannel(ber=ber, seed=0)
    total = 0.0
    n = 0
    with T.no_grad():
        for start in range(0, features.shape[0], batch_size):
            feats = features[start:start + batch_size]
            loss, _ = _stage1_batch_loss(codec, feats, channel, ber)
            total += float(loss.data) * feats.shape[0]
            n += feats.shape[0]
    return total / n


def _offload_batch(codec, channel, feats, ber, cfg):
    """One transmission per batch, or one per sample when configured."""
    return offload(
        Tensor(feats), codec, channel, slice_ratio=cfg.slice_ratio, ber=ber,
        side_info=cfg.side_info, per_sample=cfg.per_sample_ber,
        recovery=cfg.recovery_mode,
    )


def _stage2_batch(codec, task, feats, labels, channel, ber, weights, cfg):
    recon, info = _offload_batch(codec, channel, feats, ber, cfg)
    _, assign = Q.soft_quantize(info["latent_tx"], codec.quant)
    p = Q.usage_distribution(assign)
    div = Q.div_loss(p)
    ce = L.cross_entropy_loss(task.forward_edge(recon), labels)
    parts = {
        "loss_div": float(div.data),
        "loss_cls": float(ce.data),
        "loss_xai": 0.0,
        "pos_fraction": None,
        "sent_idx": info["sent_idx"],
        "ber": info["ber_used"],
        "wire_bits": info["wire_bits_per_sample"],
    }
    total = weights.loss_weight_alpha * div + weights.beta * ce
    if weights.gamma > 0:
        attr_fn = attribute_integrated if cfg.attribution == "integrated" else attribute
        guide = lambda z: task.forward_edge(codec.decoder.decode(z, info["ber_gate"]))
        attr = attr_fn(info["received_latent"], guide, L.cross_entropy_loss, labels)
        lx = xai_loss(attr, lam=weights.lam, r=weights.r)
        total = total + weights.gamma * lx
        parts["loss_xai"] = float(lx.data)
        parts["pos_fraction"] = attr.pos_count / attr.m
    parts["loss_total"] = float(total.data)
    return total, parts


def stage2_semantic(codec, task, train_set, val_set, weights, cfg):
    """Task-oriented training of the codec against the frozen task model."""
    if not task.frozen:
        task.freeze()
    x_train, y_train = train_set
    feats_train = split_features(task, x_train)
    rng = np.random.default_rng(derive_seed(cfg.seed, "stage2-batches"))
    channel = make_channel(cfg, "stage2")
    if codec.quant.last_usage is None:
        codec.quant.init_centers_from(
            codec.encoder.encode(Tensor(feats_train[: min(64, len(feats_train))]))
        )
    codec.decoder.fixed_gate = cfg.fixed_gate
    codec.quant.sigma = cfg.sigma_end
    opt = Adam(codec.params(), lr=cfg.lr_codec)
    history = []
    step = 0
    for epoch in range(cfg.stage2_epochs):
        opt.lr = scheduled_lr(
            cfg.lr_codec, epoch, cfg.stage2_epochs, cfg.lr_factor, cfg.lr_milestones
        )
        sums = {"loss_total": 0.0, "loss_div": 0.0, "loss_cls": 0.0, "loss_xai": 0.0}
        hist = np.zeros(codec.quant.n, dtype=np.int64)
        pos_fracs = []
        ber_sum = 0.0
        n_batches = 0
        wire_bits = None
        for idx in _batches(feats_train.shape[0], cfg.batch_size, rng):
            ber = channel.draw_ber() if not cfg.per_sample_ber else None
            total, parts = _stage2_batch(
                codec, task, feats_train[idx], y_train[idx], channel, ber, weights, cfg
            )
            if not np.isfinite(total.data):
                raise DivergenceError("stage2", cfg.seed, step, float(total.data))
            opt.zero_grad()
            T.backward(total)
            opt.step()
            codec.project()
            for key in sums:
                sums[key] += parts[key]
            hist += np.bincount(parts["sent_idx"].ravel(), minlength=codec.quant.n)
            if parts["pos_fraction"] is not None:
                pos_fracs.append(parts["pos_fraction"])
            ber_sum += parts["ber"]
            wire_bits = parts["wire_bits"]
            n_batches += 1
            step += 1
        p_hard = hist / hist.sum()
        row = {
            "stage": 2,
            "epoch": epoch,
            "seed": cfg.seed,
            "ber": ber_sum / n_batches,
            "wire_bits": wire_bits,
            "entropy_bits": Q.usage_entropy_bits(p_hard),
            "pos_fraction": float(np.mean(pos_fracs)) if pos_fracs else None,
        }
        row.update({k: v / n_batches for k, v in sums.items()})
        history.append(row)
    return history


def evaluate(codec, task, images, labels, ber_grid, reps=6, seed=0,
             slice_ratio=None, side_info="true", batch_size=64,
             recovery="reflection"):
    """Top-1 accuracy per BER with independent channel draws per repetition."""
    feats = split_features(task, images)
    rows = []
    for ber in ber_grid:
        for rep in range(reps):
            channel = BscChannel(ber=ber, seed=derive_seed(seed, float(ber), rep))
            hits = 0
            wire_bits = None
            with T.no_grad():
                for start in range(0, feats.shape[0], batch_size):
                    recon, info = offload(
                        Tensor(feats[start:start + batch_size]), codec, channel,
                        slice_ratio=slice_ratio, side_info=side_info,
                        recovery=recovery,
                    )
                    logits = task.forward_edge(recon)
                    hits += int(
                        (np.argmax(logits.data, axis=1) == labels[start:start + batch_size]).sum()
                    )
                    wire_bits = info["wire_bits_per_sample"]
            rows.append({
                "stage": "eval",
                "ber": float(ber),
                "seed": rep,
                "accuracy": hits / feats.shape[0],
                "wire_bits": wire_bits,
            })
    return rows


def mean_accuracy(rows, ber):
    vals = [r["accuracy"] for r in rows if r.get("ber") == float(ber)]
    if not vals:
        raise ValueError(f"no evaluation rows at ber={ber}")
    return float(np.mean(vals))


def run_two_stage(codec, task, train_set, val_set, weights, cfg):
    """Stage 1 then stage 2; the one-stage ablation just skips stage 1."""
    history = []
    if cfg.one_stage:
        history += stage2_semantic(codec, task, train_set, val_set, weights, cfg)
        return history
    x_train, _ = train_set
    feats = split_features(task, x_train)
    history += stage1_denoise(codec, feats, cfg)
    history += stage2_semantic(codec, task, train_set, val_set, weights, cfg)
    return history
