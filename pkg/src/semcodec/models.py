"""Codec models: SQ-based encoder, BER-aware attention decoder, offload path.

The encoder is deliberately tiny (one conv plus GDN and PReLU); the decoder
stacks several transpose-conv blocks, each gated by a small perceptron that
sees the pooled block features together with the channel state. The
encoder/decoder parameter ratio is reported per run rather than enforced.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from . import layers as L
from . import quantizer as Q
from .bits import pack_fixed, unpack_fixed
from .attribution import slice_latent, recover_latent
from .tensor import Tensor


def _he_conv(rng, shape):
    fan_in = shape[1] * shape[2] * shape[3]
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


def _he_linear(rng, out_dim, in_dim):
    w = Tensor(rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(out_dim, in_dim)), requires_grad=True)
    b = Tensor(np.zeros(out_dim), requires_grad=True)
    return w, b


class EncoderModel:
    """Device-side feature encoder: conv -> GDN -> PReLU.

    Exactly one convolutional layer; everything else is normalization.
    """

    def __init__(self, in_channels, code_channels, kernel=3, stride=2, padding=1, seed=0):
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.code_channels = code_channels
        self.stride = stride
        self.padding = padding
        self.conv_w = _he_conv(rng, (code_channels, in_channels, kernel, kernel))
        self.conv_b = Tensor(np.zeros(code_channels), requires_grad=True)
        self.gdn = L.GdnParams(code_channels)
        self.prelu = L.PreluParams(init=0.25, channels=code_channels)

    def encode(self, features):
        if features.shape[-3] != self.in_channels:
            raise T.ShapeError(
                f"encoder expects {self.in_channels} channels, got shape {features.shape}"
            )
        h = T.conv2d(features, self.conv_w, self.conv_b, stride=self.stride, padding=self.padding)
        h = L.gdn(h, self.gdn)
        return L.prelu(h, self.prelu)

    def params(self):
        out = {"enc.conv_w": self.conv_w, "enc.conv_b": self.conv_b}
        out.update({f"enc.gdn.{k}": v for k, v in self.gdn.params().items()})
        out.update({f"enc.prelu.{k}": v for k, v in self.prelu.params().items()})
        return out

    def project(self):
        self.gdn.project()


class AttentionGate:
    """Two-layer perceptron mapping pooled features and the BER to channel gates.

    The BER enters twice, raw and log10-scaled, since the operating range
    spans close to three decades. ``use_log_ber=False`` drops the second
    input for ablations.
    """

    def __init__(self, channels, hidden=8, seed=0, use_log_ber=True):
        rng = np.random.default_rng(seed)
        self.channels = channels
        self.use_log_ber = use_log_ber
        in_dim = channels + (2 if use_log_ber else 1)
        self.w1, self.b1 = _he_linear(rng, hidden, in_dim)
        self.w2, self.b2 = _he_linear(rng, channels, hidden)

    def gates(self, x, ber):
        """Per-channel gate in (0,1); x is [N,C,H,W], ber a scalar or [N] vector."""
        pooled = L.global_avg_pool(x)  # [N, C]
        n = pooled.shape[0]
        b = np.broadcast_to(np.asarray(ber, dtype=float), (n,))
        cols = [b]
        if self.use_log_ber:
            # offset at the bottom of the operating range keeps ber=0 in
            # the envelope the gates were trained on
            cols.append(np.log10(b + 1e-4))
        side = Tensor(np.stack(cols, axis=1))
        h = T.relu(L.linear(T.concat([pooled, side], axis=1), self.w1, self.b1))
        g = T.sigmoid(L.linear(h, self.w2, self.b2))
        return T.reshape(g, n, self.channels, 1, 1)

    def params(self, prefix):
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
        }


class DecoderBlock:
    """transpose conv -> IGDN -> PReLU -> attention gate."""

    def __init__(self, c_in, c_out, kernel, stride, padding, seed, gate_hidden, use_log_ber):
        rng = np.random.default_rng(seed)
        # transpose kernel layout is [c_in, c_out, kh, kw]
        fan = c_in * kernel * kernel
        self.tconv_w = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / fan), size=(c_in, c_out, kernel, kernel)),
            requires_grad=True,
        )
        self.tconv_b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding
        self.igdn = L.GdnParams(c_out)
        self.prelu = L.PreluParams(init=0.25, channels=c_out)
        self.gate = AttentionGate(c_out, hidden=gate_hidden, seed=seed + 1, use_log_ber=use_log_ber)

    def forward(self, x, ber, fixed_gate=False):
        h = T.transpose_conv2d(x, self.tconv_w, self.tconv_b, stride=self.stride, padding=self.padding)
        h = L.igdn(h, self.igdn)
        h = L.prelu(h, self.prelu)
        if fixed_gate:
            return h
        return h * self.gate.gates(h, ber)

    def params(self, prefix):
        out = {f"{prefix}.tconv_w": self.tconv_w, f"{prefix}.tconv_b": self.tconv_b}
        out.update({f"{prefix}.igdn.{k}": v for k, v in self.igdn.params().items()})
        out.update({f"{prefix}.prelu.{k}": v for k, v in self.prelu.params().items()})
        out.update(self.gate.params(f"{prefix}.gate"))
        return out


def _geometric_widths(c_in, c_out, n):
    """n+1 channel counts from c_in to c_out, geometric, rounded."""
    ratio = (c_out / c_in) ** (1.0 / n)
    widths = [c_in]
    for i in range(1, n):
        widths.append(max(1, round(c_in * ratio**i)))
    widths.append(c_out)
    return widths


class DecoderModel:
    """Edge-side decoder: N gated transpose-conv blocks plus a linear head.

    Output shape always equals the split-point feature shape; the first
    block carries the stride-2 upsampling.
    """

    def __init__(self, code_channels, out_channels, out_hw, code_hw, n_blocks=3,
                 gate_hidden=8, seed=0, use_log_ber=True):
        if n_blocks < 1:
            raise ValueError(f"decoder needs n_blocks >= 1, got {n_blocks}")
        self.code_channels = code_channels
        self.out_channels = out_channels
        self.out_hw = tuple(out_hw)
        self.code_hw = tuple(code_hw)
        self.fixed_gate = False
        widths = _geometric_widths(code_channels, out_channels, n_blocks)
        if out_hw[0] == 2 * code_hw[0] and out_hw[1] == 2 * code_hw[1]:
            strides = [2] + [1] * (n_blocks - 1)
        elif tuple(out_hw) == tuple(code_hw):
            strides = [1] * n_blocks
        else:
            raise ValueError(
                f"unsupported spatial map {tuple(code_hw)} -> {tuple(out_hw)}; "
                "expected equal or exactly doubled extents"
            )
        self.blocks = []
        for i in range(n_blocks):
            kernel = 4 if strides[i] == 2 else 3
            self.blocks.append(
                DecoderBlock(widths[i], widths[i + 1], kernel, strides[i], 1,
                             seed + 10 * i, gate_hidden, use_log_ber)
            )
        rng = np.random.default_rng(seed + 999)
        self.head_w = _he_conv(rng, (out_channels, widths[-1], 1, 1))
        self.head_b = Tensor(np.zeros(out_channels), requires_grad=True)

    def decode(self, z_hat, ber):
        b = np.asarray(ber, dtype=float)
        if b.ndim > 1 or (b.ndim == 1 and b.shape[0] != z_hat.shape[0]):
            raise ValueError(f"ber must be a scalar or one value per sample, got shape {b.shape}")
        if np.any(b < 0.0) or np.any(b > 1.0):
            raise ValueError(f"ber must be in [0, 1], got {ber}")
        h = z_hat
        for block in self.blocks:
            h = block.forward(h, ber, fixed_gate=self.fixed_gate)
        out = T.conv2d(h, self.head_w, self.head_b, stride=1, padding=0)
        if out.shape[-2:] != self.out_hw or out.shape[-3] != self.out_channels:
            raise T.ShapeError(f"decoder produced {out.shape}, wanted (*, {self.out_channels}, {self.out_hw})")
        return out

    def params(self):
        out = {}
        for i, block in enumerate(self.blocks):
            out.update(block.params(f"dec.block{i}"))
        out["dec.head_w"] = self.head_w
        out["dec.head_b"] = self.head_b
        return out

    def project(self):
        for block in self.blocks:
            block.igdn.project()


def param_count(params):
    return int(sum(t.data.size for t in params.values()))


class Codec:
    """Encoder + quantizer + decoder with consistent shapes."""

    def __init__(self, feature_shape, code_channels=4, n_centers=8, n_blocks=3,
                 gate_hidden=8, seed=0, use_log_ber=True):
        c, h, w = feature_shape
        self.feature_shape = (c, h, w)
        self.encoder = EncoderModel(c, code_channels, seed=seed)
        ch = T.conv_out_extent(h, 3, self.encoder.stride, self.encoder.padding)
        cw = T.conv_out_extent(w, 3, self.encoder.stride, self.encoder.padding)
        self.code_shape = (code_channels, ch, cw)
        self.quant = Q.QuantizerState(n=n_centers)
        self.decoder = DecoderModel(code_channels, c, (h, w), (ch, cw),
                                    n_blocks=n_blocks, gate_hidden=gate_hidden,
                                    seed=seed + 1, use_log_ber=use_log_ber)

    def params(self):
        out = {}
        out.update(self.encoder.params())
        out.update(self.decoder.params())
        out["quant.centers"] = self.quant.centers
        return out

    def project(self):
        self.encoder.project()
        self.decoder.project()

    def asymmetry_ratio(self):
        enc = param_count(self.encoder.params())
        dec = param_count(self.decoder.params())
        return dec / enc


def estimate_ber_pilot(channel, ber, pilot_len=2048):
    """Receiver-side BER estimate from a known all-zero pilot sequence."""
    if pilot_len < 1:
        raise ValueError("pilot_len must be positive")
    flips = channel.flip_mask(pilot_len, ber=ber)
    return float(flips.mean())


def offload(features, codec, channel, slice_ratio=None, ber=None,
            side_info="true", pilot_len=2048, per_sample=False,
            recovery="reflection"):
    """Full offload path; returns (reconstructed, info dict).

    encode -> quantize (straight-through) -> pack -> channel -> unpack ->
    dequantize -> optional pixel recovery -> decode. The forward values
    equal the hard transmission path exactly; gradients flow through the
    soft-quantization surrogate and treat the channel as identity.
    ``info`` carries wire_bits, ber_used, symbol counts, the realized flip
    count, and the slice spec when slicing is active.

    With ``per_sample=True`` each sample gets its own packed stream and
    channel use (so a range-valued channel draws a fresh BER per sample);
    encode and decode stay batched.
    """
    z = codec.encoder.encode(features)
    spec = None
    if slice_ratio is not None and slice_ratio < 1.0:
        z_tx, spec = slice_latent(z, slice_ratio)
    else:
        z_tx = z
    st = Q.straight_through(z_tx, codec.quant)
    sent_idx = Q.hard_quantize(z_tx, codec.quant)
    width = codec.quant.bits_per_symbol
    n_samples = features.shape[0] if features.ndim == 4 else 1
    if per_sample and features.ndim == 4:
        recv_idx = np.empty_like(sent_idx)
        bers = np.empty(n_samples)
        wire_bits = symbols = n_flips = 0
        for i in range(n_samples):
            stream = pack_fixed(sent_idx[i].ravel(), width)
            noisy, flip_info = channel.transmit(stream, ber=ber)
            recv_idx[i] = unpack_fixed(noisy).reshape(sent_idx.shape[1:])
            bers[i] = flip_info["ber"]
            wire_bits += stream.bit_length
            symbols += stream.symbol_count
            n_flips += flip_info["n_flips"]
        ber_used = bers
    else:
        stream = pack_fixed(sent_idx.ravel(), width)
        noisy, flip_info = channel.transmit(stream, ber=ber)
        recv_idx = unpack_fixed(noisy).reshape(sent_idx.shape)
        wire_bits = stream.bit_length
        symbols = stream.symbol_count
        n_flips = flip_info["n_flips"]
        ber_used = flip_info["ber"]
    recv_vals = Q.dequantize(recv_idx, codec.quant)
    # additive channel delta keeps forward exact and backward identity
    delta = Tensor(recv_vals - st.data)
    z_recv = st + delta
    if side_info == "pilot":
        if np.ndim(ber_used) == 1:
            ber_gate = np.array([estimate_ber_pilot(channel, b, pilot_len) for b in ber_used])
        else:
            ber_gate = estimate_ber_pilot(channel, ber_used, pilot_len)
    elif side_info == "true":
        ber_gate = ber_used
    else:
        raise ValueError(f"unknown side_info mode {side_info!r}")
    if spec is not None:
        z_recv = recover_latent(z_recv, spec, *codec.code_shape[1:], mode=recovery)
    recon = codec.decoder.decode(z_recv, ber_gate)
    info = {
        "wire_bits": wire_bits,
        "wire_bits_per_sample": wire_bits // n_samples,
        "symbols": symbols,
        "ber_used": float(np.mean(ber_used)),
        "ber_gate": ber_gate,
        "n_flips": n_flips,
        "slice_spec": spec,
        "latent": z,
        "latent_tx": z_tx,
        "received_latent": z_recv,
        "sent_idx": sent_idx,
    }
    return recon, info


def compression_ratio(latent_bits_per_value=64, symbol_bits=3):
    """Wire compression versus keeping the latent in 64-bit floats."""
    return latent_bits_per_value / symbol_bits
