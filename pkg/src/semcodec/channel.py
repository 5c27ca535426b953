"""Binary symmetric channel simulation over packed bit streams."""

from __future__ import annotations

import numpy as np

from .bits import BitStream


class BscChannel:
    """Memoryless binary symmetric channel with seedable flip sampling.

    ``ber`` may be a fixed probability, a (low, high) range sampled
    uniformly once per transmission, or the string ``"per_position"``
    combined with an explicit probability array.
    """

    def __init__(self, ber=0.0, seed=0):
        self.ber = ber
        self.rng = np.random.default_rng(seed)

    def draw_ber(self):
        """The flip probability in effect for one transmission."""
        if isinstance(self.ber, tuple):
            low, high = self.ber
            if not 0.0 <= low <= high <= 1.0:
                raise ValueError(f"invalid BER range ({low}, {high})")
            return float(self.rng.uniform(low, high))
        ber = float(self.ber)
        if not 0.0 <= ber <= 1.0:
            raise ValueError(f"BER must be in [0, 1], got {ber}")
        return ber

    def transmit(self, stream, ber=None):
        """Flip each payload bit independently; returns (stream, flip info).

        ``ber`` overrides the configured value for this call. Flip info is a
        dict with the realized probability, the flip count, and the flipped
        bit positions.
        """
        if ber is None:
            ber = self.draw_ber()
        bits01 = stream.bit_array()
        flips = self.rng.random(bits01.size) < ber
        noisy = bits01 ^ flips.astype(np.uint8)
        out = BitStream(
            bits=np.packbits(noisy) if noisy.size else np.zeros(0, np.uint8),
            bit_length=stream.bit_length,
            symbol_width=stream.symbol_width,
            symbol_count=stream.symbol_count,
        )
        info = {
            "ber": float(ber),
            "n_flips": int(flips.sum()),
            "positions": np.flatnonzero(flips),
        }
        return out, info

    def flip_mask(self, n_bits, ber=None):
        """Boolean flip mask for ``n_bits`` positions (no stream needed)."""
        if ber is None:
            ber = self.draw_ber()
        return self.rng.random(n_bits) < ber
