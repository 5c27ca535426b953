"""Binary symmetric channel: exact edge cases and flip statistics."""

import numpy as np
import pytest
from scipy import stats

from semcodec import bits as B
from semcodec.channel import BscChannel


def _stream(n_symbols=100, seed=0):
    idx = np.random.default_rng(seed).integers(0, 8, size=n_symbols)
    return idx, B.pack_fixed(idx, 3)


def test_ber_zero_is_identity():
    idx, s = _stream()
    out, info = BscChannel(ber=0.0, seed=1).transmit(s)
    assert np.array_equal(out.bit_array(), s.bit_array())
    assert info["n_flips"] == 0 and info["ber"] == 0.0


def test_ber_one_is_complement():
    idx, s = _stream()
    out, info = BscChannel(ber=1.0, seed=1).transmit(s)
    assert np.array_equal(out.bit_array(), 1 - s.bit_array())
    assert info["n_flips"] == s.bit_length


def test_length_preserved_and_deterministic():
    _, s = _stream(500)
    a, _ = BscChannel(ber=0.01, seed=42).transmit(s)
    b, _ = BscChannel(ber=0.01, seed=42).transmit(s)
    assert a.bit_length == s.bit_length
    assert np.array_equal(a.bits, b.bits)
    c, _ = BscChannel(ber=0.01, seed=43).transmit(s)
    assert not np.array_equal(a.bits, c.bits)


def test_flip_counts_match_binomial():
    """200 seeded trials at ber 0.5 on 10k bits behave binomially."""
    n, p, trials = 10_000, 0.5, 200
    _, s = _stream(n_symbols=n // 3 + 1)
    s = B.pack_fixed(np.zeros(n, dtype=int), 1)
    counts = []
    for seed in range(trials):
        _, info = BscChannel(ber=p, seed=seed).transmit(s)
        counts.append(info["n_flips"])
    counts = np.asarray(counts)
    assert abs(counts.mean() / n - p) < 0.02

    # chi-square against Binomial(10000, 0.5) with tail binning
    edges = stats.binom.ppf([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0], n, p)
    edges[0], edges[-1] = -0.5, n + 0.5
    observed, _ = np.histogram(counts, bins=edges)
    cdf = stats.binom.cdf(edges[1:], n, p) - stats.binom.cdf(edges[:-1], n, p)
    expected = trials * cdf / cdf.sum()
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    crit = stats.chi2.ppf(0.99, df=len(observed) - 1)
    assert chi2 < crit


def test_degenerate_range_is_constant():
    ch = BscChannel(ber=(0.025, 0.025), seed=0)
    assert all(ch.draw_ber() == 0.025 for _ in range(50))


def test_uniform_range_mean():
    ch = BscChannel(ber=(1e-4, 5e-2), seed=0)
    draws = np.array([ch.draw_ber() for _ in range(10_000)])
    assert abs(draws.mean() - 0.02505) < 0.001
    assert draws.min() >= 1e-4 and draws.max() <= 5e-2


def test_invalid_ber_rejected():
    with pytest.raises(ValueError):
        BscChannel(ber=1.5).draw_ber()
    with pytest.raises(ValueError):
        BscChannel(ber=-0.1).draw_ber()
    with pytest.raises(ValueError):
        BscChannel(ber=(0.5, 0.1)).draw_ber()


def test_transmit_ber_override():
    _, s = _stream(200)
    out, info = BscChannel(ber=0.5, seed=9).transmit(s, ber=0.0)
    assert info["ber"] == 0.0
    assert np.array_equal(out.bit_array(), s.bit_array())


def test_flip_positions_reported():
    _, s = _stream(300)
    out, info = BscChannel(ber=0.02, seed=3).transmit(s)
    diff = np.flatnonzero(out.bit_array() != s.bit_array())
    assert np.array_equal(diff, info["positions"])


def test_two_transmits_compose_like_effective_ber():
    # flip-then-flip at b1, b2 acts like one pass at b1+b2-2*b1*b2
    b1, b2 = 0.1, 0.2
    s = B.pack_fixed(np.zeros(200_000, dtype=int), 1)
    ch = BscChannel(seed=17)
    mid, _ = ch.transmit(s, ber=b1)
    out, _ = ch.transmit(mid, ber=b2)
    frac = float(np.mean(out.bit_array() != s.bit_array()))
    eff = b1 + b2 - 2 * b1 * b2
    assert abs(frac - eff) < 0.005
