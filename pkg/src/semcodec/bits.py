"""Bit-level coding: fixed-length symbol packing and a Huffman codec.

Fixed-length streams are the transmission format (each flipped bit hits
exactly one symbol). The Huffman codec with skip-and-resync decoding exists
to demonstrate how variable-length codes lose whole stretches of symbols to
a single flip.

Bit order is big-endian within each symbol; symbols are concatenated in
order and packed MSB-first into bytes.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field

import numpy as np

DUMP_MAGIC = b"SEMCBITS"


@dataclass
class BitStream:
    """Packed bit sequence plus symbol metadata.

    ``symbol_width`` is the per-symbol bit width for fixed-length streams
    and ``None`` for Huffman streams.
    """

    bits: np.ndarray  # packed bytes, uint8
    bit_length: int
    symbol_width: int | None
    symbol_count: int

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bit_length > 8 * self.bits.size:
            raise ValueError(
                f"bit_length {self.bit_length} exceeds storage capacity {8 * self.bits.size}"
            )
        if self.symbol_width is not None:
            if self.bit_length != self.symbol_count * self.symbol_width:
                raise ValueError(
                    f"fixed-length stream inconsistent: {self.symbol_count} symbols x "
                    f"{self.symbol_width} bits != {self.bit_length} bits"
                )

    def bit_array(self):
        """Unpacked 0/1 view of the payload bits."""
        return np.unpackbits(self.bits)[: self.bit_length]

    @classmethod
    def from_bit_array(cls, bits01, symbol_width, symbol_count):
        bits01 = np.asarray(bits01, dtype=np.uint8)
        return cls(
            bits=np.packbits(bits01),
            bit_length=bits01.size,
            symbol_width=symbol_width,
            symbol_count=symbol_count,
        )


def pack_fixed(indices, width):
    """Pack symbol indices at ``width`` bits each, big-endian per symbol."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if width < 1 or width > 16:
        raise ValueError(f"symbol width must be in 1..16, got {width}")
    if idx.size and (idx.min() < 0 or idx.max() >= (1 << width)):
        bad = idx[(idx < 0) | (idx >= (1 << width))][0]
        raise ValueError(f"symbol {bad} does not fit in {width} bits")
    shifts = np.arange(width - 1, -1, -1)
    bits01 = ((idx[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return BitStream.from_bit_array(bits01, width, idx.size)


def unpack_fixed(stream):
    """Exact inverse of pack_fixed on a fixed-length stream."""
    if stream.symbol_width is None:
        raise ValueError("stream has no fixed symbol width")
    width = stream.symbol_width
    if stream.bit_length % width != 0:
        raise ValueError(
            f"bit length {stream.bit_length} not divisible by width {width}"
        )
    bits01 = stream.bit_array().reshape(-1, width).astype(np.int64)
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits01 @ weights


# -- Huffman ---------------------------------------------------------------


@dataclass
class HuffmanTable:
    """Prefix-free symbol -> codeword map with its decode trie.

    Codewords are (value, length) pairs; the trie is a flat array where
    node k has children at trie[k][bit] (>= 0 internal node index,
    negative value ~sym for leaves).
    """

    codes: dict = field(default_factory=dict)  # sym -> (code int, length)
    trie: list = field(default_factory=list)

    def kraft_sum(self):
        return sum(2.0 ** -length for _, length in self.codes.values())

    def avg_length(self, probs):
        return sum(probs[s] * self.codes[s][1] for s in self.codes)


def huffman_build(freqs):
    """Optimal prefix code with deterministic tie-breaking by symbol index."""
    freqs = np.asarray(freqs, dtype=np.float64)
    active = [(freqs[s], s, ("leaf", s)) for s in range(freqs.size) if freqs[s] > 0]
    if len(active) < 2:
        raise ValueError(
            f"huffman_build needs >= 2 nonzero counts, got {len(active)}"
        )
    heapq.heapify(active)
    order = freqs.size  # merged nodes rank after all leaves, in creation order
    while len(active) > 1:
        fa, _, a = heapq.heappop(active)
        fb, _, b = heapq.heappop(active)
        heapq.heappush(active, (fa + fb, order, ("node", a, b)))
        order += 1
    root = active[0][2]

    table = HuffmanTable()

    def assign(node, code, length):
        if node[0] == "leaf":
            table.codes[node[1]] = (code, max(length, 1))
            return
        assign(node[1], code << 1, length + 1)
        assign(node[2], (code << 1) | 1, length + 1)

    assign(root, 0, 0)
    table.trie = _build_trie(table.codes)
    return table


def _build_trie(codes):
    trie = [[-(1 << 30), -(1 << 30)]]  # child slots; sentinel = invalid
    for sym, (code, length) in codes.items():
        node = 0
        for i in range(length - 1, -1, -1):
            bit = (code >> i) & 1
            if i == 0:
                trie[node][bit] = ~sym
            else:
                child = trie[node][bit]
                if child < 0:
                    trie.append([-(1 << 30), -(1 << 30)])
                    child = len(trie) - 1
                    trie[node][bit] = child
                node = child
    return trie


def huffman_encode(symbols, table):
    out = []
    for s in np.asarray(symbols).ravel():
        code, length = table.codes[int(s)]
        out.extend((code >> i) & 1 for i in range(length - 1, -1, -1))
    bits01 = np.array(out, dtype=np.uint8)
    return BitStream(
        bits=np.packbits(bits01) if bits01.size else np.zeros(0, np.uint8),
        bit_length=bits01.size,
        symbol_width=None,
        symbol_count=len(np.asarray(symbols).ravel()),
    )


_INVALID = -(1 << 30)


def huffman_decode_resync(stream, table, expected_count):
    """Best-effort Huffman decode with skip-and-resync realignment.

    Walks the trie bit by bit. On an invalid trie state or on running out
    of bits mid-codeword, the decoder advances one bit past the position
    where the current codeword started and restarts from the root. Decoding
    stops after ``expected_count`` symbols or when the bits are exhausted.

    Returns ``(symbols, recovered_mask)``: ``symbols`` has length
    ``expected_count`` (unfilled positions are 0) and ``recovered_mask``
    marks the positions that received a decoded symbol. The mask reflects
    positional decode success only; a marked symbol may still differ from
    what was sent once a bit flip has desynchronized the codeword grid.
    """
    bits01 = stream.bit_array()
    trie = table.trie
    symbols = np.zeros(expected_count, dtype=np.int64)
    mask = np.zeros(expected_count, dtype=bool)
    out = 0
    pos = 0
    n_bits = bits01.size
    while out < expected_count and pos < n_bits:
        node = 0
        cursor = pos
        sym = None
        while cursor < n_bits:
            nxt = trie[node][bits01[cursor]]
            cursor += 1
            if nxt == _INVALID:
                break
            if nxt < 0:
                sym = ~nxt
                break
            node = nxt
        if sym is None:
            # invalid state or premature end: skip one bit and realign
            pos += 1
            continue
        symbols[out] = sym
        mask[out] = True
        out += 1
        pos = cursor
    return symbols, mask


def symbol_match_rate(sent, decoded, mask):
    """Fraction of positions decoded to exactly the transmitted symbol.

    Same-index comparison with no realignment credit; this is the recovery
    rate reported by the coding experiments.
    """
    sent = np.asarray(sent).ravel()
    if sent.size != decoded.size:
        raise ValueError("sent and decoded lengths differ")
    return float(np.mean(mask & (decoded == sent)))


def source_entropy_bits(probs):
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


# -- file dump (used by the CLI channel demo) ------------------------------


def write_bitstream(path, stream):
    """Dump format: 8-byte magic, u16 symbol width, u64 count, packed bits."""
    if stream.symbol_width is None:
        raise ValueError("only fixed-length streams can be dumped")
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(struct.pack("<HQ", stream.symbol_width, stream.symbol_count))
        f.write(stream.bits.tobytes())


def read_bitstream(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != DUMP_MAGIC:
            raise ValueError(f"bad bitstream magic: {magic!r}")
        width, count = struct.unpack("<HQ", f.read(10))
        payload = np.frombuffer(f.read(), dtype=np.uint8)
    bit_length = width * count
    expected_bytes = (bit_length + 7) // 8
    if payload.size < expected_bytes:
        raise ValueError(
            f"truncated bitstream: need {expected_bytes} bytes, have {payload.size}"
        )
    return BitStream(
        bits=payload[:expected_bytes].copy(),
        bit_length=bit_length,
        symbol_width=int(width),
        symbol_count=int(count),
    )
