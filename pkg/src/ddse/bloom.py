"""Fixed-capacity Bloom filter with a keyed hash family.

Two roles in the scheme: the client's distinct-state (has this
keyword/value pair been inserted before?) and the revocation set carried
inside revocable-encryption keys.  Both need the same three operations
-- generate empty, set, probe -- plus a deterministic, serializable hash
family, because the filter crosses the wire and the server must map tags
to the same bit positions the client did.

Positions come from double hashing over a keyed 128-bit digest:
``g_i(x) = (h1(x) + i*h2(x)) mod b`` with ``h2`` forced odd and coprime
to ``b``, so every element probes ``h`` distinct positions.  Membership
is perfectly complete (an inserted element always probes true); only
false positives occur, at a rate fixed by the sizing formula.
"""

from __future__ import annotations

import hmac
import math

from .crypto import KEY_LEN

_SEED_LEN = KEY_LEN
HEADER_LEN = 8 + 1 + _SEED_LEN


def size_for(n: int, p: float) -> tuple[int, int]:
    """Bits and hash count for ``n`` insertions at false-positive rate ``p``.

    b = ceil(-n ln p / (ln 2)^2), h = ceil((b/n) ln 2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    b = math.ceil(-n * math.log(p) / (math.log(2) ** 2))
    h = math.ceil((b / n) * math.log(2))
    return b, h


class BloomFilter:
    """Mutable fixed-size filter; callers needing a snapshot use copy()."""

    __slots__ = ("b", "h", "seed", "bits", "inserted")

    def __init__(self, b: int, h: int, seed: bytes, bits: bytearray | None = None,
                 inserted: int = 0):
        if h < 1:
            raise ValueError("h must be >= 1")
        if b < h:
            raise ValueError("b must be >= h")
        if len(seed) != _SEED_LEN:
            raise ValueError(f"seed must be {_SEED_LEN} bytes")
        self.b = b
        self.h = h
        self.seed = seed
        nbytes = (b + 7) // 8
        if bits is None:
            bits = bytearray(nbytes)
        elif len(bits) != nbytes:
            raise ValueError("bit array length does not match b")
        self.bits = bits
        self.inserted = inserted  # upd() calls, for capacity warnings

    @classmethod
    def gen(cls, b: int, h: int, seed: bytes) -> "BloomFilter":
        return cls(b, h, seed)

    @classmethod
    def for_load(cls, n: int, p: float, seed: bytes) -> "BloomFilter":
        return cls(*size_for(n, p), seed)

    def positions(self, x: bytes) -> list[int]:
        d = hmac.digest(self.seed, x, "sha256")
        h1 = int.from_bytes(d[:8], "big")
        h2 = int.from_bytes(d[8:16], "big") | 1
        b = self.b
        # h2 must generate Z_b or the h positions degenerate into a short
        # cycle and this element's false-positive rate explodes; odd is
        # only sufficient when b is a power of two
        while math.gcd(h2, b) != 1:
            h2 += 2
        return [(h1 + i * h2) % b for i in range(self.h)]

    def upd(self, x: bytes) -> "BloomFilter":
        bits = self.bits
        for pos in self.positions(x):
            bits[pos >> 3] |= 0x80 >> (pos & 7)
        self.inserted += 1
        return self

    def check(self, x: bytes) -> bool:
        bits = self.bits
        for pos in self.positions(x):
            if not bits[pos >> 3] & (0x80 >> (pos & 7)):
                return False
        return True

    def set_bits(self) -> list[int]:
        """Indices of set bits, ascending."""
        out = []
        for byte_ix, byte in enumerate(self.bits):
            if byte:
                base = byte_ix << 3
                for j in range(8):
                    if byte & (0x80 >> j):
                        out.append(base + j)
        return out

    def popcount(self) -> int:
        return int.from_bytes(self.bits, "big").bit_count()

    def copy(self) -> "BloomFilter":
        return BloomFilter(self.b, self.h, self.seed, bytearray(self.bits),
                           self.inserted)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BloomFilter)
                and (self.b, self.h, self.seed) == (other.b, other.h, other.seed)
                and self.bits == other.bits)

    def encode(self) -> bytes:
        return (self.b.to_bytes(8, "big") + bytes([self.h]) + self.seed
                + bytes(self.bits))

    @property
    def encoded_size(self) -> int:
        return HEADER_LEN + len(self.bits)


def decode_filter(data: bytes, offset: int = 0) -> tuple[BloomFilter, int]:
    """Decode a BloomFilter at ``offset``; returns (filter, next offset)."""
    if len(data) - offset < HEADER_LEN:
        raise ValueError("truncated bloom filter header")
    b = int.from_bytes(data[offset:offset + 8], "big")
    h = data[offset + 8]
    seed = bytes(data[offset + 9:offset + 9 + _SEED_LEN])
    pos = offset + HEADER_LEN
    nbytes = (b + 7) // 8
    if len(data) - pos < nbytes:
        raise ValueError("truncated bloom filter bits")
    bits = bytearray(data[pos:pos + nbytes])
    return BloomFilter(b, h, seed, bits), pos + nbytes
