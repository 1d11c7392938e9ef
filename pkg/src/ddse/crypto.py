"""Shared symmetric primitives: PRFs, the GGM length-doubling PRG, AEAD.

Everything here is deterministic given its key material; randomness is
injected only through ``fresh_key``/``fresh_nonce`` so the protocol
layers stay testable.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets

KEY_LEN = 16  # lambda/8 for the default security parameter (128 bit)
TAG_LEN = 16
TOKEN_LEN = 32
NONCE_LEN = 12


def fresh_key(n: int = KEY_LEN) -> bytes:
    return secrets.token_bytes(n)


def fresh_nonce() -> bytes:
    return secrets.token_bytes(NONCE_LEN)


def prf(key: bytes, msg: bytes, out_len: int = TOKEN_LEN) -> bytes:
    """HMAC-SHA256, truncated.  out_len <= 32."""
    if not 0 < out_len <= 32:
        raise ValueError("prf output length must be in 1..32")
    return hmac.digest(key, msg, "sha256")[:out_len]


def keyed_hash(key: bytes, msg: bytes) -> bytes:
    """Full-width keyed hash (32 bytes)."""
    return hmac.digest(key, msg, "sha256")


def prg(seed: bytes) -> bytes:
    """Length-doubling PRG: 16-byte seed -> 32 bytes.

    Left child of a GGM node is the low half, right child the high half.
    """
    return hashlib.sha256(seed).digest()


def encode_parts(*parts: bytes) -> bytes:
    """Length-framed concatenation, so PRF inputs cannot collide across
    different (part, part) splits of the same byte string."""
    out = bytearray()
    for p in parts:
        out += len(p).to_bytes(4, "big")
        out += p
    return bytes(out)


def stream_xor(key: bytes, nonce: bytes, data: bytes) -> bytes:
    """XOR ``data`` with a SHA-256-derived keystream.

    Keystream block i = SHA256(key || nonce || i).  With a fresh nonce per
    call this is IND-CPA in the random-oracle model; callers that need
    integrity frame the plaintext (see ddse.sre).  Encrypt == decrypt.
    """
    n = len(data)
    if n == 0:
        return b""
    base = key + nonce
    ks = b"".join(
        hashlib.sha256(base + i.to_bytes(4, "big")).digest()
        for i in range((n + 31) // 32)
    )
    x = int.from_bytes(data, "big") ^ int.from_bytes(ks[:n], "big")
    return x.to_bytes(n, "big")
