"""Server-held encrypted database: main address map plus result cache.

The main map stores opaque entries (revocable ciphertext + tag) under
pseudorandom addresses; the cache keeps, per search token, the
retrievals already surfaced by earlier searches so re-encrypted history
never has to be replayed.  Search executes entirely on delegated key
material: the request carries a punctured revocable-encryption key, the
filter snapshot defining tag positions, and a range-constrained
placement token.  Nothing in this module touches client master keys --
it must stay importable by server code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from . import sre
from .crypto import TAG_LEN, TOKEN_LEN


class AddressCollision(RuntimeError):
    """Two updates mapped to one address (a 2^-128 event, or a bug)."""


class PlacementToken(Protocol):
    def addresses(self) -> Iterable[bytes]: ...


@dataclass(frozen=True)
class SearchRequest:
    """What the client hands the server for one keyword search."""

    tkn: bytes                   # cache slot, PRF(K_s, w)
    revoked_key: sre.RevokedKey
    sigma_token: "PlacementToken"

    def __post_init__(self):
        if len(self.tkn) != TOKEN_LEN:
            raise ValueError(f"tkn must be {TOKEN_LEN} bytes")


@dataclass
class SearchOutcome:
    results: list[bytes]            # NV + OV, in response order
    purged: list[bytes] = field(default_factory=list)  # addresses dropped


def encode_entry(ct: sre.SreCiphertext, tag: bytes) -> bytes:
    if len(tag) != TAG_LEN:
        raise ValueError(f"tag must be {TAG_LEN} bytes")
    return ct.encode() + tag


def decode_entry(payload: bytes) -> tuple[sre.SreCiphertext, bytes]:
    ct, pos = sre.decode_ciphertext(payload)
    if len(payload) - pos != TAG_LEN:
        raise ValueError("entry payload has trailing or missing tag bytes")
    return ct, bytes(payload[pos:])


class EncryptedDatabase:
    """In-memory store; the persistent variant wraps this with a log."""

    def __init__(self):
        self.main: dict[bytes, bytes] = {}
        self.cache: dict[bytes, list[bytes]] = {}

    def apply_update(self, address: bytes, payload: bytes) -> None:
        if address in self.main:
            raise AddressCollision(f"address reused: {address.hex()}")
        self.main[address] = payload

    def execute_search(self, request: SearchRequest) -> SearchOutcome:
        """Decrypt the epoch's list, purge revoked entries, fold the cache.

        New valid retrievals come first in placement order, then the
        cached ones; the merged result replaces the cache slot.
        """
        fresh: list[bytes] = []
        purged: list[bytes] = []
        store = sre.SubkeyStore(request.revoked_key.key)
        for address in request.sigma_token.addresses():
            payload = self.main.get(address)
            if payload is None:
                continue  # already purged by an earlier search
            ct, tag = decode_entry(payload)
            value = sre.dec(request.revoked_key, ct, tag, store)
            if value is None:
                del self.main[address]
                purged.append(address)
            else:
                fresh.append(value)
        seen = set(fresh)
        merged = fresh + [r for r in self.cache.get(request.tkn, [])
                          if r not in seen]
        self.cache[request.tkn] = merged
        return SearchOutcome(list(merged), purged)

    def cache_put(self, tkn: bytes, retrievals: list[bytes]) -> None:
        self.cache[tkn] = list(retrievals)

    def delete_address(self, address: bytes) -> None:
        self.main.pop(address, None)

    def put_address(self, address: bytes, payload: bytes) -> None:
        """Replay path: last write wins, no collision check."""
        self.main[address] = payload

    @property
    def size(self) -> int:
        return len(self.main)
