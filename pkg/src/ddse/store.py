"""Crash-safe persistence for the encrypted database.

An append-only log under the store directory records every mutation
(PUT on update, DEL for purges, CACHE for cache-slot rewrites), each
wrapped as [4-byte length][body][4-byte CRC-32 of body].  Recovery
replays the snapshot, then the log, stopping at the first record whose
checksum or length does not hold -- a torn tail from a crash -- and
truncates the junk so the file appends cleanly again.  ``snapshot()``
rewrites the full state and resets the log; replay is last-write-wins,
so a crash between those two steps only replays records the snapshot
already contains.
"""

from __future__ import annotations

import logging
import os
import struct
import zlib
from pathlib import Path

from .edb import (AddressCollision, EncryptedDatabase, SearchOutcome,
                  SearchRequest)

logger = logging.getLogger(__name__)

REC_PUT = 1
REC_DEL = 2
REC_CACHE = 3

_SNAP_MAGIC = b"DDSESNAP"
_SNAP_VERSION = 1

_ADDRESS_LEN = 32
_TOKEN_LEN = 32


def _encode_record(body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + body + struct.pack(">I", zlib.crc32(body))


def _put_body(address: bytes, payload: bytes) -> bytes:
    return bytes([REC_PUT]) + address + struct.pack(">I", len(payload)) + payload


def _del_body(address: bytes) -> bytes:
    return bytes([REC_DEL]) + address


def _cache_body(tkn: bytes, retrievals: list[bytes]) -> bytes:
    out = bytearray([REC_CACHE])
    out += tkn
    out += struct.pack(">I", len(retrievals))
    for r in retrievals:
        out += struct.pack(">I", len(r))
        out += r
    return bytes(out)


def _apply_record(edb: EncryptedDatabase, body: bytes) -> None:
    rectype = body[0]
    if rectype == REC_PUT:
        if len(body) < 1 + _ADDRESS_LEN + 4:
            raise ValueError("short PUT record")
        address = body[1:1 + _ADDRESS_LEN]
        (plen,) = struct.unpack_from(">I", body, 1 + _ADDRESS_LEN)
        payload = body[1 + _ADDRESS_LEN + 4:]
        if len(payload) != plen:
            raise ValueError("PUT payload length mismatch")
        edb.put_address(bytes(address), bytes(payload))
    elif rectype == REC_DEL:
        if len(body) != 1 + _ADDRESS_LEN:
            raise ValueError("short DEL record")
        edb.delete_address(bytes(body[1:]))
    elif rectype == REC_CACHE:
        if len(body) < 1 + _TOKEN_LEN + 4:
            raise ValueError("short CACHE record")
        tkn = bytes(body[1:1 + _TOKEN_LEN])
        (count,) = struct.unpack_from(">I", body, 1 + _TOKEN_LEN)
        pos = 1 + _TOKEN_LEN + 4
        retrievals = []
        for _ in range(count):
            (rlen,) = struct.unpack_from(">I", body, pos)
            pos += 4
            retrievals.append(bytes(body[pos:pos + rlen]))
            if len(retrievals[-1]) != rlen:
                raise ValueError("short CACHE retrieval")
            pos += rlen
        edb.cache_put(tkn, retrievals)
    else:
        raise ValueError(f"unknown record type {rectype}")


class PersistentStore:
    """EncryptedDatabase with a write-ahead log and snapshots.

    Exposes the same transport interface (apply_update/execute_search)
    as the in-memory store; every mutation hits disk before returning.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.log_path = self.root / "log"
        self.snapshot_path = self.root / "snapshot"
        self.edb = EncryptedDatabase()
        self._recover()
        self._log = open(self.log_path, "ab")

    # -- recovery ---------------------------------------------------------

    def _recover(self) -> None:
        if self.snapshot_path.exists():
            raw = self.snapshot_path.read_bytes()
            if raw[:8] != _SNAP_MAGIC or len(raw) < 9 or raw[8] != _SNAP_VERSION:
                raise ValueError(f"bad snapshot header in {self.snapshot_path}")
            self._replay(raw[9:], strict=True, source="snapshot")
        if self.log_path.exists():
            raw = self.log_path.read_bytes()
            valid = self._replay(raw, strict=False, source="log")
            if valid < len(raw):
                logger.warning("truncating %d torn bytes from %s",
                               len(raw) - valid, self.log_path)
                with open(self.log_path, "r+b") as fh:
                    fh.truncate(valid)

    def _replay(self, raw: bytes, strict: bool, source: str) -> int:
        pos = 0
        while pos < len(raw):
            if len(raw) - pos < 4:
                break
            (blen,) = struct.unpack_from(">I", raw, pos)
            if len(raw) - pos < 4 + blen + 4:
                break
            body = raw[pos + 4:pos + 4 + blen]
            (crc,) = struct.unpack_from(">I", raw, pos + 4 + blen)
            if zlib.crc32(body) != crc:
                break
            try:
                _apply_record(self.edb, body)
            except ValueError:
                break
            pos += 4 + blen + 4
        if strict and pos != len(raw):
            raise ValueError(f"corrupt {source}: valid up to byte {pos}")
        return pos

    # -- durability -------------------------------------------------------

    def _append(self, *bodies: bytes) -> None:
        for body in bodies:
            self._log.write(_encode_record(body))
        self._log.flush()
        os.fsync(self._log.fileno())

    def snapshot(self) -> None:
        """Fold the log into a fresh snapshot and reset it."""
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_SNAP_MAGIC + bytes([_SNAP_VERSION]))
            for address, payload in self.edb.main.items():
                fh.write(_encode_record(_put_body(address, payload)))
            for tkn, retrievals in self.edb.cache.items():
                fh.write(_encode_record(_cache_body(tkn, retrievals)))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.snapshot_path)
        self._log.truncate(0)
        self._log.flush()
        os.fsync(self._log.fileno())

    def close(self) -> None:
        self._log.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- transport interface ----------------------------------------------

    def apply_update(self, address: bytes, payload: bytes) -> None:
        if address in self.edb.main:
            raise AddressCollision(f"address reused: {address.hex()}")
        self._append(_put_body(address, payload))
        self.edb.apply_update(address, payload)

    def execute_search(self, request: SearchRequest) -> SearchOutcome:
        outcome = self.edb.execute_search(request)
        bodies = [_del_body(a) for a in outcome.purged]
        bodies.append(_cache_body(request.tkn, outcome.results))
        self._append(*bodies)
        return outcome
