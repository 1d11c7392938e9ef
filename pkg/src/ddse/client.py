"""Distinct-search client: update and search protocols.

The client keeps three master keys (cache tokens, tags, value
encryption), a large distinct-state Bloom filter, and per-keyword
revocable-encryption state.  The moving parts fit together like this:

* Every (keyword, value) pair owns a *real* tag ``F(K_t, w||v||0)``.
  The first add of a pair uploads a ciphertext under the real tag and
  marks the pair in the distinct-state filter.  Any further add of the
  same pair is a *duplicate*: it uploads a same-shaped ciphertext under
  a one-time dummy tag ``F(K_t, w||v||cnt)`` and immediately revokes
  that tag, so the server stores an indistinguishable entry that can
  never decrypt.  Deletes upload nothing and revoke the real tag.
  The server-visible update stream is therefore independent of how
  often a value repeats -- the volume-hiding property.

* Uploads are placed through the forward-private layer under an
  epoch label ``KeyedHash(w || epoch)``.  A search sends the punctured
  key for the current epoch plus the placement token; the server
  decrypts the epoch's list, throws away (and purges) everything
  revoked, folds in the cached results of earlier epochs, and returns
  one retrieval per distinct live value.  The client then rotates the
  epoch: fresh revocable key, empty revocation filter, next label.

Deletion visibility rule: a delete takes effect through revocation of
the current epoch's ciphertext.  Once a value's retrieval has entered
the server cache (i.e. the pair was searched after its add), a later
delete cannot claw it back out; deletes are only reliable for pairs
whose first add has not yet been consumed by a search.  Re-adding a
deleted pair is likewise unsupported: the distinct-state filter still
remembers the pair, so the re-add is classified as a duplicate and
revoked on arrival.  An optional tracking filter can reject such adds
outright (``reject_readd_after_delete``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import bloom, sre
from .crypto import (KEY_LEN, TAG_LEN, TOKEN_LEN, encode_parts, fresh_key,
                     fresh_nonce, keyed_hash, prf)
from .edb import EncryptedDatabase, SearchRequest, encode_entry
from .fpdse import SigmaState

logger = logging.getLogger(__name__)

ADD = "add"
DELETE = "del"

_COUNTER_LEN = 8


class ProtocolError(RuntimeError):
    """A retrieval failed authentication, or a reply was malformed."""


class UnknownKeywordError(LookupError):
    """Search for a keyword that was never updated."""


class DeletedPairRejected(RuntimeError):
    """Re-add of a deleted pair, with rejection tracking enabled."""


@dataclass
class ClientConfig:
    bf_n: int = 2 ** 20         # distinct-state capacity (pairs)
    bf_p: float = 1e-5          # distinct-state false-positive budget
    d_max: int = 1000           # default per-keyword revocations per epoch
    revoke_p: float = 1e-3      # revocation-filter false-positive budget
    sigma_depth: int = 20
    keyword_budgets: dict[bytes, int] = field(default_factory=dict)
    reject_readd_after_delete: bool = False

    def budget_for(self, keyword: bytes) -> int:
        return self.keyword_budgets.get(keyword, self.d_max)

    def sre_params(self, keyword: bytes) -> tuple[int, int]:
        """Power-of-two revocation domain sized for the keyword's budget.

        This is the default optimization: a keyword expected to see few
        revocations gets a small tree, so derived keys stay short.
        """
        b_raw, h = bloom.size_for(self.budget_for(keyword), self.revoke_p)
        b = 1 << (max(b_raw, 2) - 1).bit_length()
        return b, h


@dataclass
class ClientState:
    k_search: bytes             # cache tokens tkn = F(., w)
    k_tag: bytes                # real/dummy tags
    k_value: bytes              # retrieval value encryption
    distinct_filter: bloom.BloomFilter
    sigma: SigmaState
    config: ClientConfig
    msk: dict[bytes, sre.SreMasterKey] = field(default_factory=dict)
    revocation: dict[bytes, bloom.BloomFilter] = field(default_factory=dict)
    epoch: dict[bytes, int] = field(default_factory=dict)
    update_count: dict[bytes, int] = field(default_factory=dict)
    revoked_in_epoch: dict[bytes, int] = field(default_factory=dict)
    deleted_filter: Optional[bloom.BloomFilter] = None

    def __post_init__(self):
        self._value_aead = None

    @property
    def value_aead(self) -> AESGCM:
        aead = getattr(self, "_value_aead", None)
        if aead is None:
            aead = AESGCM(self.k_value)
            self._value_aead = aead
        return aead

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_value_aead", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._value_aead = None

    def label_for(self, keyword: bytes, epoch: int) -> bytes:
        key = keyed_hash(self.k_search, b"epoch-label-key")
        return keyed_hash(key, encode_parts(keyword) + epoch.to_bytes(8, "big"))

    def cache_token(self, keyword: bytes) -> bytes:
        return prf(self.k_search, encode_parts(keyword), TOKEN_LEN)

    def real_tag(self, keyword: bytes, value: bytes) -> bytes:
        return prf(self.k_tag,
                   encode_parts(keyword, value) + bytes(_COUNTER_LEN), TAG_LEN)

    def dummy_tag(self, keyword: bytes, value: bytes, cnt: int) -> bytes:
        if cnt < 1:
            raise ValueError("counter 0 is reserved for the real tag")
        return prf(self.k_tag,
                   encode_parts(keyword, value) + cnt.to_bytes(_COUNTER_LEN, "big"),
                   TAG_LEN)


def setup(config: Optional[ClientConfig] = None
          ) -> tuple[ClientState, EncryptedDatabase]:
    config = config or ClientConfig()
    b, h = bloom.size_for(config.bf_n, config.bf_p)
    state = ClientState(
        k_search=fresh_key(KEY_LEN),
        k_tag=fresh_key(KEY_LEN),
        k_value=fresh_key(KEY_LEN),
        distinct_filter=bloom.BloomFilter.gen(b, h, fresh_key(KEY_LEN)),
        sigma=SigmaState(fresh_key(KEY_LEN), config.sigma_depth),
        config=config,
    )
    if config.reject_readd_after_delete:
        state.deleted_filter = bloom.BloomFilter.gen(b, h, fresh_key(KEY_LEN))
    return state, EncryptedDatabase()


def _init_keyword(state: ClientState, keyword: bytes):
    if keyword in state.msk:
        return
    b, h = state.config.sre_params(keyword)
    msk = sre.kgen(b, h)
    state.msk[keyword] = msk
    state.revocation[keyword] = msk.D.copy()
    state.epoch[keyword] = 0
    state.update_count[keyword] = 1
    state.revoked_in_epoch[keyword] = 0


def _revoke(state: ClientState, keyword: bytes, tag: bytes):
    state.revocation[keyword] = sre.comp(state.revocation[keyword], tag)
    state.revoked_in_epoch[keyword] += 1
    budget = state.config.budget_for(keyword)
    if state.revoked_in_epoch[keyword] == budget + 1:
        logger.warning(
            "keyword %r exceeded its revocation budget (%d) this epoch; "
            "false-revocation rate degrades beyond the configured bound",
            keyword, budget)


def encrypt_retrieval(state: ClientState, value: bytes, cnt: int) -> bytes:
    nonce = fresh_nonce()
    body = state.value_aead.encrypt(
        nonce, value + cnt.to_bytes(_COUNTER_LEN, "big"), None)
    return nonce + body


def update(state: ClientState, op: str, keyword: bytes, value: bytes,
           edb) -> None:
    """One add/delete.  ``edb`` needs only ``apply_update``.

    Adds upload exactly one fixed-shape entry; deletes upload nothing.
    """
    if op not in (ADD, DELETE):
        raise ValueError(f"op must be {ADD!r} or {DELETE!r}, got {op!r}")
    _init_keyword(state, keyword)
    cnt = state.update_count[keyword]
    real = state.real_tag(keyword, value)

    if op == ADD:
        if state.deleted_filter is not None and state.deleted_filter.check(real):
            raise DeletedPairRejected(
                f"pair for keyword {keyword!r} was deleted earlier; "
                "re-adding is not recoverable")
        first_occurrence = not state.distinct_filter.check(real)
        if first_occurrence:
            state.distinct_filter.upd(real)
            if state.distinct_filter.inserted == state.config.bf_n + 1:
                logger.warning(
                    "distinct-state filter past design capacity (%d pairs); "
                    "duplicate misclassification rate degrades",
                    state.config.bf_n)
            tag = real
        else:
            tag = state.dummy_tag(keyword, value, cnt)
        retrieval = encrypt_retrieval(state, value, cnt)
        ciphertext = sre.enc(state.msk[keyword], retrieval, tag)
        label = state.label_for(keyword, state.epoch[keyword])
        state.sigma.update(label, encode_entry(ciphertext, tag), edb)
        if not first_occurrence:
            _revoke(state, keyword, tag)   # dummy dies on arrival
    else:
        if not state.distinct_filter.check(real):
            logger.warning("delete of never-added pair under keyword %r",
                           keyword)
        if state.deleted_filter is not None:
            state.deleted_filter.upd(real)
        _revoke(state, keyword, real)

    state.update_count[keyword] = cnt + 1


def search_client_token(state: ClientState, keyword: bytes) -> SearchRequest:
    """Build the search request and rotate the keyword's epoch.

    Raises UnknownKeywordError for a keyword with no update history.
    """
    if keyword not in state.msk:
        raise UnknownKeywordError(keyword)
    msk = state.msk[keyword]
    revocation = state.revocation[keyword]
    request = SearchRequest(
        tkn=state.cache_token(keyword),
        revoked_key=sre.ck_rev(msk.sk, revocation),
        sigma_token=state.sigma.search_token(
            state.label_for(keyword, state.epoch[keyword])),
    )
    fresh = sre.kgen(msk.b, msk.h)
    state.msk[keyword] = fresh
    state.revocation[keyword] = fresh.D.copy()
    state.epoch[keyword] += 1
    state.revoked_in_epoch[keyword] = 0
    # update_count deliberately survives rotation: dummy counters must
    # never repeat for a pair across epochs
    return request


def search_finalize(state: ClientState, retrievals: Iterable[bytes]
                    ) -> set[bytes]:
    """Decrypt retrievals to the distinct value set."""
    values = set()
    for blob in retrievals:
        if len(blob) < 12 + 16 + _COUNTER_LEN:
            raise ProtocolError("retrieval too short")
        try:
            plain = state.value_aead.decrypt(blob[:12], blob[12:], None)
        except InvalidTag as exc:
            raise ProtocolError("retrieval failed authentication") from exc
        values.add(plain[:-_COUNTER_LEN])
    return values


def search(state: ClientState, keyword: bytes, edb) -> set[bytes]:
    """Full round against any transport exposing ``execute_search``."""
    request = search_client_token(state, keyword)
    outcome = edb.execute_search(request)
    return search_finalize(state, outcome.results)
