"""Deterministic test signature scheme and k-of-k multisignatures.

Signatures are HMAC-SHA256 tags keyed by a per-key secret. The secret is
derived from the key id under a fixed domain key, so every process can verify
any signature without a key-distribution step. That makes the scheme
reproducible across runs; it is *not* secure against code that calls
:func:`keygen` for a key it does not own. Byzantine behaviours in this package
never do, which is the whole unforgeability model.

A :class:`MultisigKey` is an ordered, canonicalised member list. A
:class:`PartialMultisig` collects member signatures over one message and is
complete once every member has contributed a valid one.
"""

from __future__ import annotations

import contextlib
import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Iterable, Iterator

_DOMAIN = b"asyncpay/test-scheme/v1"
_FORBIDDEN = set(",[]")

# (key_id, message) pairs signed while a recorder is active
_recorders: list[list[tuple[str, bytes]]] = []


class NonMember(ValueError):
    """A key that is not part of the multisig tried to add a partial."""


def _secret_for(key_id: str) -> bytes:
    return hmac.new(_DOMAIN, key_id.encode("utf-8"), hashlib.sha256).digest()


def _public_for(secret: bytes) -> bytes:
    return hashlib.sha256(b"pk" + secret).digest()


@dataclass(frozen=True)
class PublicKey:
    key_id: str
    data: bytes


@dataclass(frozen=True)
class Signature:
    key_id: str
    tag: bytes


@dataclass(frozen=True)
class KeyPair:
    key_id: str
    secret: bytes = field(repr=False)
    public: PublicKey


def keygen(key_id: str) -> KeyPair:
    if not key_id or _FORBIDDEN & set(key_id):
        raise ValueError(f"invalid key id {key_id!r}")
    secret = _secret_for(key_id)
    return KeyPair(key_id, secret, PublicKey(key_id, _public_for(secret)))


def sign(message: bytes, key: KeyPair) -> Signature:
    for rec in _recorders:
        rec.append((key.key_id, message))
    return Signature(key.key_id, hmac.new(key.secret, message, hashlib.sha256).digest())


def verify(message: bytes, sig: Signature, pk: PublicKey) -> bool:
    if not isinstance(sig, Signature) or sig.key_id != pk.key_id:
        return False
    secret = _secret_for(pk.key_id)
    if _public_for(secret) != pk.data:
        return False
    expected = hmac.new(secret, message, hashlib.sha256).digest()
    return hmac.compare_digest(expected, sig.tag)


@contextlib.contextmanager
def record_signing() -> Iterator[list[tuple[str, bytes]]]:
    """Collect every (key_id, message) signed inside the block."""
    log: list[tuple[str, bytes]] = []
    _recorders.append(log)
    try:
        yield log
    finally:
        _recorders.remove(log)


@dataclass(frozen=True)
class MultisigKey:
    members: tuple[PublicKey, ...]

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.members, key=lambda pk: pk.key_id))
        ids = [pk.key_id for pk in ordered]
        if len(ids) < 2 or len(set(ids)) != len(ids):
            raise ValueError("a multisig needs at least two distinct members")
        object.__setattr__(self, "members", ordered)

    @classmethod
    def of(cls, members: Iterable[PublicKey]) -> "MultisigKey":
        return cls(tuple(members))

    @property
    def canonical_id(self) -> str:
        return "ms[" + ",".join(pk.key_id for pk in self.members) + "]"

    def member(self, key_id: str) -> PublicKey | None:
        for pk in self.members:
            if pk.key_id == key_id:
                return pk
        return None


@dataclass(frozen=True)
class PartialMultisig:
    key: MultisigKey
    message: bytes
    partials: tuple[Signature, ...] = ()

    @property
    def signers(self) -> frozenset[str]:
        return frozenset(s.key_id for s in self.partials)

    def partial_for(self, key_id: str) -> Signature | None:
        for s in self.partials:
            if s.key_id == key_id:
                return s
        return None


def add_partial(p: PartialMultisig, key: KeyPair) -> PartialMultisig:
    if p.key.member(key.key_id) is None:
        raise NonMember(f"{key.key_id} is not a member of {p.key.canonical_id}")
    if key.key_id in p.signers:
        return p
    partials = tuple(sorted(p.partials + (sign(p.message, key),), key=lambda s: s.key_id))
    return PartialMultisig(p.key, p.message, partials)


def has_valid_partial(p: PartialMultisig, key_id: str) -> bool:
    pk = p.key.member(key_id)
    sig = p.partial_for(key_id)
    return pk is not None and sig is not None and verify(p.message, sig, pk)


def is_complete(p: PartialMultisig, mk: MultisigKey) -> bool:
    if p.key != mk:
        return False
    return all(has_valid_partial(p, pk.key_id) for pk in mk.members)
