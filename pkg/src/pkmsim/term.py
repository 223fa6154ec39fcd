"""Symbolic message algebra.

Every protocol message and every piece of adversary knowledge is a ``Term``.
Cryptography is perfect: ``Enc`` can only be opened with the inverse key and
``Sig`` can only be produced with the signer's private key.  Terms are frozen
dataclasses, so equality is structural and terms are hashable.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


class MalformedTermError(ValueError):
    """A term violates a structural constraint (wrong key kind, field width)."""


class KeyKind(Enum):
    PUBLIC = "Pub"
    PRIVATE = "Priv"
    SYMMETRIC = "Sym"


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Nonce:
    id: int


@dataclass(frozen=True)
class Timestamp:
    t: float


@dataclass(frozen=True)
class KeyRef:
    kind: KeyKind
    owner: str


@dataclass(frozen=True)
class Cert:
    subject: str
    pubkey: KeyRef


@dataclass(frozen=True)
class AuthKey:
    id: str


@dataclass(frozen=True)
class MacId:
    addr: str


@dataclass(frozen=True)
class Bcid:
    code: int


@dataclass(frozen=True)
class Capabilities:
    bits: int


@dataclass(frozen=True)
class SaidList:
    entries: tuple[int, ...]


@dataclass(frozen=True)
class Lifetime:
    seconds: int


@dataclass(frozen=True)
class SeqNo:
    n: int


@dataclass(frozen=True)
class Enc:
    key: KeyRef
    body: "Term"


@dataclass(frozen=True)
class Sig:
    key: KeyRef
    body: "Term"


@dataclass(frozen=True)
class Tuple:
    parts: tuple["Term", ...] = field(default_factory=tuple)

    def __post_init__(self):
        # accept lists for convenience; store a tuple so the term stays hashable
        object.__setattr__(self, "parts", tuple(self.parts))


Term = Union[
    Atom, Nonce, Timestamp, KeyRef, Cert, AuthKey, MacId, Bcid,
    Capabilities, SaidList, Lifetime, SeqNo, Enc, Sig, Tuple,
]


def pub(owner: str) -> KeyRef:
    return KeyRef(KeyKind.PUBLIC, owner)


def priv(owner: str) -> KeyRef:
    return KeyRef(KeyKind.PRIVATE, owner)


def sym(owner: str) -> KeyRef:
    return KeyRef(KeyKind.SYMMETRIC, owner)


def inverse(k: KeyRef) -> KeyRef:
    if k.kind is KeyKind.PUBLIC:
        return priv(k.owner)
    if k.kind is KeyKind.PRIVATE:
        return pub(k.owner)
    return k


_MAC_OCTETS = 6


def check_well_formed(t: Term) -> None:
    """Raise ``MalformedTermError`` if ``t`` breaks a structural invariant."""
    if isinstance(t, Tuple):
        for p in t.parts:
            check_well_formed(p)
    elif isinstance(t, Sig):
        if t.key.kind is not KeyKind.PRIVATE:
            raise MalformedTermError(f"signature key must be private, got {render(t.key)}")
        check_well_formed(t.body)
    elif isinstance(t, Enc):
        if t.key.kind is KeyKind.PRIVATE:
            raise MalformedTermError(f"encryption key must be public or symmetric, got {render(t.key)}")
        check_well_formed(t.body)
    elif isinstance(t, Nonce):
        if not 0 <= t.id < 2**64:
            raise MalformedTermError(f"nonce out of 64-bit range: {t.id}")
    elif isinstance(t, Timestamp):
        if not math.isfinite(t.t):
            raise MalformedTermError("timestamp must be finite")
    elif isinstance(t, Bcid):
        if not 0 <= t.code < 2**16:
            raise MalformedTermError(f"BCID out of 16-bit range: {t.code}")
    elif isinstance(t, SaidList):
        if any(not 0 <= e < 2**16 for e in t.entries):
            raise MalformedTermError("SAID entries are 16-bit")
    elif isinstance(t, (Capabilities, Lifetime)):
        value = t.bits if isinstance(t, Capabilities) else t.seconds
        if not 0 <= value < 2**32:
            raise MalformedTermError(f"{type(t).__name__} out of 32-bit range")
    elif isinstance(t, SeqNo):
        if not 0 <= t.n < 2**8:
            raise MalformedTermError(f"sequence number out of range: {t.n}")
    elif isinstance(t, MacId):
        octets = t.addr.split(":")
        if len(octets) != _MAC_OCTETS or any(len(o) != 2 for o in octets):
            raise MalformedTermError(f"bad MAC address {t.addr!r}")
        try:
            [int(o, 16) for o in octets]
        except ValueError:
            raise MalformedTermError(f"bad MAC address {t.addr!r}") from None
    elif isinstance(t, Cert):
        if t.pubkey.kind is not KeyKind.PUBLIC:
            raise MalformedTermError("certificates carry public keys")
    elif not isinstance(t, (Atom, KeyRef, AuthKey)):
        raise MalformedTermError(f"not a term: {t!r}")


@dataclass(frozen=True)
class SizeModel:
    """Wire bytes per term kind.

    Encryption rounds the body up to whole cipher blocks (``pk_block`` for
    public-key, ``sym_block`` for symmetric).  A signature is detached: it
    costs ``sig`` bytes regardless of what it covers, because the covered
    fields travel alongside it in the same message.
    """

    nonce: int = 8
    timestamp: int = 4
    cert: int = 512
    sig: int = 128
    pk_block: int = 128
    sym_block: int = 16
    mac: int = 6
    bcid: int = 2
    capabilities: int = 4
    lifetime: int = 4
    seqno: int = 1
    said_entry: int = 2
    atom: int = 4
    auth_key: int = 20
    asym_key: int = 128
    sym_key: int = 16

    @classmethod
    def uniform(cls, size: int) -> "SizeModel":
        return cls(**{name: size for name in cls.__dataclass_fields__})


def encode_size(t: Term, m: SizeModel = SizeModel()) -> int:
    check_well_formed(t)
    return _size(t, m)


def _size(t: Term, m: SizeModel) -> int:
    if isinstance(t, Tuple):
        return sum(_size(p, m) for p in t.parts)
    if isinstance(t, Enc):
        block = m.pk_block if t.key.kind is KeyKind.PUBLIC else m.sym_block
        body = _size(t.body, m)
        return max(block, -(-body // block) * block)
    if isinstance(t, Sig):
        return m.sig
    if isinstance(t, SaidList):
        return m.said_entry * len(t.entries)
    if isinstance(t, KeyRef):
        return m.sym_key if t.kind is KeyKind.SYMMETRIC else m.asym_key
    simple = {
        Nonce: m.nonce, Timestamp: m.timestamp, Cert: m.cert, MacId: m.mac,
        Bcid: m.bcid, Capabilities: m.capabilities, Lifetime: m.lifetime,
        SeqNo: m.seqno, Atom: m.atom, AuthKey: m.auth_key,
    }
    return simple[type(t)]


def sym_decrypt(t: Term, k: KeyRef) -> Optional[Term]:
    """Open ``t`` with ``k``; ``None`` unless ``t`` is a ciphertext under the inverse of ``k``."""
    if isinstance(t, Enc) and inverse(t.key) == k:
        return t.body
    return None


def verify_sig(t: Term, signer: str) -> bool:
    return isinstance(t, Sig) and t.key == priv(signer)


def render(t: Term, compact: bool = False) -> str:
    """Canonical one-line text form.

    ``compact`` elides signature bodies, which trace lines would otherwise
    repeat in full.
    """
    if isinstance(t, Tuple):
        return "<" + ", ".join(render(p, compact) for p in t.parts) + ">"
    if isinstance(t, Enc):
        return "{" + render(t.body, compact) + "}" + render(t.key)
    if isinstance(t, Sig):
        if compact:
            return "Sig:" + render(t.key)
        return "[" + render(t.body) + "]" + render(t.key)
    if isinstance(t, KeyRef):
        return f"{t.kind.value}({t.owner})"
    if isinstance(t, Nonce):
        return f"N#{t.id:016x}"
    if isinstance(t, Timestamp):
        return f"T@{t.t!r}"
    if isinstance(t, Cert):
        return f"Cert({t.subject};{render(t.pubkey)})"
    if isinstance(t, AuthKey):
        return f"AK({t.id})"
    if isinstance(t, MacId):
        return f"MAC({t.addr})"
    if isinstance(t, Bcid):
        return f"BCID({t.code:#06x})"
    if isinstance(t, Capabilities):
        return f"Caps({t.bits:#010x})"
    if isinstance(t, SaidList):
        return "SAIDs(" + ",".join(f"{e:#06x}" for e in t.entries) + ")"
    if isinstance(t, Lifetime):
        return f"Life({t.seconds})"
    if isinstance(t, SeqNo):
        return f"Seq({t.n})"
    if isinstance(t, Atom):
        return t.name
    raise MalformedTermError(f"not a term: {t!r}")


def subterms(t: Term):
    """Yield ``t`` and every term nested inside it (keys and cert keys included)."""
    yield t
    if isinstance(t, Tuple):
        for p in t.parts:
            yield from subterms(p)
    elif isinstance(t, (Enc, Sig)):
        yield t.key
        yield from subterms(t.body)
    elif isinstance(t, Cert):
        yield t.pubkey


class NonceSource:
    """Seeded 64-bit nonce generator that never repeats within one run."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)
        self._issued: set[int] = set()

    def nonce(self) -> Nonce:
        while True:
            value = self._rng.getrandbits(64)
            if value not in self._issued:
                self._issued.add(value)
                return Nonce(value)

    def label(self, prefix: str) -> str:
        return f"{prefix}-{self.nonce().id:016x}"
