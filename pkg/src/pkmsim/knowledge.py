"""Dolev-Yao intruder knowledge.

``Knowledge.analyzed`` is the fixpoint of the analysis rules (split tuples,
read signed bodies, read certificate keys, open ciphertexts whose inverse
key is known).  Synthesis (tupling, encrypting, signing) is unbounded, so it
is answered on demand by ``derivable`` instead of being materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .term import (
    Atom, Bcid, Capabilities, Cert, Enc, KeyKind, KeyRef, Lifetime, SaidList,
    SeqNo, Sig, Term, Timestamp, Tuple, inverse,
)

# values any party can produce without having seen them
_PUBLIC_KINDS = (Timestamp, Lifetime, SeqNo, SaidList, Capabilities, Bcid, Atom)


class DYViolation(RuntimeError):
    """The adversary tried to emit a term it cannot derive."""


def _is_public(t: Term) -> bool:
    return isinstance(t, _PUBLIC_KINDS) or (isinstance(t, KeyRef) and t.kind is KeyKind.PUBLIC)


def analyze(terms: Iterable[Term]) -> frozenset:
    known: set = set()
    locked: list[Enc] = []
    work = list(terms)
    while work:
        t = work.pop()
        if t in known:
            continue
        known.add(t)
        if isinstance(t, Tuple):
            work.extend(t.parts)
        elif isinstance(t, Sig):
            work.append(t.body)
        elif isinstance(t, Cert):
            work.append(t.pubkey)
        elif isinstance(t, Enc):
            locked.append(t)
        if isinstance(t, KeyRef) or not work:
            # a new key may open something seen earlier
            still = []
            for enc in locked:
                if _derivable(inverse(enc.key), known):
                    work.append(enc.body)
                else:
                    still.append(enc)
            locked = still
    return frozenset(known)


def _derivable(t: Term, known) -> bool:
    if t in known or _is_public(t):
        return True
    if isinstance(t, Tuple):
        return all(_derivable(p, known) for p in t.parts)
    if isinstance(t, (Enc, Sig)):
        return _derivable(t.key, known) and _derivable(t.body, known)
    return False


@dataclass(frozen=True)
class Knowledge:
    analyzed: frozenset = field(default_factory=frozenset)

    @classmethod
    def of(cls, terms: Iterable[Term]) -> "Knowledge":
        return cls(analyze(terms))

    def derivable(self, t: Term) -> bool:
        return _derivable(t, self.analyzed)

    def __contains__(self, t: Term) -> bool:
        return self.derivable(t)


def observe(k: Knowledge, msg: Term) -> Knowledge:
    return Knowledge(analyze([*k.analyzed, msg]))


def exposed_closure(initial: Iterable[Term], messages: Iterable[Term]) -> frozenset:
    """Independent soundness oracle for a finished trace.

    Walks every message, descending into a ciphertext only when the private
    half of its key is itself exposed (or held initially), iterating until no
    new key appears.  Anything the adversary knows must lie in this set.
    """
    initial = set(initial)
    messages = list(messages)
    exposed = set(initial)
    while True:
        keys = {t for t in exposed if isinstance(t, KeyRef)}
        before = len(exposed)

        def walk(t):
            exposed.add(t)
            if isinstance(t, Tuple):
                for p in t.parts:
                    walk(p)
            elif isinstance(t, Sig):
                walk(t.body)
            elif isinstance(t, Cert):
                exposed.add(t.pubkey)
            elif isinstance(t, Enc):
                opener = inverse(t.key)
                if opener in keys or (opener.kind is KeyKind.PUBLIC):
                    walk(t.body)

        for m in [*initial, *messages]:
            walk(m)
        if len(exposed) == before and {t for t in exposed if isinstance(t, KeyRef)} == keys:
            return frozenset(exposed)


def check_soundness(k: Knowledge, initial: Iterable[Term], messages: Iterable[Term]) -> list[Term]:
    """Return the analyzed terms that the adversary should not be able to know (empty when sound)."""
    allowed = exposed_closure(initial, messages)
    return sorted((t for t in k.analyzed if t not in allowed), key=repr)
