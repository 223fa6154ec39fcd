"""Timestamp freshness state: record tables (TSA, HA) and the ISNAP window."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class TimestampTable:
    """Every timestamp received per sender, kept for ``retention_days``.

    ``last_seen`` is the receiver-local time of the latest prune and serves
    as the reference for ``memory_bytes`` when no explicit time is given.
    """

    retention_days: int = 15
    width: int = 4
    records: frozenset[tuple[str, float]] = field(default_factory=frozenset)
    last_seen: Optional[float] = None

    @property
    def retention_seconds(self) -> float:
        return self.retention_days * SECONDS_PER_DAY

    def contains(self, sender: str, ts: float) -> bool:
        return (sender, ts) in self.records

    def prune(self, now: float) -> "TimestampTable":
        cutoff = now - self.retention_seconds
        live = frozenset(r for r in self.records if r[1] > cutoff)
        return replace(self, records=live, last_seen=now)

    def record(self, sender: str, ts: float, now: float) -> "TimestampTable":
        pruned = self.prune(now)
        return replace(pruned, records=pruned.records | {(sender, ts)})

    def __len__(self) -> int:
        return len(self.records)


def table_memory_bytes(t: TimestampTable, now: Optional[float] = None) -> int:
    if now is None:
        now = t.last_seen
    live = t.prune(now) if now is not None else t
    return t.width * len(live.records)


class WindowResult(Enum):
    ACCEPT = "Accept"
    STALE = "StaleTimestamp"
    DUPLICATE = "DuplicateInWindow"


@dataclass(frozen=True)
class ValidationWindow:
    width: float = 10.0
    cache: frozenset[tuple[str, float]] = field(default_factory=frozenset)

    def evict(self, now: float) -> "ValidationWindow":
        live = frozenset(e for e in self.cache if now - e[1] <= self.width)
        return replace(self, cache=live)


def validate_window(ts: float, now: float, w: ValidationWindow,
                    sender: str) -> tuple[WindowResult, ValidationWindow]:
    """Check ``|now - ts| <= width`` and the duplicate cache.

    Returns the verdict and the window to keep; on ``ACCEPT`` the new window
    remembers ``(sender, ts)`` until it ages out.
    """
    w = w.evict(now)
    if abs(now - ts) > w.width:
        return WindowResult.STALE, w
    if (sender, ts) in w.cache:
        return WindowResult.DUPLICATE, w
    return WindowResult.ACCEPT, replace(w, cache=w.cache | {(sender, ts)})
