"""Per-node simulated clocks with offset, linear drift and resynchronization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class SyncPolicy:
    """``resync_interval=None`` means the clocks are never resynchronized."""

    resync_interval: Optional[float] = None
    post_resync_residual: float = 0.0

    def __post_init__(self):
        if self.post_resync_residual < 0:
            raise ValueError("post_resync_residual must be >= 0")
        if self.resync_interval is not None and self.resync_interval <= 0:
            raise ValueError("resync_interval must be > 0")


@dataclass(frozen=True)
class NodeClock:
    offset: float = 0.0
    drift: float = 0.0
    # drift accumulates from the last resync (0 until the first one)
    anchor: float = 0.0


@dataclass(frozen=True)
class ClockState:
    sim_time: float = 0.0
    nodes: dict[str, NodeClock] = field(default_factory=dict)
    policy: SyncPolicy = SyncPolicy()

    def register(self, node: str, offset: float = 0.0, drift: float = 0.0) -> "ClockState":
        if drift <= -1:
            raise ValueError("drift must be > -1 for a monotone clock")
        return replace(self, nodes={**self.nodes, node: NodeClock(offset, drift, self.sim_time)})

    def advance(self, t: float) -> "ClockState":
        return replace(self, sim_time=t)

    def _get(self, n: str) -> NodeClock:
        try:
            return self.nodes[n]
        except KeyError:
            raise UnknownNodeError(n) from None


def node_now(c: ClockState, n: str) -> float:
    nc = c._get(n)
    return c.sim_time + nc.offset + nc.drift * (c.sim_time - nc.anchor)


def error(c: ClockState, n: str) -> float:
    """Signed deviation of node ``n``'s clock from simulation time."""
    return node_now(c, n) - c.sim_time


def skew(c: ClockState, a: str, b: str) -> float:
    return abs(node_now(c, a) - node_now(c, b))


def resync(c: ClockState, n: str) -> ClockState:
    """Pull node ``n`` back to within the policy residual, keeping the sign of its error."""
    nc = c._get(n)
    err = error(c, n)
    residual = c.policy.post_resync_residual
    clamped = max(-residual, min(residual, err))
    nodes = {**c.nodes, n: NodeClock(clamped, nc.drift, c.sim_time)}
    return replace(c, nodes=nodes)


def resync_all(c: ClockState) -> ClockState:
    for n in sorted(c.nodes):
        c = resync(c, n)
    return c
