"""Deterministic discrete-event world: SS/BS nodes, adversary-mediated links, BS budget, trace.

Every transmission becomes a ``Message`` that ends up delivered, dropped or
still in flight.  Events are ordered by ``(time, sequence)``, so a world is a
pure function of its configuration, seed and adversary.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from .clock import ClockState, SyncPolicy, node_now, resync_all
from .freshness import TimestampTable, ValidationWindow
from .knowledge import DYViolation, Knowledge, observe
from .protocol import (
    Authorized, MsgCode, Phase, ProtocolId, Rejected, Role, SessionConfig, SessionState,
    init_session, initiate, step,
)
from .term import AuthKey, Bcid, MacId, NonceSource, SizeModel, Term, check_well_formed, encode_size, render

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResourceBudget:
    """BS capacity.  ``max_cycles=None`` means unlimited."""

    max_cycles: Optional[int] = 4
    cycle_time: float = 1.0
    cycle_timeout: float = 60.0
    overload: str = "drop"

    def __post_init__(self):
        if self.overload not in ("drop", "queue"):
            raise ValueError(f"overload must be 'drop' or 'queue', not {self.overload!r}")


@dataclass(frozen=True)
class NetConfig:
    protocol: ProtocolId
    latency: float = 1.0
    request_gap: float = 0.5
    budget: ResourceBudget = ResourceBudget()
    # ISNAP window width; also the TSA/HA receiver freshness tolerance
    window: float = 10.0
    retention_days: int = 15
    timestamp_width: int = 4
    sync: SyncPolicy = SyncPolicy()
    size_model: SizeModel = SizeModel()


@dataclass
class Message:
    id: int
    src: str
    dst: str
    code: MsgCode
    term: Term
    sent_at: float
    deliver_at: float
    injected: bool = False
    status: str = "in_flight"
    result: str = ""


@dataclass(frozen=True)
class Capture:
    msg_id: int


@dataclass(frozen=True)
class Drop:
    msg_id: int


@dataclass(frozen=True)
class Delay:
    msg_id: int
    d: float


@dataclass(frozen=True)
class Inject:
    term: Term
    to: str
    src: str
    code: MsgCode


Action = Union[Capture, Drop, Delay, Inject]


class Adversary:
    """Passive eavesdropper: captures everything, changes nothing.

    Strategies subclass this and override ``on_send``.
    """

    name = "adv"

    def __init__(self, initial: tuple = ()):
        self.initial = tuple(initial)
        self.knowledge = Knowledge.of(self.initial)

    def learn(self, t: Term) -> None:
        self.knowledge = observe(self.knowledge, t)

    def on_send(self, world: "SimWorld", msg: Message) -> None:
        world.capture(msg)


@dataclass
class SSNode:
    id: str
    bs: str
    mac: MacId
    bcid: Bcid
    table: TimestampTable
    window: ValidationWindow
    session: Optional[SessionState] = None
    adversarial: bool = False
    join: Optional["Join"] = None


@dataclass
class Cycle:
    id: int
    peer: str
    session: SessionState
    started: float
    injected_trigger: bool
    all_injected: bool
    holds_slot: bool = True


@dataclass
class BSNode:
    id: str
    table: TimestampTable
    window: ValidationWindow
    cycles: list[Cycle] = field(default_factory=list)
    queued: deque = field(default_factory=deque)
    active: int = 0


@dataclass
class Join:
    ss: str
    start: float
    legit: bool
    session: Optional[SessionState] = None
    done_at: Optional[float] = None


class SimWorld:
    def __init__(self, cfg: NetConfig, seed: int = 0, adversary: Optional[Adversary] = None):
        self.cfg = cfg
        self.seed = seed
        self.adversary = adversary
        self.nonces = NonceSource(seed)
        self.now = 0.0
        self.clock = ClockState(policy=cfg.sync)
        self.nodes: dict[str, Union[SSNode, BSNode]] = {}
        self.messages: list[Message] = []
        self.joins: list[Join] = []
        self.trace: list[str] = []
        self.counters: Counter = Counter()
        self.peak_cycles = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._cycle_ids = itertools.count(1)
        if cfg.sync.resync_interval is not None:
            self._push(0.0, "resync", None)

    # -- setup -------------------------------------------------------------

    def _table(self) -> TimestampTable:
        return TimestampTable(self.cfg.retention_days, self.cfg.timestamp_width)

    def add_bs(self, bs: str, offset: float = 0.0, drift: float = 0.0) -> BSNode:
        node = BSNode(bs, self._table(), ValidationWindow(self.cfg.window))
        self.nodes[bs] = node
        self.clock = self.clock.register(bs, offset, drift)
        return node

    def add_ss(self, ss: str, bs: str, *, mac: Optional[MacId] = None, bcid: Optional[Bcid] = None,
               offset: float = 0.0, drift: float = 0.0, adversarial: bool = False) -> SSNode:
        index = sum(isinstance(n, SSNode) for n in self.nodes) + 1
        node = SSNode(
            ss, bs,
            mac or MacId("02:00:00:%02x:%02x:%02x" % ((index >> 16) & 0xFF, (index >> 8) & 0xFF, index & 0xFF)),
            bcid or Bcid(0x0100 + index),
            self._table(), ValidationWindow(self.cfg.window), adversarial=adversarial,
        )
        self.nodes[ss] = node
        self.clock = self.clock.register(ss, offset, drift)
        return node

    def schedule_join(self, ss: str, at: float) -> None:
        self._push(at, "join", ss)

    def schedule(self, at: float, fn: Callable, *args) -> None:
        """Run ``fn(*args)`` at simulation time ``at`` (adversary timing hooks)."""
        self._push(at, "call", (fn, args))

    def _push(self, at: float, kind: str, payload) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), kind, payload))

    def local_now(self, node: str) -> float:
        return node_now(self.clock.advance(self.now), node)

    # -- trace -------------------------------------------------------------

    def _log(self, kind: str, src: str = "-", dst: str = "-", summary: str = "-", result: str = "-") -> None:
        self.trace.append(f"{self.now:.3f} | {kind} | {src} | {dst} | {summary} | {result}")

    @staticmethod
    def _summary(msg: Message) -> str:
        return f"#{msg.id} {msg.code.value} {render(msg.term, compact=True)}"

    # -- transmission ------------------------------------------------------

    def send(self, src: str, dst: str, code: MsgCode, term: Term, *, injected: bool = False) -> Message:
        check_well_formed(term)
        msg = Message(len(self.messages), src, dst, code, term, self.now,
                      self.now + self.cfg.latency, injected=injected)
        self.messages.append(msg)
        size = encode_size(term, self.cfg.size_model)
        self.counters["bytes_injected" if injected else "bytes_sent"] += size
        self._push(msg.deliver_at, "deliver", (msg.id, msg.deliver_at))
        self._log("inject" if injected else "send", src, dst, self._summary(msg), f"{size}B")
        if self.adversary is not None and not injected:
            self.adversary.on_send(self, msg)
        return msg

    def capture(self, msg: Message) -> None:
        self._require_adversary().learn(msg.term)

    def drop(self, msg: Message) -> None:
        if msg.status == "in_flight":
            msg.status = "dropped"
            self._log("drop", msg.src, msg.dst, self._summary(msg), "dropped")

    def delay(self, msg: Message, d: float) -> None:
        if d < 0:
            raise ValueError("delay must be >= 0")
        if msg.status != "in_flight" or d == 0:
            return
        msg.deliver_at += d
        self._push(msg.deliver_at, "deliver", (msg.id, msg.deliver_at))
        self._log("delay", msg.src, msg.dst, self._summary(msg), f"+{d!r}s")

    def inject(self, term: Term, src: str, dst: str, code: MsgCode, at: Optional[float] = None) -> Optional[Message]:
        """Transmit an adversary-built term; it must be derivable from current knowledge."""
        adv = self._require_adversary()
        if at is not None and at > self.now:
            self.schedule(at, self.inject, term, src, dst, code)
            return None
        if not adv.knowledge.derivable(term):
            raise DYViolation(f"adversary cannot derive {render(term, compact=True)}")
        return self.send(src, dst, code, term, injected=True)

    def interpose(self, action: Action) -> "SimWorld":
        if isinstance(action, Inject):
            self.inject(action.term, action.src, action.to, action.code)
            return self
        msg = self.messages[action.msg_id]
        if isinstance(action, Capture):
            self.capture(msg)
        elif isinstance(action, Drop):
            self.drop(msg)
        elif isinstance(action, Delay):
            self.delay(msg, action.d)
        return self

    def _require_adversary(self) -> Adversary:
        if self.adversary is None:
            raise RuntimeError("no adversary configured")
        return self.adversary

    # -- event loop --------------------------------------------------------

    def run_until(self, t_end: float) -> "SimWorld":
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} is before current time {self.now}")
        while self._queue and self._queue[0][0] <= t_end:
            at, _, kind, payload = heapq.heappop(self._queue)
            self.now = at
            getattr(self, f"_on_{kind}")(payload)
        self.now = t_end
        return self

    def _on_resync(self, _payload) -> None:
        self.clock = resync_all(self.clock.advance(self.now))
        self._log("resync", result=f"residual={self.cfg.sync.post_resync_residual!r}")
        self._push(self.now + self.cfg.sync.resync_interval, "resync", None)

    def _on_call(self, payload) -> None:
        fn, args = payload
        fn(*args)

    def _on_join(self, ss: str) -> None:
        node = self.nodes[ss]
        cfg = SessionConfig(
            peer=node.bs, mac=node.mac, bcid=node.bcid, nonce=self.nonces.nonce(),
            tolerance=self.cfg.window, table=node.table, window=node.window,
        )
        node.session = init_session(self.cfg.protocol, Role.SS, ss, cfg)
        if node.adversarial:
            # the attacker drew this nonce itself
            self._require_adversary().learn(cfg.nonce)
        node.join = Join(ss, self.now, legit=not node.adversarial, session=node.session)
        self.joins.append(node.join)
        self._log("join", ss, node.bs, self.cfg.protocol.value)
        self._on_initiate(ss)

    def _on_initiate(self, ss: str) -> None:
        node = self.nodes[ss]
        node.session, out = initiate(node.session, self.local_now(ss))
        node.join.session = node.session
        self._emit(node, out)
        if node.session.phase == Phase.SS_TRIGGER_SENT:
            self._push(self.now + self.cfg.request_gap, "initiate", ss)

    def _emit(self, node: SSNode, out) -> None:
        for code, term in out:
            if node.adversarial:
                self.inject(term, node.id, node.bs, code)
            else:
                self.send(node.id, node.bs, code, term)

    def _on_deliver(self, payload) -> None:
        msg_id, at = payload
        msg = self.messages[msg_id]
        if msg.status != "in_flight" or msg.deliver_at != at:
            return
        msg.status = "delivered"
        mark = len(self.trace)
        node = self.nodes.get(msg.dst)
        if isinstance(node, BSNode):
            self._bs_receive(node, msg)
        elif isinstance(node, SSNode):
            self._ss_receive(node, msg)
        else:
            msg.result = "no-such-node"
        self._log("recv", msg.src, msg.dst, self._summary(msg), msg.result)
        # the receive line goes before anything it caused
        self.trace.insert(mark, self.trace.pop())

    def _ss_receive(self, node: SSNode, msg: Message) -> None:
        if node.adversarial:
            self._require_adversary().learn(msg.term)
        s = node.session
        if s is None or not s.open:
            msg.result = "orphan"
            return
        s = replace(s, table=node.table if s.table is not None else None,
                    window=node.window if s.window is not None else None)
        s, out = step(s, msg.term, self.local_now(node.id))
        if s.table is not None:
            node.table = s.table
        if s.window is not None:
            node.window = s.window
        node.session = node.join.session = s
        msg.result = _result(s)
        if isinstance(s.outcome, Authorized):
            node.join.done_at = self.now
        self._emit(node, out)

    # -- base station ------------------------------------------------------

    def _bs_receive(self, node: BSNode, msg: Message) -> None:
        if msg.code is MsgCode.TRIGGER:
            self._bs_trigger(node, msg)
            return
        cycle = next((c for c in node.cycles
                      if c.holds_slot and c.peer == msg.src and c.session.expects() is msg.code), None)
        if cycle is None:
            msg.result = "orphan"
            self.counters["rejected_requests"] += 1
            return
        self._bs_step(node, cycle, msg)

    def _bs_full(self, node: BSNode) -> bool:
        limit = self.cfg.budget.max_cycles
        return limit is not None and node.active >= limit

    def _bs_trigger(self, node: BSNode, msg: Message) -> None:
        if self._bs_full(node):
            if self.cfg.budget.overload == "queue":
                node.queued.append(msg)
                msg.result = "queued"
            else:
                msg.result = "dropped:overload"
                self.counters["rejected_requests"] += 1
            return
        cfg = SessionConfig(ak=AuthKey(self.nonces.label("ak")), nonce=self.nonces.nonce(),
                            tolerance=self.cfg.window, table=node.table, window=node.window)
        s = init_session(self.cfg.protocol, Role.BS, node.id, cfg)
        s, out = step(s, msg.term, self.local_now(node.id))
        self._commit(node, s)
        msg.result = _result(s)
        if isinstance(s.outcome, Rejected):
            self.counters["rejected_requests"] += 1
            return
        cycle = Cycle(next(self._cycle_ids), s.peer, s, self.now, msg.injected, msg.injected)
        node.cycles.append(cycle)
        node.active += 1
        self.peak_cycles = max(self.peak_cycles, node.active)
        self.counters["cycles_started"] += 1
        if msg.injected:
            self.counters["triggered_cycles"] += 1
        self._log("cycle", s.peer, node.id, f"cycle {cycle.id}", f"active={node.active}")
        self._push(self.now + self.cfg.budget.cycle_timeout, "timeout", (node.id, cycle.id))
        self._bs_emit(node, s.peer, out)

    def _bs_step(self, node: BSNode, cycle: Cycle, msg: Message) -> None:
        s = replace(cycle.session, table=node.table if cycle.session.table is not None else None,
                    window=node.window if cycle.session.window is not None else None)
        s, out = step(s, msg.term, self.local_now(node.id))
        self._commit(node, s)
        cycle.session = s
        cycle.all_injected = cycle.all_injected and msg.injected
        msg.result = _result(s)
        if isinstance(s.outcome, Authorized):
            self.counters["completed_auths"] += 1
            self._release(node, cycle)
        elif isinstance(s.outcome, Rejected):
            self.counters["rejected_requests"] += 1
            self._release(node, cycle)
        self._bs_emit(node, cycle.peer, out)

    def _bs_emit(self, node: BSNode, peer: str, out) -> None:
        for code, term in out:
            self.schedule(self.now + self.cfg.budget.cycle_time, self.send, node.id, peer, code, term)

    def _commit(self, node: BSNode, s: SessionState) -> None:
        if s.table is not None:
            node.table = s.table
        if s.window is not None:
            node.window = s.window

    def _release(self, node: BSNode, cycle: Cycle) -> None:
        if not cycle.holds_slot:
            return
        cycle.holds_slot = False
        node.active -= 1
        if node.queued and not self._bs_full(node):
            self._bs_trigger(node, node.queued.popleft())

    def _on_timeout(self, payload) -> None:
        bs, cycle_id = payload
        node = self.nodes[bs]
        for cycle in node.cycles:
            if cycle.id == cycle_id and cycle.holds_slot:
                self.counters["timed_out_cycles"] += 1
                self._log("timeout", cycle.peer, bs, f"cycle {cycle.id}", "released")
                self._release(node, cycle)

    # -- results -----------------------------------------------------------

    def bs_sessions(self) -> list[tuple[str, Cycle]]:
        return [(n.id, c) for n in self.nodes.values() if isinstance(n, BSNode) for c in n.cycles]

    def join_completed(self, join: Join) -> bool:
        """Both ends authorized with the same AK."""
        s = join.session
        if s is None or not isinstance(s.outcome, Authorized):
            return False
        return any(c.peer == join.ss and isinstance(c.session.outcome, Authorized)
                   and c.session.ak == s.ak for _, c in self.bs_sessions())

    def accounting(self) -> Counter:
        return Counter(m.status for m in self.messages)


def _result(s: SessionState) -> str:
    if isinstance(s.outcome, Rejected):
        return f"rejected:{s.outcome.reason.value}"
    if isinstance(s.outcome, Authorized):
        return "authorized"
    return "accepted"


def metrics(w: SimWorld) -> dict:
    legit = [j for j in w.joins if j.legit]
    done = [j for j in legit if w.join_completed(j)]
    latencies = [j.done_at - j.start for j in done if j.done_at is not None]
    acct = w.accounting()
    return {
        "triggered_cycles": w.counters["triggered_cycles"],
        "cycles_started": w.counters["cycles_started"],
        "completed_auths": w.counters["completed_auths"],
        "rejected_requests": w.counters["rejected_requests"],
        "timed_out_cycles": w.counters["timed_out_cycles"],
        "legit_joins": len(legit),
        "legit_success_rate": len(done) / len(legit) if legit else None,
        "mean_auth_latency": sum(latencies) / len(latencies) if latencies else None,
        "peak_cycles": w.peak_cycles,
        "bytes_sent": w.counters["bytes_sent"],
        "bytes_injected": w.counters["bytes_injected"],
        "delivered": acct["delivered"],
        "dropped": acct["dropped"],
        "in_flight": acct["in_flight"],
    }


def run_until(w: SimWorld, t_end: float) -> SimWorld:
    return w.run_until(t_end)
