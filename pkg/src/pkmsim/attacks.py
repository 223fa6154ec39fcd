"""Adversary strategies for the seven attack classes.

Each strategy is an ``Adversary`` subclass that hooks transmissions in a
``SimWorld``.  Everything it sends goes through ``SimWorld.inject`` and so must
be derivable from what it has captured plus its own initial keys.  After the
run, ``run_attack`` checks the adversary's knowledge against an independent
closure of the trace and refuses to report a verdict if they disagree.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .clock import SyncPolicy
from .config import ScenarioConfig
from .knowledge import check_soundness
from .netsim import Adversary, Message, NetConfig, ResourceBudget, SimWorld, metrics
from .protocol import (
    LAYOUTS, Authorized, ConfigError, MsgCode, ProtocolId, build, mfr_cert, node_cert, parse,
)
from .term import (
    AuthKey, Enc, Lifetime, MacId, Nonce, SaidList, SeqNo, Sig, Term, Timestamp, Tuple, priv, pub,
)

BS = "bs"
VICTIM = "ss1"
ADV = "adv"
ADV_AK = AuthKey("ak-adv")
ADV_NONCE = Nonce(0xADADADADADADADAD)
ADV_MAC = MacId("02:ad:ad:ad:ad:ad")
HORIZON = 400.0


class AttackKind(Enum):
    WATER_TORTURE = "WaterTorture"
    DOS = "DoS"
    MESSAGE_REPLAY = "MessageReplay"
    IDENTITY_THEFT = "IdentityTheft"
    IMPERSONATION = "Impersonation"
    INTERLEAVING = "Interleaving"
    SUPPRESS_REPLAY = "SuppressReplay"


class Verdict(Enum):
    SUCCESS = "Success"
    PARTIAL = "PartialSuccess"
    FAILED = "Failed"
    NOT_APPLICABLE = "NotApplicable"
    ERROR = "Error"


NOT_APPLICABLE = {
    AttackKind.IDENTITY_THEFT: frozenset({ProtocolId.PKMV1, ProtocolId.TSA}),
    AttackKind.INTERLEAVING: frozenset({ProtocolId.PKMV1, ProtocolId.TSA}),
    AttackKind.SUPPRESS_REPLAY: frozenset({ProtocolId.PKMV1, ProtocolId.PKMV2}),
}


class UnsoundTrace(RuntimeError):
    """The adversary ended up knowing something the trace never exposed."""


@dataclass
class AttackOutcome:
    verdict: Verdict
    metrics: dict = field(default_factory=dict)
    reason: str = ""
    worlds: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.verdict is Verdict.SUCCESS and not any(_supports(v) for v in self.metrics.values()):
            raise ValueError("a Success verdict needs a supporting metric")

    @property
    def headline(self) -> tuple[str, object]:
        name = next(iter(self.metrics), "")
        return name, self.metrics.get(name)


def _supports(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        return v > 0
    return bool(v)


# -- shared plumbing -------------------------------------------------------

def adversary_initial() -> tuple[Term, ...]:
    """What any attacker holds up front: its own identity and the BS's public certificate."""
    return (priv(ADV), pub(ADV), node_cert(ADV), mfr_cert(ADV), ADV_MAC, ADV_AK, ADV_NONCE,
            node_cert(BS), pub(BS))


def net_config(p: ProtocolId, sc: ScenarioConfig, *, budget: Optional[ResourceBudget] = None,
               sync: Optional[SyncPolicy] = None) -> NetConfig:
    if sync is None:
        sync = (SyncPolicy(sc.isnap_resync_interval, sc.resync_residual)
                if p is ProtocolId.ISNAP else SyncPolicy())
    if budget is None:
        budget = ResourceBudget(sc.budget_max_cycles, sc.cycle_time, sc.cycle_timeout, sc.overload)
    return NetConfig(p, latency=sc.latency, request_gap=sc.request_gap, budget=budget,
                     window=sc.window, retention_days=sc.retention_days,
                     timestamp_width=sc.timestamp_width, sync=sync)


def new_world(p: ProtocolId, sc: ScenarioConfig, seed: int, adversary: Optional[Adversary], *,
              budget: Optional[ResourceBudget] = None, sync: Optional[SyncPolicy] = None,
              bs_offset: float = 0.0, stations: tuple[str, ...] = (VICTIM,)) -> SimWorld:
    w = SimWorld(net_config(p, sc, budget=budget, sync=sync), seed, adversary)
    w.add_bs(BS, sc.clock_offsets.get(BS, 0.0) + bs_offset, sc.clock_drifts.get(BS, 0.0))
    for ss in stations:
        w.add_ss(ss, BS, offset=sc.clock_offsets.get(ss, 0.0), drift=sc.clock_drifts.get(ss, 0.0))
    return w


def restamp(t: Term, now: float) -> Term:
    """Replace top-level timestamps that no signature in the message covers."""
    if not isinstance(t, Tuple):
        return t
    covered = set()
    for part in t.parts:
        if isinstance(part, Sig) and isinstance(part.body, Tuple):
            covered.update(i for i, q in enumerate(t.parts) if q in part.body.parts)
    return Tuple([Timestamp(now) if isinstance(q, Timestamp) and i not in covered else q
                  for i, q in enumerate(t.parts)])


def _initiator_last(p: ProtocolId) -> MsgCode:
    return MsgCode.TRIGGER if p is ProtocolId.ISNAP else MsgCode.REQUEST


def _injected_to(w: SimWorld, dst: str) -> list[Message]:
    return [m for m in w.messages if m.injected and m.dst == dst and m.status == "delivered"]


def _accepted(m: Message) -> bool:
    return m.result in ("accepted", "authorized")


# -- strategies ------------------------------------------------------------

class FloodAdversary(Adversary):
    """Captures the victim's first trigger and re-injects ``volume`` copies of it."""

    def __init__(self, p: ProtocolId, volume: int, interval: float, lead: float = 3.0):
        super().__init__(adversary_initial())
        self.volume, self.interval, self.lead = volume, interval, lead
        self.trigger: Optional[Term] = None

    def on_send(self, world, msg):
        world.capture(msg)
        if self.trigger is None and msg.src == VICTIM and msg.code is MsgCode.TRIGGER:
            self.trigger = msg.term
            for i in range(self.volume):
                world.schedule(msg.sent_at + self.lead + i * self.interval, self._fire, world)

    def _fire(self, world):
        world.inject(restamp(self.trigger, world.now), VICTIM, BS, MsgCode.TRIGGER)


class ReplayAdversary(Adversary):
    """Records the victim's session, then replays it into a fresh context."""

    def __init__(self, p: ProtocolId, replay_after: float, gap: float):
        super().__init__(adversary_initial())
        self.p, self.replay_after, self.gap = p, replay_after, gap
        self.recorded: dict[MsgCode, Term] = {}
        self.active = False

    def on_send(self, world, msg):
        world.capture(msg)
        if not self.active:
            self.recorded.setdefault(msg.code, msg.term)
            return
        if msg.src == VICTIM:
            world.drop(msg)
            if msg.code is _initiator_last(self.p) and MsgCode.REPLY in self.recorded:
                world.inject(self.recorded[MsgCode.REPLY], BS, VICTIM, MsgCode.REPLY)
        elif msg.dst == VICTIM:
            world.drop(msg)
            if msg.code is MsgCode.REPLY and MsgCode.ACK in self.recorded:
                world.inject(self.recorded[MsgCode.ACK], VICTIM, BS, MsgCode.ACK)

    def start(self, world):
        self.active = True
        world.schedule_join(VICTIM, world.now)
        world.inject(self.recorded[MsgCode.TRIGGER], VICTIM, BS, MsgCode.TRIGGER)
        if MsgCode.REQUEST in self.recorded:
            world.inject(self.recorded[MsgCode.REQUEST], VICTIM, BS, MsgCode.REQUEST,
                         at=world.now + self.gap)


class RogueBSAdversary(Adversary):
    """Cuts the victim off from the BS and answers it with a self-made reply."""

    def __init__(self, p: ProtocolId):
        super().__init__(adversary_initial())
        self.p = p
        self.nonce = None
        self.ss_key = None

    def on_send(self, world, msg):
        world.capture(msg)
        if msg.src != VICTIM:
            return
        world.drop(msg)
        fields = parse(self.p, msg.code, msg.term) or {}
        if "n_ss" in fields:
            self.nonce = fields["n_ss"]
        if "cert" in fields:
            self.ss_key = fields["cert"].pubkey
        if msg.code is _initiator_last(self.p) and self.ss_key is not None:
            world.inject(self.forge(world.now), BS, VICTIM, MsgCode.REPLY)

    def forge(self, now: float) -> Term:
        layout = LAYOUTS[self.p][MsgCode.REPLY]
        fields = {
            "ak_enc": Enc(self.ss_key, ADV_AK), "lifetime": Lifetime(86400), "seq": SeqNo(0),
            "saids": SaidList((0x2001,)), "cert": node_cert(BS), "n_ss": self.nonce,
            "n_bs": ADV_NONCE, "ts": Timestamp(now),
        }
        return build(self.p, MsgCode.REPLY, fields, signer=priv(ADV) if "sig" in layout else None)


class IdentityThiefAdversary(Adversary):
    """Eavesdrops on the victim, then joins from its own station with the victim's MAC."""

    def __init__(self, p: ProtocolId):
        super().__init__(adversary_initial())
        self.stolen: Optional[MacId] = None

    def start(self, world):
        victim_mac = world.nodes[VICTIM].mac
        if not self.knowledge.derivable(victim_mac):
            return
        self.stolen = victim_mac
        world.nodes[ADV].mac = victim_mac
        world.schedule_join(ADV, world.now)


class RelayAdversary(Adversary):
    """Man in the middle: every victim/BS message is held and re-originated later."""

    def __init__(self, p: ProtocolId, hold: float):
        super().__init__(adversary_initial())
        self.hold = hold

    def on_send(self, world, msg):
        world.capture(msg)
        if {msg.src, msg.dst} != {VICTIM, BS}:
            return
        world.drop(msg)
        world.schedule(world.now + self.hold, self._relay, world, msg)

    def _relay(self, world, msg):
        world.inject(restamp(msg.term, world.now), msg.src, msg.dst, msg.code)


class SuppressAdversary(Adversary):
    """Suppresses the victim's BS-bound messages and forwards them verbatim after ``delay``."""

    def __init__(self, p: ProtocolId, delay: float, latency: float):
        super().__init__(adversary_initial())
        self.delay, self.latency = delay, latency

    def on_send(self, world, msg):
        world.capture(msg)
        if msg.src == VICTIM and msg.dst == BS:
            world.drop(msg)
            world.inject(msg.term, VICTIM, BS, msg.code, at=msg.sent_at + self.delay - self.latency)


# -- runners ---------------------------------------------------------------

def _water_torture(p, sc, seed):
    adv = FloodAdversary(p, sc.flood_volume, sc.flood_interval)
    w = new_world(p, sc, seed, adv, budget=ResourceBudget(None, sc.cycle_time, sc.cycle_timeout))
    w.schedule_join(VICTIM, 0.0)
    w.run_until(HORIZON)
    m = metrics(w)
    triggered = m["triggered_cycles"]
    rejections = Counter(x.result for x in _injected_to(w, BS) if not _accepted(x))
    out = {"triggered_cycles": triggered, "replayed_triggers": sc.flood_volume,
           "cycles_started": m["cycles_started"], "rejections": dict(sorted(rejections.items()))}
    if triggered > sc.water_torture_threshold * sc.flood_volume:
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    return AttackOutcome(Verdict.FAILED, out, "replayed triggers rejected", worlds=[w])


def dos_world(p, sc, seed, flood: bool) -> SimWorld:
    legit = tuple(f"ss{i}" for i in range(2, sc.legit_joins + 2))
    adv = FloodAdversary(p, sc.flood_volume, sc.flood_interval) if flood else Adversary(adversary_initial())
    w = new_world(p, sc, seed, adv, stations=(VICTIM,) + legit)
    w.schedule_join(VICTIM, 0.0)
    for i, ss in enumerate(legit):
        w.schedule_join(ss, 5.0 + i * sc.join_interval)
    return w.run_until(HORIZON)


def legit_success_rate(w: SimWorld) -> float:
    joins = [j for j in w.joins if j.legit and j.ss != VICTIM]
    return sum(w.join_completed(j) for j in joins) / len(joins)


def _dos(p, sc, seed):
    base = dos_world(p, sc, seed, flood=False)
    attacked = dos_world(p, sc, seed, flood=True)
    rate, baseline = legit_success_rate(attacked), legit_success_rate(base)
    out = {"legit_success_rate": rate, "baseline_success_rate": baseline,
           "triggered_cycles": attacked.counters["triggered_cycles"],
           "overload_drops": sum(m.result == "dropped:overload" for m in attacked.messages),
           "peak_cycles": attacked.peak_cycles}
    if rate < sc.dos_threshold * baseline:
        out["success_rate_loss"] = baseline - rate
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[base, attacked])
    return AttackOutcome(Verdict.FAILED, out, "legitimate joins unaffected", worlds=[base, attacked])


def _message_replay(p, sc, seed):
    adv = ReplayAdversary(p, sc.replay_after, sc.request_gap)
    w = new_world(p, sc, seed, adv)
    w.schedule_join(VICTIM, 0.0)
    w.schedule(sc.replay_after, adv.start, w)
    w.run_until(HORIZON)
    replayed = [m for m in w.messages if m.injected and m.status == "delivered"]
    steps = [m for m in replayed if m.code is not MsgCode.TRIGGER and _accepted(m)]
    trigger_ok = any(m.code is MsgCode.TRIGGER and _accepted(m) for m in replayed)
    out = {"replays_authorized": sum(m.result == "authorized" for m in steps),
           "replayed_trigger_accepted": int(trigger_ok),
           "replayed_messages_accepted": sum(_accepted(m) for m in replayed),
           "replays_rejected": dict(sorted(Counter(m.result for m in replayed if not _accepted(m)).items()))}
    if any(m.result == "authorized" for m in steps):
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    if trigger_ok:
        return AttackOutcome(Verdict.PARTIAL, out, "only the trigger replays", worlds=[w])
    return AttackOutcome(Verdict.FAILED, out, "every replayed message rejected", worlds=[w])


def _identity_theft(p, sc, seed):
    adv = IdentityThiefAdversary(p)
    w = new_world(p, sc, seed, adv)
    w.add_ss(ADV, BS, mac=ADV_MAC, adversarial=True)
    w.schedule_join(VICTIM, 0.0)
    w.schedule(sc.replay_after, adv.start, w)
    w.run_until(HORIZON)
    hijacked = [c for _, c in w.bs_sessions()
                if c.peer == ADV and isinstance(c.session.outcome, Authorized)
                and adv.stolen is not None and c.session.peer_mac == adv.stolen]
    out = {"extracted_mac": adv.stolen.addr if adv.stolen else "", "sessions_hijacked": len(hijacked)}
    if hijacked:
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    reason = "MAC never exposed" if adv.stolen is None else "stolen MAC not provisioned"
    return AttackOutcome(Verdict.FAILED, out, reason, worlds=[w])


def _impersonation(p, sc, seed):
    adv = RogueBSAdversary(p)
    w = new_world(p, sc, seed, adv)
    w.schedule_join(VICTIM, 0.0)
    w.run_until(HORIZON)
    s = w.nodes[VICTIM].session
    fooled = isinstance(s.outcome, Authorized) and s.ak == ADV_AK
    out = {"rogue_ak_accepted": int(fooled), "ss_outcome": str(s.outcome)}
    if fooled:
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    return AttackOutcome(Verdict.FAILED, out, "forged reply rejected", worlds=[w])


def _interleaving(p, sc, seed):
    adv = RelayAdversary(p, sc.interleave_hold)
    w = new_world(p, sc, seed, adv)
    w.schedule_join(VICTIM, 0.0)
    w.run_until(HORIZON)
    delivered = [m for m in w.messages if m.status == "delivered"]
    relayed = all(m.injected for m in delivered)
    both = w.join_completed(w.joins[0])
    out = {"relayed_sessions_completed": int(both and relayed),
           "relayed_messages": sum(m.injected for m in delivered),
           "ss_outcome": str(w.nodes[VICTIM].session.outcome)}
    if both and relayed:
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    return AttackOutcome(Verdict.FAILED, out, "relayed session broke", worlds=[w])


def _suppress_replay(p, sc, seed):
    if sc.adversary_delay <= 0 or sc.adversary_delay < sc.latency:
        raise ConfigError("SuppressReplay needs an adversary delay of at least the link latency")
    adv = SuppressAdversary(p, sc.adversary_delay, sc.latency)
    w = new_world(p, sc, seed, adv, bs_offset=-sc.skew)
    w.schedule_join(VICTIM, 0.0)
    w.run_until(HORIZON)
    delayed = _injected_to(w, BS)
    stale = [m for m in delayed if _accepted(m) and sc.adversary_delay > sc.window]
    out = {"stale_accepted": len(stale), "delay": sc.adversary_delay, "skew": sc.skew,
           "rejections": dict(sorted(Counter(m.result for m in delayed if not _accepted(m)).items()))}
    if stale:
        return AttackOutcome(Verdict.SUCCESS, out, worlds=[w])
    return AttackOutcome(Verdict.FAILED, out, "delayed messages rejected as stale", worlds=[w])


_RUNNERS = {
    AttackKind.WATER_TORTURE: _water_torture,
    AttackKind.DOS: _dos,
    AttackKind.MESSAGE_REPLAY: _message_replay,
    AttackKind.IDENTITY_THEFT: _identity_theft,
    AttackKind.IMPERSONATION: _impersonation,
    AttackKind.INTERLEAVING: _interleaving,
    AttackKind.SUPPRESS_REPLAY: _suppress_replay,
}


def soundness_violations(outcome: AttackOutcome) -> list[Term]:
    bad: list[Term] = []
    for w in outcome.worlds:
        adv = w.adversary
        if adv is not None:
            bad += check_soundness(adv.knowledge, adv.initial, [m.term for m in w.messages])
    return bad


def run_attack(kind: AttackKind, p: ProtocolId, scenario: Optional[ScenarioConfig] = None) -> AttackOutcome:
    """Run ``scenario.trials`` seeded trials; the verdict is the most common one."""
    sc = scenario or ScenarioConfig()
    if p in NOT_APPLICABLE.get(kind, ()):
        return AttackOutcome(Verdict.NOT_APPLICABLE, {}, "attack does not apply")
    if kind is AttackKind.SUPPRESS_REPLAY and sc.adversary_delay <= 0:
        raise ConfigError("SuppressReplay needs a positive adversary delay")
    trials = []
    for i in range(sc.trials):
        outcome = _RUNNERS[kind](p, sc, sc.seed + i)
        bad = soundness_violations(outcome)
        if bad:
            raise UnsoundTrace(f"{kind.value}/{p.value}: adversary knows {bad[:3]}")
        trials.append(outcome)
    votes = Counter(o.verdict for o in trials)
    verdict = max(votes, key=lambda v: (votes[v], -[o.verdict for o in trials].index(v)))
    first = next(o for o in trials if o.verdict is verdict)
    if sc.trials > 1:
        first.metrics = {**first.metrics, "trials": sc.trials, "agreeing_trials": votes[verdict]}
    return first
