import pytest
from hypothesis import given
from hypothesis import strategies as st

from pkmsim.knowledge import DYViolation
from pkmsim.netsim import (
    Adversary, Capture, Delay, Drop, Inject, NetConfig, ResourceBudget, SimWorld, metrics, run_until,
)
from pkmsim.protocol import ALL_PROTOCOLS, Authorized, MsgCode, ProtocolId, honest_transcript
from pkmsim.term import (
    AuthKey, Capabilities, Enc, Lifetime, SaidList, SeqNo, Tuple, encode_size, pub,
)

P = ProtocolId


def world(p, adversary=None, seed=1, **cfg):
    w = SimWorld(NetConfig(p, **cfg), seed, adversary)
    w.add_bs("bs")
    w.add_ss("ss1", "bs")
    return w


def test_empty_queue_advances_time():
    w = SimWorld(NetConfig(P.PKMV1))
    run_until(w, 5.0)
    assert w.now == 5.0 and w.trace == []


def test_cannot_run_backwards():
    w = SimWorld(NetConfig(P.PKMV1)).run_until(5.0)
    with pytest.raises(ValueError):
        w.run_until(4.0)


def test_honest_pkmv1_join():
    w = world(P.PKMV1)
    w.schedule_join("ss1", 0.0)
    w.run_until(10.0)
    assert w.join_completed(w.joins[0])
    m = metrics(w)
    assert m["completed_auths"] == 1 and m["rejected_requests"] == 0


@pytest.mark.parametrize("p", ALL_PROTOCOLS)
def test_simulated_bytes_match_transcript(p):
    w = world(p)
    w.schedule_join("ss1", 0.0)
    w.run_until(30.0)
    expected = sum(encode_size(t) for _, t in honest_transcript(p)[0])
    assert metrics(w)["bytes_sent"] == expected


@pytest.mark.parametrize("p", ALL_PROTOCOLS)
def test_same_seed_same_trace(p):
    def run():
        w = world(p, Adversary(), seed=7)
        w.schedule_join("ss1", 0.0)
        return w.run_until(30.0).trace
    assert run() == run()


def test_capture_pkmv2_request():
    adv = Adversary()
    w = world(P.PKMV2, adv)
    w.schedule_join("ss1", 0.0)
    w.run_until(30.0)
    req = next(m for m in w.messages if m.code is MsgCode.REQUEST)
    for part in req.term.parts:
        assert part in adv.knowledge.analyzed
    assert all(m.status == "delivered" for m in w.messages)


class Silent(Adversary):
    def on_send(self, world, msg):
        pass


def test_interpose_actions():
    adv = Silent()
    w = world(P.PKMV1, adv)
    w.schedule_join("ss1", 0.0)
    w.run_until(0.1)
    trig = w.messages[0]
    w.interpose(Delay(trig.id, 0))
    assert trig.deliver_at == 1.0
    w.interpose(Capture(trig.id))
    assert trig.term in adv.knowledge.analyzed
    w.interpose(Delay(trig.id, 2.5))
    assert trig.deliver_at == 3.5
    w.run_until(0.6)
    request = w.messages[1]
    w.interpose(Drop(request.id))
    w.run_until(3.0)
    assert trig.status == "in_flight"
    w.run_until(20)
    assert trig.status == "delivered" and request.status == "dropped"


def test_inject_underivable_ak_is_an_error():
    adv = Adversary()
    w = world(P.PKMV1, adv)
    reply = Tuple([Enc(pub("ss1"), AuthKey("ak-secret")), Lifetime(1), SeqNo(0), SaidList((1,))])
    # the reply itself is fine to build (public key), but only if AK is known
    with pytest.raises(DYViolation):
        w.interpose(Inject(Tuple([AuthKey("ak-secret")]), "ss1", "bs", MsgCode.REPLY))
    assert adv.knowledge.derivable(reply) is False


def test_inject_without_adversary():
    w = world(P.PKMV1)
    with pytest.raises(RuntimeError):
        w.inject(Capabilities(1), "bs", "ss1", MsgCode.REPLY)


def test_budget_validation():
    with pytest.raises(ValueError):
        ResourceBudget(overload="explode")


class Chaos(Adversary):
    """Drops or delays messages per a fixed plan."""

    def __init__(self, plan):
        super().__init__()
        self.plan = plan

    def on_send(self, world, msg):
        world.capture(msg)
        action = self.plan[msg.id % len(self.plan)] if self.plan else 0
        if action == 1:
            world.drop(msg)
        elif action > 1:
            world.delay(msg, float(action))


@given(st.sampled_from(ALL_PROTOCOLS), st.lists(st.integers(0, 20), max_size=8),
       st.integers(1, 6), st.floats(1, 200))
def test_conservation(p, plan, joins, horizon):
    w = SimWorld(NetConfig(p), 3, Chaos(plan))
    w.add_bs("bs")
    for i in range(joins):
        w.add_ss(f"ss{i}", "bs")
        w.schedule_join(f"ss{i}", float(i))
    w.run_until(horizon)
    acct = w.accounting()
    assert sum(acct.values()) == len(w.messages)
    assert set(acct) <= {"delivered", "dropped", "in_flight"}
    sends = [line for line in w.trace if line.split(" | ")[1] in ("send", "inject")]
    assert len(sends) == len(w.messages)
    for m in w.messages:
        if m.status == "in_flight":
            assert m.deliver_at > horizon


class Flood(Adversary):
    def __init__(self, n):
        super().__init__()
        self.n = n

    def on_send(self, world, msg):
        world.capture(msg)
        if msg.code is MsgCode.TRIGGER and msg.src == "ss0" and self.n:
            for i in range(self.n):
                world.inject(msg.term, "ss0", "bs", MsgCode.TRIGGER, at=world.now + 1 + i * 0.25)
            self.n = 0


@given(st.sampled_from([P.PKMV1, P.PKMV2]), st.integers(1, 5), st.integers(0, 40),
       st.sampled_from(["drop", "queue"]))
def test_budget_never_exceeded(p, limit, flood, overload):
    budget = ResourceBudget(limit, overload=overload)
    w = SimWorld(NetConfig(p, budget=budget), 5, Flood(flood))
    w.add_bs("bs")
    for i in range(6):
        w.add_ss(f"ss{i}", "bs")
        w.schedule_join(f"ss{i}", float(i))
    w.run_until(400)
    assert w.peak_cycles <= limit
    for line in w.trace:
        if line.split(" | ")[1] == "cycle":
            assert int(line.rsplit("=", 1)[1]) <= limit


def test_queue_mode_serves_later():
    budget = ResourceBudget(1, overload="queue")
    w = SimWorld(NetConfig(P.PKMV1, budget=budget), 1)
    w.add_bs("bs")
    for i in range(3):
        w.add_ss(f"ss{i}", "bs")
        w.schedule_join(f"ss{i}", 0.0)
    w.run_until(60)
    assert all(w.join_completed(j) for j in w.joins)
    assert any(line.endswith("| queued") for line in w.trace)


class DropRequests(Adversary):
    def on_send(self, world, msg):
        if msg.code is MsgCode.REQUEST and msg.src == "ss1":
            world.drop(msg)


def test_timeout_frees_slot():
    budget = ResourceBudget(1, cycle_timeout=5.0)
    w = SimWorld(NetConfig(P.PKMV1, budget=budget), 1, DropRequests())
    w.add_bs("bs")
    w.add_ss("ss1", "bs")
    w.add_ss("ss2", "bs")
    w.schedule_join("ss1", 0.0)
    w.schedule_join("ss2", 2.0)
    w.schedule_join("ss2", 8.0)
    w.run_until(30)
    assert metrics(w)["timed_out_cycles"] == 1
    first, second = w.joins[1:]
    assert not w.join_completed(first)
    assert w.join_completed(second)
    assert any("dropped:overload" in line for line in w.trace)


def test_authorized_outcome_at_both_ends():
    w = world(P.HA)
    w.schedule_join("ss1", 0.0)
    w.run_until(20)
    (_, cycle), = w.bs_sessions()
    assert isinstance(cycle.session.outcome, Authorized)
    assert cycle.session.ak == w.nodes["ss1"].session.ak
