from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pkmsim.attacks import (
    ADV_AK, NOT_APPLICABLE, AttackKind, AttackOutcome, FloodAdversary, Verdict, new_world, restamp,
    run_attack, soundness_violations,
)
from pkmsim.config import ScenarioConfig
from pkmsim.matrix import EXPECTED_MATRIX
from pkmsim.netsim import ResourceBudget
from pkmsim.protocol import ALL_PROTOCOLS, ConfigError, MsgCode, ProtocolId, honest_transcript
from pkmsim.term import Nonce, Timestamp, Tuple

P = ProtocolId
A = AttackKind
CELLS = [(a, p) for a in AttackKind for p in ALL_PROTOCOLS]


@pytest.fixture(scope="module")
def outcomes():
    return {(a, p): run_attack(a, p) for a, p in CELLS}


@pytest.mark.parametrize("a,p", CELLS, ids=[f"{a.value}-{p.value}" for a, p in CELLS])
def test_cell_matches_expected(outcomes, a, p):
    assert outcomes[(a, p)].verdict is EXPECTED_MATRIX[a][p][0]


@pytest.mark.parametrize("a,p", CELLS, ids=[f"{a.value}-{p.value}" for a, p in CELLS])
def test_trace_is_dolev_yao_sound(outcomes, a, p):
    assert soundness_violations(outcomes[(a, p)]) == []


def test_not_applicable_pairs_are_exact(outcomes):
    na = {(a, p) for (a, p), o in outcomes.items() if o.verdict is Verdict.NOT_APPLICABLE}
    assert na == {(a, p) for a, ps in NOT_APPLICABLE.items() for p in ps}


def test_identity_theft_examples(outcomes):
    o = outcomes[(A.IDENTITY_THEFT, P.PKMV2)]
    assert o.metrics["extracted_mac"] == "02:00:00:00:00:01"
    assert o.metrics["sessions_hijacked"] == 1
    isnap = outcomes[(A.IDENTITY_THEFT, P.ISNAP)]
    assert isnap.verdict is Verdict.FAILED and isnap.metrics["extracted_mac"] == ""


def test_impersonation_hands_over_adversary_key(outcomes):
    o = outcomes[(A.IMPERSONATION, P.PKMV1)]
    ss = o.worlds[0].nodes["ss1"].session
    assert ss.ak == ADV_AK


def test_water_torture_counts(outcomes):
    for p in (P.PKMV1, P.PKMV2, P.TSA, P.HA):
        assert outcomes[(A.WATER_TORTURE, p)].metrics["triggered_cycles"] == 100
    isnap = outcomes[(A.WATER_TORTURE, P.ISNAP)].metrics
    assert isnap["triggered_cycles"] == 0
    assert set(isnap["rejections"]) == {"rejected:DuplicateInWindow", "rejected:StaleTimestamp"}


@pytest.mark.parametrize("lead,interval,reason", [
    (2.0, 0.05, "rejected:DuplicateInWindow"),
    (30.0, 1.0, "rejected:StaleTimestamp"),
])
def test_isnap_flood_regimes(lead, interval, reason):
    adv = FloodAdversary(P.ISNAP, 20, interval, lead=lead)
    w = new_world(P.ISNAP, ScenarioConfig(), 1, adv, budget=ResourceBudget(None))
    w.schedule_join("ss1", 0.0)
    w.run_until(200)
    results = {m.result for m in w.messages if m.injected}
    assert results == {reason}
    assert w.counters["triggered_cycles"] == 0


def test_message_replay_partial_is_trigger_only(outcomes):
    m = outcomes[(A.MESSAGE_REPLAY, P.PKMV2)].metrics
    assert m["replayed_trigger_accepted"] == 1 and m["replays_authorized"] == 0
    assert outcomes[(A.MESSAGE_REPLAY, P.PKMV1)].metrics["replays_authorized"] >= 1


def test_dos_rates(outcomes):
    for p in (P.PKMV1, P.PKMV2, P.TSA, P.HA):
        m = outcomes[(A.DOS, p)].metrics
        assert m["legit_success_rate"] < 0.5 * m["baseline_success_rate"]
    m = outcomes[(A.DOS, P.ISNAP)].metrics
    assert m["legit_success_rate"] == m["baseline_success_rate"] == 1.0


def test_isnap_suppress_replay_masked_by_skew():
    sc = replace(ScenarioConfig(), isnap_resync_interval=None)
    # d=30, w=10: masking needs o >= 20
    assert run_attack(A.SUPPRESS_REPLAY, P.ISNAP, replace(sc, skew=20)).verdict is Verdict.SUCCESS
    assert run_attack(A.SUPPRESS_REPLAY, P.ISNAP, replace(sc, skew=19)).verdict is Verdict.FAILED
    # resynchronization undoes the skew
    assert run_attack(A.SUPPRESS_REPLAY, P.ISNAP, replace(ScenarioConfig(), skew=30)).verdict is Verdict.FAILED


@settings(max_examples=25)
@given(st.sampled_from([P.TSA, P.HA, P.ISNAP]), st.integers(1, 60), st.integers(-10, 80))
def test_suppress_replay_rule(p, d, o):
    sc = replace(ScenarioConfig(), adversary_delay=float(d), skew=float(o), isnap_resync_interval=None)
    verdict = run_attack(A.SUPPRESS_REPLAY, p, sc).verdict
    masked = d > sc.window and abs(d - o) <= sc.window
    assert (verdict is Verdict.SUCCESS) == masked


def test_suppress_replay_zero_delay_is_config_error():
    with pytest.raises(ConfigError):
        run_attack(A.SUPPRESS_REPLAY, P.TSA, replace(ScenarioConfig(), adversary_delay=0.0))


def test_success_needs_a_supporting_metric():
    with pytest.raises(ValueError):
        AttackOutcome(Verdict.SUCCESS, {"triggered_cycles": 0})
    AttackOutcome(Verdict.FAILED, {})


def test_restamp_leaves_signed_timestamps():
    transcript, _, _ = honest_transcript(P.ISNAP)
    trigger = transcript[0][1]
    assert restamp(trigger, 99.0) == trigger
    unsigned = Tuple([Nonce(1), Timestamp(0.0)])
    assert restamp(unsigned, 99.0) == Tuple([Nonce(1), Timestamp(99.0)])


def test_trials_vote():
    o = run_attack(A.IMPERSONATION, P.TSA, replace(ScenarioConfig(), trials=3))
    assert o.verdict is Verdict.SUCCESS
    assert o.metrics["agreeing_trials"] == 3


def test_interleaving_relays_every_message(outcomes):
    w = outcomes[(A.INTERLEAVING, P.PKMV2)].worlds[0]
    delivered = [m for m in w.messages if m.status == "delivered"]
    assert delivered and all(m.injected for m in delivered)
    assert {m.code for m in delivered} == set(MsgCode)
