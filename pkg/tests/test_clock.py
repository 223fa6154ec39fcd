import pytest
from hypothesis import given
from hypothesis import strategies as st

from pkmsim.clock import ClockState, SyncPolicy, UnknownNodeError, error, node_now, resync, resync_all, skew


def clock(offset=0.0, drift=0.0, residual=0.0, t=0.0):
    return ClockState(policy=SyncPolicy(post_resync_residual=residual)).register("n", offset, drift).advance(t)


@pytest.mark.parametrize("offset,drift,expected", [(0, 0, 1000), (5, 0, 1005), (0, 0.001, 1001)])
def test_node_now(offset, drift, expected):
    assert node_now(clock(offset, drift, t=1000), "n") == pytest.approx(expected)


def test_unknown_node():
    with pytest.raises(UnknownNodeError):
        node_now(ClockState(), "ghost")
    with pytest.raises(UnknownNodeError):
        resync(ClockState(), "ghost")


def test_perfect_resync():
    assert error(resync(clock(30), "n"), "n") == 0


def test_resync_clamps_and_keeps_sign():
    assert error(resync(clock(30, residual=1), "n"), "n") == 1
    assert error(resync(clock(-30, residual=1), "n"), "n") == -1
    assert error(resync(clock(0.5, residual=1), "n"), "n") == 0.5


def test_resync_idempotent_at_zero():
    c = resync(clock(0), "n")
    assert error(c, "n") == 0


def test_drift_restarts_after_resync():
    c = resync(clock(0, 0.01, t=100), "n")
    assert error(c, "n") == 0
    assert error(c.advance(200), "n") == pytest.approx(1.0)


def test_policy_validation():
    with pytest.raises(ValueError):
        SyncPolicy(post_resync_residual=-1)
    with pytest.raises(ValueError):
        SyncPolicy(resync_interval=0)
    with pytest.raises(ValueError):
        ClockState().register("n", 0, -1)


@given(st.floats(-100, 100), st.floats(-0.5, 0.5), st.floats(0, 1e5), st.floats(0, 1e5))
def test_monotone(offset, drift, t1, t2):
    lo, hi = sorted((t1, t2))
    c = clock(offset, drift)
    assert node_now(c.advance(lo), "n") <= node_now(c.advance(hi), "n") + 1e-9


@given(st.floats(0, 1e5))
def test_synchronized_clocks_agree(t):
    c = ClockState().register("a").register("b").advance(t)
    assert node_now(c, "a") == node_now(c, "b") == t


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-0.1, 0.1), st.floats(0, 1e4))
def test_skew_zero_after_perfect_resync(oa, ob, drift, t):
    c = ClockState().register("a", oa, drift).register("b", ob).advance(t)
    assert skew(resync_all(c), "a", "b") == pytest.approx(0, abs=1e-9)


@given(st.floats(-1e3, 1e3), st.floats(0, 50), st.floats(-0.1, 0.1), st.floats(0, 1e4))
def test_resync_bound(offset, residual, drift, t):
    c = resync(clock(offset, drift, residual, t), "n")
    assert abs(error(c, "n")) <= residual + 1e-9
    assert c.nodes["n"].drift == drift
