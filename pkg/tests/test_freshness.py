from hypothesis import given
from hypothesis import strategies as st

from pkmsim.freshness import (
    SECONDS_PER_DAY, TimestampTable, ValidationWindow, WindowResult, table_memory_bytes, validate_window,
)

DAY = SECONDS_PER_DAY


def test_empty_table_memory():
    assert table_memory_bytes(TimestampTable()) == 0


def test_1500_records_is_6000_bytes():
    t = TimestampTable()
    for i in range(1500):
        t = t.record("ss1", float(i), 1500.0)
    assert len(t) == 1500
    assert table_memory_bytes(t) == 6000


def test_prune_then_count():
    # 3 of 10 records are older than the 15-day retention at now
    now = 20 * DAY
    t = TimestampTable()
    stamps = [now - 16 * DAY, now - 17 * DAY, now - 15 * DAY] + [now - i * DAY for i in range(7)]
    for ts in stamps:
        t = TimestampTable(records=t.records | {("ss1", ts)})
    assert table_memory_bytes(t, now) == 7 * 4


def test_contains_after_record():
    t = TimestampTable().record("a", 5.0, 5.0)
    assert t.contains("a", 5.0)
    assert not t.contains("b", 5.0)


def test_window_examples():
    w = ValidationWindow(10)
    r, w2 = validate_window(100.0, 100.0, w, "ss1")
    assert r is WindowResult.ACCEPT
    assert validate_window(100.0 - 10 - 1, 100.0, w, "ss1")[0] is WindowResult.STALE
    assert validate_window(100.0, 103.0, w2, "ss1")[0] is WindowResult.DUPLICATE


def test_window_boundary_inclusive():
    w = ValidationWindow(10)
    assert validate_window(90.0, 100.0, w, "a")[0] is WindowResult.ACCEPT
    assert validate_window(110.0, 100.0, w, "a")[0] is WindowResult.ACCEPT
    assert validate_window(89.999, 100.0, w, "a")[0] is WindowResult.STALE


@given(st.lists(st.floats(0, 1e6, allow_nan=False), unique=True, max_size=40))
def test_table_growth_within_retention(stamps):
    t = TimestampTable()
    now = max(stamps, default=0.0)
    for ts in stamps:
        t = t.record("s", ts, now)
    assert len(t) == len(stamps)


@given(st.lists(st.tuples(st.floats(0, 1000), st.floats(-20, 20)), max_size=50), st.floats(1, 30))
def test_window_cache_never_older_than_width(events, width):
    w = ValidationWindow(width)
    now = 0.0
    for dt, lag in events:
        now += dt
        _, w = validate_window(now - lag, now, w, "s")
        assert all(now - ts <= width for _, ts in w.cache)
