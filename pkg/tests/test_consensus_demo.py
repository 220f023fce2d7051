import pytest

from asyncpay.consensus_demo import (FAIL, SUCCESS, ChannelObject, CounterexampleFound, World,
                                     atomic_channel_op, explore_all_schedules, propose)


@pytest.mark.parametrize("kind", ["bidirectional", "unidirectional"])
def test_every_schedule_decides_one_proposal(kind):
    report = explore_all_schedules(kind)
    assert report.ok, report.summary()
    assert report.final_b == {1, 2}
    # counts frozen from the exploration (6 steps for p1, 5 for p2)
    assert report.schedules == 462
    assert report.crash_schedules == 1714


def test_first_close_wins():
    # p1 closes first: b ends with 2, everyone decides p1's value
    order = [1, 1, 1, 2, 2] + [1, 1, 1] + [2, 2, 2]
    assert propose("bidirectional", order) == {1: "v1", 2: "v1"}
    # p2 closes first: b ends with 1
    order = [2, 2, 1, 1, 1] + [2, 2, 2, 1, 1, 1]
    assert propose("unidirectional", order) == {1: "v2", 2: "v2"}


def test_solo_runs_decide_own_value():
    assert propose("bidirectional", [1] * 6) == {1: "v1"}
    assert propose("unidirectional", [2] * 5) == {2: "v2"}


def test_object_semantics():
    uni, bi = ChannelObject("unidirectional"), ChannelObject("bidirectional")
    w = World()
    assert uni.transfer(w, 2, 1) == (w, None)
    assert bi.transfer(w, 2, 1)[0].channel == (2, 0)
    w2, r = uni.target_close(w, 2)
    assert r == FAIL and w2 == w
    w2, r = uni.target_close(w, 1)
    assert r == SUCCESS and w2.A == (1, 1) and w2.channel is None
    assert uni.source_close(w2, 0)[1] == FAIL
    assert atomic_channel_op(uni, w, 2, "close", 1)[1] == FAIL
    assert atomic_channel_op(bi, w, 1, "source_close", 1)[1] == FAIL
    with pytest.raises(ValueError):
        ChannelObject("triangular")


def test_broken_object_is_caught():
    report = explore_all_schedules("bidirectional", "close_keeps_channel")
    assert not report.ok
    assert {what for what, _ in report.violations} >= {"agreement"}
    with pytest.raises(CounterexampleFound):
        explore_all_schedules("unidirectional", "close_keeps_channel", raise_on_violation=True)


def test_skipping_balance_check_is_harmless_here():
    # the programs only close with amounts they are owed, so this bug is invisible
    assert explore_all_schedules("bidirectional", "close_skips_balance_check").ok
