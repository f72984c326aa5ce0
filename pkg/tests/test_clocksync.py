from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import syncbft.clocksync as cs
from syncbft.clocksync import (
    ClockParams,
    ClockReplica,
    ClockSim,
    DayQuorum,
    DelayPlan,
    LocalClock,
    Plan,
    best_case,
    random_assignment,
    round_fit,
    suppression_check,
)
from syncbft.crypto import Keyring
from syncbft.wire import NewDayMsg, SyncMsg, Validator


def test_local_clock_read_and_when_are_inverse():
    c = LocalClock(Fraction(101, 100), 1000)
    c.set(Fraction(3), Fraction(500))
    assert c.read(Fraction(103)) == 601
    assert c.when(Fraction(601)) == 103
    assert c.day == 0
    c.set(Fraction(10), Fraction(2000))
    assert c.day == 2


def test_round_length_is_two_delta_plus_drift():
    p = ClockParams(5, 2, delta=2, day_length=1000)
    assert p.drift == 10
    assert p.round_length == 14


def test_suppression_rules():
    q = DayQuorum(1, syncs={0: None, 1: None, 2: None})
    assert not suppression_check(q, 2)
    q.syncs.update({3: None, 4: None})
    assert suppression_check(q, 2)
    q2 = DayQuorum(1, syncs={0: None}, new_days={1, 2})
    assert not suppression_check(q2, 2)
    q2.new_days.add(3)
    assert suppression_check(q2, 2)


def _replica(n=5, f=2):
    ring = Keyring(n)
    p = ClockParams(n, f)
    rep = ClockReplica(0, p, ring.signer(0), Validator(n, f, ring), LocalClock(Fraction(1), 1000))
    return ring, rep


def test_f_syncs_do_not_start_a_day():
    ring, rep = _replica()
    for i in (3, 4):
        rep.absorb(SyncMsg.create(ring.signer(i), 1))
    assert rep.decide(Fraction(5)) is None
    rep.absorb(SyncMsg.create(ring.signer(2), 1))
    day, nd, suppressed = rep.decide(Fraction(5))
    assert day == 1 and not suppressed
    assert [s.signer for s in nd.syncs] == [2, 3, 4]
    assert rep.clock.read(Fraction(5)) == 1000


def test_forged_or_duplicate_syncs_do_not_count():
    ring, rep = _replica()
    s = SyncMsg.create(ring.signer(3), 1)
    rep.absorb(s)
    rep.absorb(s)
    rep.absorb(SyncMsg(1, 4, s.sig))
    assert len(rep.quorum(1).syncs) == 1


def test_new_day_alone_starts_the_day():
    ring, rep = _replica()
    syncs = tuple(SyncMsg.create(ring.signer(i), 2) for i in (1, 2, 3))
    rep.absorb(NewDayMsg.create(ring.signer(4), 2, syncs))
    day, nd, suppressed = rep.decide(Fraction(7))
    assert day == 2 and nd is not None


def test_highest_ready_day_wins_and_old_days_are_ignored():
    ring, rep = _replica()
    for d in (1, 2):
        for i in (1, 2, 3):
            rep.absorb(SyncMsg.create(ring.signer(i), d))
    assert rep.decide(Fraction(1))[0] == 2
    rep.absorb(SyncMsg.create(ring.signer(4), 1))
    assert 1 not in rep.quorums


def test_future_syncs_from_corrupted_replicas_are_ignored():
    sim = ClockSim(ClockParams(5, 2, days=2), seed=3, corrupted=(0, 1), plan=Plan.FUTURE)
    run = sim.run()
    assert run.verdict.ok, run.verdict.summary()


@pytest.mark.parametrize("plan", list(Plan))
def test_every_adversary_plan_keeps_skew_within_delta(plan):
    for seed in range(5):
        sim = ClockSim(ClockParams(7, 3, days=3), seed=seed, corrupted=(0, 1, 2), plan=plan,
                       delays=DelayPlan.SPLIT if seed % 2 else DelayPlan.RANDOM)
        run = sim.run()
        assert run.verdict.ok, (plan, seed, run.verdict.summary())
        assert all(s <= 1 for s in run.skews)


def test_early_syncs_from_f_corrupted_cannot_open_a_day():
    sim = ClockSim(ClockParams(5, 2, days=3), seed=1, corrupted=(0, 1), plan=Plan.EARLY)
    run = sim.run()
    assert run.verdict.ok
    honest_first = min(sim.starts[1].values())
    assert honest_first > 900


@given(st.integers(0, 2 ** 31), st.sampled_from([3, 5, 7, 9]))
@settings(max_examples=40, deadline=None)
def test_random_assignments_keep_skew_within_delta(seed, n):
    sim = random_assignment(n, (n - 1) // 2, seed)
    run = sim.run()
    assert run.verdict.ok, run.verdict.summary()
    assert max(run.skews) <= sim.p.delta


@pytest.mark.parametrize("n", [3, 5, 9])
def test_best_case_sends_no_new_day(n):
    run = best_case(n, (n - 1) // 2, seed=n).run()
    assert run.verdict.ok
    assert run.new_days == 0
    assert run.suppressed == n * 3


def test_round_fit_detects_overlong_skew():
    p = ClockParams(3, 1)
    rates = {0: Fraction(1), 1: Fraction(1)}
    assert round_fit(p, {0: Fraction(0), 1: Fraction(1)}, rates)
    assert not round_fit(p, {0: Fraction(0), 1: Fraction(13)}, rates)


def test_mutant_that_always_suppresses_breaks_skew(monkeypatch):
    monkeypatch.setattr(cs, "suppression_check", lambda q, f: True)
    failures = sum(not random_assignment(5, 2, seed).run().verdict.ok for seed in range(100))
    assert failures > 0
