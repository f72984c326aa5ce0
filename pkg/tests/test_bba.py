import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.adversary import ConfigError, RandomStrategy, SilentStrategy, build_strategy
from syncbft.bba import (
    BOTTOM,
    DEFAULT,
    LeaderOracle,
    agreement_run,
    analytic_mean_rounds,
    broadcast_run,
    check_resilience,
    expected_round_measure,
    most_frequent,
)


def test_resilience_check():
    check_resilience(5, 2)
    check_resilience(4, 1)
    with pytest.raises(ConfigError):
        check_resilience(4, 2)


def test_oracle_draws_are_stable_and_seeded():
    a = LeaderOracle(7, "random", 3)
    b = LeaderOracle(7, "random", 3)
    first = [a.draw(k) for k in range(1, 20)]
    assert first == [b.draw(k) for k in range(1, 20)]
    assert a.draw(5) == first[4]
    assert [LeaderOracle(3, "round-robin").draw(k) for k in (1, 2, 3, 4)] == [0, 1, 2, 0]
    assert LeaderOracle(3, "scripted", script=[2, 1]).draw(3) == 2
    with pytest.raises(ConfigError):
        LeaderOracle(3, "scripted")
    with pytest.raises(ConfigError):
        LeaderOracle(3, "coin")


def test_most_frequent_rules():
    assert most_frequent([b"b", b"a", b"b", None]) == b"b"
    assert most_frequent([b"b", b"a"]) == b"a"
    assert most_frequent([BOTTOM, None]) == DEFAULT


def test_analytic_values():
    assert analytic_mean_rounds(5) == pytest.approx(20 / 3)
    assert analytic_mean_rounds(101) == pytest.approx(4 * 101 / 51)
    assert analytic_mean_rounds(1) == 4


@given(st.integers(0, 10_000), st.sampled_from([3, 5, 7]))
@settings(max_examples=40, deadline=None)
def test_rounds_equal_four_times_first_honest_leader(seed, n):
    # geometric oracle per run: the commit round of iteration I is round 4I
    f = (n - 1) // 2
    bad = tuple(sorted(random.Random(seed).sample(range(n), f)))
    sender = next(i for i in range(n) if i not in bad)
    oracle = LeaderOracle(n, "random", seed)
    res = broadcast_run(n, f, sender, b"x", oracle, seed=seed, strategy=SilentStrategy(bad),
                        stop_when_committed=True)
    assert res.verdict.ok
    first_honest = next(k for k in range(1, 500) if oracle.draw(k) not in bad)
    assert res.rounds == 4 * first_honest
    assert res.honest_at_propose.index(True) == first_honest - 1


def test_mean_rounds_match_geometric_oracle_at_n5():
    mean = expected_round_measure(5, 600, seed=11)
    # std of 4*Geom(3/5) is about 4.2, so 600 runs give a standard error near 0.17
    assert abs(mean - 20 / 3) < 0.7


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_honest_sender_value_is_decided_under_any_adversary(seed):
    rng = random.Random(seed)
    bad = tuple(sorted(rng.sample(range(5), 2)))
    sender = next(i for i in range(5) if i not in bad)
    res = broadcast_run(5, 2, sender, b"payload", seed=seed, strategy=RandomStrategy(bad))
    assert res.verdict.ok, res.verdict.summary()
    assert {d[0] for d in res.decisions.values()} == {b"payload"}


def test_corrupted_sender_still_gives_agreement():
    for seed in range(20):
        res = broadcast_run(5, 2, 0, b"v", seed=seed, strategy=build_strategy("equivocate", (0, 1)))
        assert res.verdict.ok
        assert len({d[0] for d in res.decisions.values()}) == 1


@given(st.integers(0, 10_000), st.sampled_from([3, 5]))
@settings(max_examples=20, deadline=None)
def test_strong_unanimity(seed, n):
    f = (n - 1) // 2
    bad = tuple(sorted(random.Random(seed).sample(range(n), f)))
    res = agreement_run([b"same"] * n, f, seed=seed, strategy=RandomStrategy(bad))
    assert res.verdict.ok, res.verdict.summary()
    assert set(res.decisions.values()) == {b"same"}


def test_agreement_with_mixed_inputs_agrees():
    res = agreement_run([b"a", b"b", b"a", b"c", b"b"], 2, seed=4, strategy=RandomStrategy((3, 4)))
    assert res.verdict.ok
    assert len(set(res.decisions.values())) == 1


def test_lazy_candidates_change_only_the_work():
    for seed in range(15):
        bad = tuple(sorted(random.Random(seed).sample(range(9), 4)))
        sender = next(i for i in range(9) if i not in bad)
        runs = [broadcast_run(9, 4, sender, b"x", LeaderOracle(9, "random", seed), seed=seed,
                              strategy=SilentStrategy(bad), stop_when_committed=True, lazy_candidates=lazy)
                for lazy in (False, True)]
        assert runs[0].rounds == runs[1].rounds
        assert runs[0].decisions == runs[1].decisions
