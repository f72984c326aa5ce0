import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.xft import (
    MaxStall,
    RandomStall,
    ReignState,
    compare,
    format_table,
    naive_worst_case,
    pick_followers,
    quadratic_fit,
    reign_step,
    total_view_changes,
    view_change_bound,
)


def test_pick_followers_skips_leader_and_marked():
    assert pick_followers(0, 5, 2, set()) == (1, 2)
    assert pick_followers(1, 5, 2, {2}) == (0, 3)
    assert pick_followers(3, 5, 2, {0}, keep=(4,)) == (1, 4)


def test_honest_leader_swaps_out_withholding_follower():
    st_ = ReignState(2, (0, 1))
    st_, out = reign_step(st_, 5, 2, frozenset({0, 1}), MaxStall())
    assert not out.progress and out.detected == 0
    assert st_.followers == (1, 3)
    st_, out = reign_step(st_, 5, 2, frozenset({0, 1}), MaxStall())
    assert out.detected == 1 and st_.followers == (3, 4)
    st_, out = reign_step(st_, 5, 2, frozenset({0, 1}), MaxStall())
    assert out.progress


@pytest.mark.parametrize("n,expected", [(3, 3), (5, 8), (7, 15), (9, 24), (19, 99)])
def test_max_stall_hits_the_bound_exactly(n, expected):
    f = (n - 1) // 2
    run = total_view_changes(n, f)
    assert run.view_changes == expected == view_change_bound(f)
    assert run.leaders_deposed == f
    assert run.progress_tail


def test_no_faults_no_view_changes():
    assert total_view_changes(5, 2, corrupted=()).view_changes == 0


def test_too_many_corrupted_rejected():
    with pytest.raises(ValueError):
        total_view_changes(5, 2, corrupted=(0, 1, 2))


@given(st.integers(0, 10_000), st.sampled_from([5, 9, 19]), st.floats(0.1, 1.0))
@settings(max_examples=60, deadline=None)
def test_random_stalls_stay_within_bound(seed, n, p):
    f = (n - 1) // 2
    bad = frozenset(random.Random(seed).sample(range(n), f))
    run = total_view_changes(n, f, bad, RandomStall(seed, p))
    assert run.view_changes <= view_change_bound(f)


def test_naive_search_count():
    assert naive_worst_case(5, 2) == math.comb(5, 3) - 1 == 9
    assert naive_worst_case(19, 9) == math.comb(19, 10) - 1


def test_quadratic_fit_recovers_exact_polynomial():
    fs = [1, 2, 3, 4, 9]
    coef, r2 = quadratic_fit(fs, [f * f + 2 * f for f in fs])
    assert coef == pytest.approx([1, 2, 0], abs=1e-9)
    assert r2 == pytest.approx(1.0)


def test_comparison_table_rows():
    rows = compare([5])
    by = {r.variant: r for r in rows}
    assert by["xft-reigns"].view_changes == 8
    assert by["xft-naive"].view_changes == 9
    assert by["stable-leader"].view_changes <= 2
    text = format_table(rows)
    assert "stable-leader" in text and text.splitlines()[0].split()[0] == "n"
