import time

from syncbft.adversary import FOLLOW, SILENCE, Action, action_menu
from syncbft.exhaustive import explore
from syncbft.simnet import AGREEMENT, CERT_UNIQUENESS, exhaustive_small


def test_menu_is_discretized_and_small():
    menu = action_menu(3)
    assert menu[0] == FOLLOW and menu[1] == SILENCE
    assert len(menu) == 6
    assert Action("equivocate") in menu


def test_n3_full_enumeration_is_safe_and_fast():
    t0 = time.perf_counter()
    v = explore(n=3, iterations=3)
    assert v.complete
    assert v.ok, v.violations[:1]
    assert v.leaves > 0 and v.branches >= v.leaves
    assert time.perf_counter() - t0 < 60


def test_enumerator_finds_bug_when_equivocation_check_disabled():
    v = explore(n=3, iterations=3, detect_equivocation=False, stop_at_first=True)
    assert not v.ok
    viol, path = v.violations[0]
    assert viol.prop in (AGREEMENT, CERT_UNIQUENESS)
    assert path


def test_no_faults_single_branch():
    v = exhaustive_small(n=1, iterations=2)
    assert v.ok
    assert v.leaves == 1 and v.branches == 4


def test_budget_marks_incomplete():
    v = explore(n=3, iterations=3, budget=10)
    assert not v.complete
