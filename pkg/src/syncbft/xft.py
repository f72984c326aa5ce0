"""Leader reigns with self-picked followers, as a comparison simulator.

The active group is a leader plus f followers.  Leaders rotate round
robin; each leader gets f+1 views (its reign).  In a view the group either
makes progress or the leader sees a follower that did not respond.  An
honest leader marks that follower and swaps in the lowest-id replica it
has not marked.  After f+1 views without progress the leader is deposed.

Progress is decided at the oracle level: a view progresses iff the leader
is honest or chooses to cooperate, and every corrupted follower chooses
to respond.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

# rounds charged per view without progress: request, missed reply, accusation, new view
ROUNDS_PER_FAILED_VIEW = 4


@dataclass
class ReignState:
    leader: int
    followers: tuple[int, ...]
    marked: set[int] = field(default_factory=set)
    stalls: int = 0


@dataclass(frozen=True)
class GroupOutcome:
    progress: bool
    detected: Optional[int] = None


class StallOracle(Protocol):
    def leader_stalls(self, state: ReignState) -> bool: ...

    def withheld(self, state: ReignState, corrupted: frozenset) -> Optional[int]: ...


class MaxStall:
    """Corrupted leaders never progress; corrupted followers withhold one at a time."""

    def leader_stalls(self, state: ReignState) -> bool:
        return True

    def withheld(self, state: ReignState, corrupted: frozenset) -> Optional[int]:
        bad = [i for i in state.followers if i in corrupted]
        return min(bad) if bad else None


class RandomStall:
    """Corrupted replicas stall or cooperate at random."""

    def __init__(self, seed: int = 0, p: float = 0.5) -> None:
        self.rng = random.Random(seed)
        self.p = p

    def leader_stalls(self, state: ReignState) -> bool:
        return self.rng.random() < self.p

    def withheld(self, state: ReignState, corrupted: frozenset) -> Optional[int]:
        bad = [i for i in state.followers if i in corrupted]
        if not bad or self.rng.random() >= self.p:
            return None
        return self.rng.choice(bad)


def pick_followers(leader: int, n: int, f: int, marked: set[int],
                   keep: tuple[int, ...] = ()) -> tuple[int, ...]:
    chosen = [i for i in keep if i not in marked and i != leader]
    for i in range(n):
        if len(chosen) >= f:
            break
        if i != leader and i not in marked and i not in chosen:
            chosen.append(i)
    return tuple(sorted(chosen))


def reign_step(state: ReignState, n: int, f: int, corrupted: frozenset,
               oracle: StallOracle) -> tuple[ReignState, GroupOutcome]:
    """One view of the current reign."""
    if state.leader in corrupted:
        if oracle.leader_stalls(state):
            state.stalls += 1
            return state, GroupOutcome(False)
        return state, GroupOutcome(True)
    culprit = oracle.withheld(state, corrupted)
    if culprit is None:
        return state, GroupOutcome(True)
    state.stalls += 1
    state.marked.add(culprit)
    keep = tuple(i for i in state.followers if i != culprit)
    state.followers = pick_followers(state.leader, n, f, state.marked, keep)
    return state, GroupOutcome(False, culprit)


@dataclass
class XftRun:
    n: int
    f: int
    view_changes: int
    rounds: int
    reigns: int
    leaders_deposed: int
    progress_tail: bool


def total_view_changes(n: int, f: int, corrupted: Optional[frozenset] = None,
                       oracle: Optional[StallOracle] = None, horizon: Optional[int] = None) -> XftRun:
    """Runs reigns until ``horizon`` views have passed (default: enough for every
    leader to use its full reign twice) and counts views without progress."""
    corrupted = frozenset(range(f)) if corrupted is None else frozenset(corrupted)
    if len(corrupted) > f:
        raise ValueError("more corrupted replicas than f")
    oracle = oracle or MaxStall()
    horizon = horizon if horizon is not None else 2 * n * (f + 1) + 1
    leader = 0
    state = ReignState(leader, pick_followers(leader, n, f, set()))
    changes = 0
    deposed = 0
    reigns = 1
    last_change = -1
    for view in range(horizon):
        state, out = reign_step(state, n, f, corrupted, oracle)
        if out.progress:
            continue
        changes += 1
        last_change = view
        if state.stalls >= f + 1:
            deposed += 1
            reigns += 1
            leader = (state.leader + 1) % n
            state = ReignState(leader, pick_followers(leader, n, f, set()))
    # after the last view change every later view progressed
    tail = last_change < horizon - 1
    return XftRun(n, f, changes, changes * ROUNDS_PER_FAILED_VIEW, reigns, deposed, tail)


def view_change_bound(f: int) -> int:
    """f+1 charged to every corrupted leader, plus f follower burns by the first honest one."""
    return f * (f + 1) + f


def naive_worst_case(n: int, f: int) -> int:
    """Trying every group of f+1 in turn: all but the single honest group can stall."""
    return math.comb(n, f + 1) - 1


def quadratic_fit(fs: list[int], counts: list[int]) -> tuple[np.ndarray, float]:
    """Least-squares quadratic in f and its coefficient of determination."""
    x = np.asarray(fs, dtype=float)
    y = np.asarray(counts, dtype=float)
    coef = np.polyfit(x, y, 2)
    pred = np.polyval(coef, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return coef, r2


@dataclass
class ComparisonRow:
    n: int
    f: int
    variant: str
    view_changes: int
    rounds: Optional[int]


def compare(ns: list[int], slots: int = 5, seed: int = 0) -> list[ComparisonRow]:
    """Side by side: improved reigns, the naive group search, and the stable-leader protocol
    with the first f leaders corrupted and silent."""
    from .smr_stable import STABLE_SCRIPTS, StableDriver

    rows = []
    for n in ns:
        f = (n - 1) // 2
        run = total_view_changes(n, f)
        rows.append(ComparisonRow(n, f, "xft-reigns", run.view_changes, run.rounds))
        rows.append(ComparisonRow(n, f, "xft-naive", naive_worst_case(n, f), None))
        drv = StableDriver(n, f, 1, seed, STABLE_SCRIPTS["stable-silent"](tuple(range(f)), 1))
        stable = drv.run(slots)
        rows.append(ComparisonRow(n, f, "stable-leader", stable.views, stable.rounds))
    return rows


def format_table(rows: list[ComparisonRow]) -> str:
    lines = [f"{'n':>4} {'f':>3} {'variant':<14} {'view_changes':>12} {'rounds':>7}"]
    for r in rows:
        rounds = "-" if r.rounds is None else str(r.rounds)
        lines.append(f"{r.n:>4} {r.f:>3} {r.variant:<14} {r.view_changes:>12} {rounds:>7}")
    return "\n".join(lines)
