"""Day-based clock synchronization over drifting local clocks.

When a replica's local clock reaches the start of day X it broadcasts a
signed ``sync(X)``.  The first time a replica holds f+1 distinct-signer
syncs for X (bare, or bundled in someone's new-day message) it sets its
clock to the start of day X and forwards the f+1 syncs as a new-day
message, unless it already holds 2f+1 distinct syncs or f+1 distinct
new-day messages.

Time is continuous and exact (``Fraction``); an event queue orders clock
boundaries and message arrivals.  Arrivals that share a timestamp are all
absorbed before any replica evaluates its quorum.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .crypto import Keyring, Signer
from .simnet import Trace, Verdict, Violation
from .wire import NewDayMsg, Reason, SyncMsg, Validator

SKEW = "day-skew"
DAY_AUTHENTICITY = "day-authenticity"
ROUND_FIT = "round-fit"

SYNC_SENT = "SyncSent"
NEW_DAY_SENT = "NewDaySent"
NEW_DAY_SUPPRESSED = "NewDaySuppressed"
DAY_STARTED = "DayStarted"
SKEW_SAMPLE = "SkewSample"


@dataclass
class LocalClock:
    """Reads ``base + rate * (now - set_at)``; ``rate`` stays within 1 +- rho."""

    rate: Fraction
    day_length: int
    base: Fraction = Fraction(0)
    set_at: Fraction = Fraction(0)

    def read(self, now: Fraction) -> Fraction:
        return self.base + self.rate * (now - self.set_at)

    def when(self, local: Fraction) -> Fraction:
        """Real time at which the clock will read ``local``."""
        return self.set_at + (local - self.base) / self.rate

    def set(self, now: Fraction, local: Fraction) -> None:
        self.base, self.set_at = local, now

    @property
    def day(self) -> int:
        return int(self.base // self.day_length)


@dataclass
class DayQuorum:
    day: int
    syncs: dict[int, SyncMsg] = field(default_factory=dict)
    new_days: set[int] = field(default_factory=set)
    sent_new_day: bool = False

    def reached(self, quorum: int) -> bool:
        return len(self.syncs) >= quorum


def suppression_check(q: DayQuorum, f: int) -> bool:
    """True when forwarding a new-day message is unnecessary."""
    return len(q.syncs) >= 2 * f + 1 or len(q.new_days) >= f + 1


class Plan(enum.Enum):
    """What the corrupted replicas do each day."""

    SILENT = "silent"
    HONEST = "honest"
    EARLY = "early"
    SELECTIVE = "selective"
    FUTURE = "future"


class DelayPlan(enum.Enum):
    RANDOM = "random"
    SPLIT = "split"
    FIXED = "fixed"


@dataclass
class ClockParams:
    n: int
    f: int
    delta: Fraction = Fraction(1)
    day_length: int = 1000
    drift: Optional[Fraction] = None
    days: int = 5

    def __post_init__(self) -> None:
        self.delta = Fraction(self.delta)
        if self.drift is None:
            self.drift = Fraction(self.day_length, 100)
        self.drift = Fraction(self.drift)

    @property
    def round_length(self) -> Fraction:
        return 2 * self.delta + self.drift


class ClockReplica:
    def __init__(self, me: int, params: ClockParams, signer: Signer, validator: Validator,
                 clock: LocalClock) -> None:
        self.me = me
        self.p = params
        self.signer = signer
        self.validator = validator
        self.clock = clock
        self.day = 0
        self.synced = 0
        self.version = 0
        self.quorums: dict[int, DayQuorum] = {}

    def quorum(self, day: int) -> DayQuorum:
        q = self.quorums.get(day)
        if q is None:
            q = self.quorums[day] = DayQuorum(day)
        return q

    def next_boundary(self) -> tuple[int, Fraction]:
        day = max(self.day, self.synced) + 1
        return day, self.clock.when(Fraction(day * self.p.day_length))

    def on_boundary(self, day: int) -> Optional[SyncMsg]:
        if day <= max(self.day, self.synced):
            return None
        self.synced = day
        return SyncMsg.create(self.signer, day)

    def absorb(self, msg) -> None:
        if msg.day <= self.day:
            return
        q = self.quorum(msg.day)
        if isinstance(msg, SyncMsg):
            if self.validator.sync_ok(msg):
                q.syncs.setdefault(msg.signer, msg)
        elif isinstance(msg, NewDayMsg) and self.validator.new_day_reason(msg) is Reason.OK:
            q.new_days.add(msg.signer)
            for s in msg.syncs:
                q.syncs.setdefault(s.signer, s)

    def decide(self, now: Fraction) -> Optional[tuple[int, Optional[NewDayMsg], bool]]:
        """Start the highest day with a quorum; returns (day, new-day message, suppressed)."""
        ready = [d for d, q in self.quorums.items() if d > self.day and q.reached(self.p.f + 1)]
        if not ready:
            return None
        day = max(ready)
        q = self.quorums[day]
        self.day = day
        self.clock.set(now, Fraction(day * self.p.day_length))
        self.version += 1
        for d in [d for d in self.quorums if d < day]:
            del self.quorums[d]
        if suppression_check(q, self.p.f):
            return day, None, True
        q.sent_new_day = True
        chosen = tuple(q.syncs[i] for i in sorted(q.syncs)[: self.p.f + 1])
        return day, NewDayMsg.create(self.signer, day, chosen), False


@dataclass
class ClockRun:
    verdict: Verdict
    starts: dict[int, dict[int, Fraction]]
    skews: list[Fraction]
    new_days: int
    suppressed: int
    syncs: int


class ClockSim:
    """Continuous-time simulation of the day protocol with a rushing adversary."""

    def __init__(self, params: ClockParams, seed: int = 0, corrupted: tuple[int, ...] = (),
                 plan: Plan = Plan.SILENT, delays: DelayPlan = DelayPlan.RANDOM,
                 rates: Optional[list[Fraction]] = None, offsets: Optional[list[Fraction]] = None,
                 trace: Optional[Trace] = None, scheme: str = "hmac") -> None:
        if len(corrupted) > params.f:
            raise ValueError("more corrupted replicas than f")
        self.p = params
        self.rng = random.Random(seed)
        self.keyring = Keyring(params.n, seed, scheme)
        self.validator = Validator(params.n, params.f, self.keyring)
        self.corrupted = frozenset(corrupted)
        self.plan = plan
        self.delays = delays
        self.trace = trace if trace is not None else Trace()
        n = params.n
        if rates is None:
            half = params.drift / 2
            grid = 1000
            # real length of one local day lies in D +- t/2, so two honest days differ by <= t
            rates = [Fraction(params.day_length) / (params.day_length - half + half * 2 * self.rng.randint(0, grid) / grid)
                     for _ in range(n)]
        if offsets is None:
            offsets = [params.delta * self.rng.randint(0, 1000) / 1000 for _ in range(n)]
        self.replicas = []
        for i in range(n):
            clock = LocalClock(Fraction(rates[i]), params.day_length)
            clock.set(Fraction(offsets[i]), Fraction(0))
            self.replicas.append(ClockReplica(i, params, self.keyring.signer(i), self.validator, clock))
        self.queue: list = []
        self.seq = itertools.count()
        self.starts: dict[int, dict[int, Fraction]] = {0: {i: Fraction(offsets[i]) for i in self.honest()}}
        self.first_honest_sync: dict[int, Fraction] = {}
        self.violations: list[Violation] = []
        self.counts = {"sync": 0, "newday": 0, "suppressed": 0}
        self.byz_syncs: dict[int, dict[int, SyncMsg]] = {}
        self.byz_done: set[tuple[int, str]] = set()

    def honest(self) -> list[int]:
        return [i for i in range(self.p.n) if i not in self.corrupted]

    def _push(self, at: Fraction, kind: str, *payload) -> None:
        heapq.heappush(self.queue, (at, next(self.seq), kind, payload))

    def _schedule_boundary(self, i: int) -> None:
        rep = self.replicas[i]
        day, at = rep.next_boundary()
        if day <= self.p.days:
            self._push(at, "boundary", i, day, rep.version)

    def _delay(self, sender: int, dest: int) -> Fraction:
        d = self.p.delta
        if dest == sender:
            return Fraction(0)
        if self.delays is DelayPlan.FIXED:
            return d
        if self.delays is DelayPlan.SPLIT:
            return d if dest % 2 else Fraction(0)
        return d * self.rng.randint(0, 1000) / 1000

    def _broadcast(self, now: Fraction, sender: int, msg) -> None:
        for j in range(self.p.n):
            self._push(now + self._delay(sender, j), "deliver", j, msg)

    def _fail(self, prop: str, day: int, detail: str) -> None:
        self.violations.append(Violation(prop, day, detail))

    def _t(self, x: Fraction) -> float:
        return round(float(x), 6)

    # -- adversary ------------------------------------------------------------

    def _byz_sync(self, b: int, day: int) -> SyncMsg:
        per = self.byz_syncs.setdefault(day, {})
        if b not in per:
            per[b] = SyncMsg.create(self.keyring.signer(b), day)
        return per[b]

    def _adversary_start(self) -> None:
        if not self.corrupted:
            return
        for day in range(1, self.p.days + 1):
            if self.plan is Plan.EARLY:
                # syncs for day X land right after day X-1 started, far before any honest clock gets there
                at = Fraction((day - 1) * self.p.day_length) + self.p.delta
                for b in sorted(self.corrupted):
                    for j in self.honest():
                        self._push(at, "deliver", j, self._byz_sync(b, day))
            if self.plan is Plan.FUTURE:
                for b in sorted(self.corrupted):
                    for j in self.honest():
                        self._push(Fraction(self.p.delta), "deliver", j, self._byz_sync(b, day + 4))

    def _adversary_react(self, now: Fraction, msg) -> None:
        """Rushing: corrupted replicas see honest sends at send time."""
        if not self.corrupted or self.plan in (Plan.SILENT, Plan.EARLY, Plan.FUTURE):
            return
        day = msg.day
        if self.plan is Plan.HONEST:
            key = (day, "honest")
            if key in self.byz_done:
                return
            self.byz_done.add(key)
            for b in sorted(self.corrupted):
                s = self._byz_sync(b, day)
                for j in self.honest():
                    self._push(now + self._delay(b, j), "deliver", j, s)
            return
        # selective: bundle the first honest sync with own syncs into a new-day for a subset only
        key = (day, "selective")
        if key in self.byz_done or not isinstance(msg, SyncMsg):
            return
        self.byz_done.add(key)
        honest = self.honest()
        chosen = set(self.rng.sample(honest, self.rng.randint(1, len(honest))))
        own = tuple(self._byz_sync(b, day) for b in sorted(self.corrupted))
        syncs = tuple(sorted(own + (msg,), key=lambda s: s.signer))[: self.p.f + 1]
        for b in sorted(self.corrupted):
            nd = NewDayMsg.create(self.keyring.signer(b), day, syncs) if len(syncs) >= self.p.f + 1 else None
            for j in honest:
                if nd is not None and j in chosen:
                    self._push(now, "deliver", j, nd)
                elif j not in chosen:
                    self._push(now + self.p.delta * self.rng.randint(0, 1000) / 1000, "deliver", j, own[0])

    # -- main loop ------------------------------------------------------------

    def run(self) -> ClockRun:
        for i in self.honest():
            self._schedule_boundary(i)
        self._adversary_start()
        while self.queue:
            now = self.queue[0][0]
            dirty: set[int] = set()
            while self.queue and self.queue[0][0] == now:
                _, _, kind, payload = heapq.heappop(self.queue)
                if kind == "boundary":
                    i, day, version = payload
                    rep = self.replicas[i]
                    if version != rep.version:
                        continue
                    msg = rep.on_boundary(day)
                    if msg is None:
                        continue
                    self.counts["sync"] += 1
                    self.first_honest_sync.setdefault(day, now)
                    self.trace.add(day, i, SYNC_SENT, {"time": self._t(now)})
                    self._broadcast(now, i, msg)
                    self._adversary_react(now, msg)
                    self._schedule_boundary(i)
                else:
                    j, msg = payload
                    if j in self.corrupted:
                        continue
                    self.replicas[j].absorb(msg)
                    dirty.add(j)
            for j in sorted(dirty):
                self._quorum(now, j)
        return self._finish()

    def _quorum(self, now: Fraction, j: int) -> None:
        rep = self.replicas[j]
        result = rep.decide(now)
        if result is None:
            return
        day, new_day, suppressed = result
        first = self.first_honest_sync.get(day)
        if first is None or first > now:
            self._fail(DAY_AUTHENTICITY, day, f"replica {j} started day {day} at {self._t(now)} "
                                              "before any honest clock reached it")
        self.starts.setdefault(day, {})[j] = now
        self.trace.add(day, j, DAY_STARTED, {"day": day, "local": int(rep.clock.base),
                                             "time": self._t(now)})
        if suppressed:
            self.counts["suppressed"] += 1
            self.trace.add(day, j, NEW_DAY_SUPPRESSED, {"time": self._t(now)})
        else:
            self.counts["newday"] += 1
            self.trace.add(day, j, NEW_DAY_SENT, {"time": self._t(now)})
            self._broadcast(now, j, new_day)
            self._adversary_react(now, new_day)
        self._schedule_boundary(j)

    def _finish(self) -> ClockRun:
        skews = []
        honest = self.honest()
        for day in range(1, self.p.days + 1):
            starts = self.starts.get(day, {})
            missing = [i for i in honest if i not in starts]
            if missing:
                self._fail(SKEW, day, f"replicas {missing} never started day {day}")
                continue
            skew = max(starts.values()) - min(starts.values())
            skews.append(skew)
            self.trace.add(day, -1, SKEW_SAMPLE, {"skew": self._t(skew)})
            if skew > self.p.delta:
                self._fail(SKEW, day, f"honest day starts spread {self._t(skew)} > delta")
            if not round_fit(self.p, starts, {i: self.replicas[i].clock.rate for i in honest}):
                self._fail(ROUND_FIT, day, "an honest message missed its round")
        verdict = Verdict(list(self.violations), {
            "syncs": self.counts["sync"], "new_days": self.counts["newday"],
            "suppressed": self.counts["suppressed"],
            "max_skew": self._t(max(skews)) if skews else None,
        })
        return ClockRun(verdict, self.starts, skews, self.counts["newday"], self.counts["suppressed"],
                        self.counts["sync"])


def round_fit(p: ClockParams, starts: dict[int, Fraction], rates: dict[int, Fraction]) -> bool:
    """Every honest message sent at the start of a local round arrives before
    that round ends at every honest receiver, for rounds of length 2*delta + t."""
    length = p.round_length
    # the last round before the next day boundary may be cut by an early reset
    last = int(p.day_length // length) - 2
    for j in (0, max(last, 0)):
        begin = {i: starts[i] + j * length / rates[i] for i in starts}
        end = {i: starts[i] + (j + 1) * length / rates[i] for i in starts}
        if max(begin.values()) + p.delta > min(end.values()):
            return False
    return True


def random_assignment(n: int, f: int, seed: int, days: int = 3) -> ClockSim:
    """One randomized drift/adversary assignment."""
    rng = random.Random(seed)
    corrupted = tuple(sorted(rng.sample(range(n), rng.randint(0, f))))
    plan = rng.choice(list(Plan))
    delays = rng.choice([DelayPlan.RANDOM, DelayPlan.SPLIT])
    return ClockSim(ClockParams(n, f, days=days), seed=seed, corrupted=corrupted, plan=plan,
                    delays=delays, trace=Trace())


def best_case(n: int, f: int, seed: int = 0, days: int = 3) -> ClockSim:
    """All honest, equal clock rates, equal day-0 starts and a fixed message delay:
    every sync reaches everyone at the same moment."""
    rng = random.Random(seed)
    rate = Fraction(1000, 1000 + rng.randint(-5, 5))
    return ClockSim(ClockParams(n, f, days=days), seed=seed, delays=DelayPlan.FIXED,
                    rates=[rate] * n, offsets=[Fraction(0)] * n)
