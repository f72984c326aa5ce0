"""Byzantine broadcast and agreement on top of the synod.

Broadcast prepends a pre-round in which the designated sender signs and
sends its value; receivers accept it at iteration 0 with the bare signature
as certificate.  The main loop then runs synod iterations whose leader is
drawn by an oracle only after the propose round, so every party acts as a
candidate leader in the status and propose rounds.

Agreement runs one broadcast per party in parallel and outputs the most
frequent value of the resulting vector.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .adversary import ConfigError, Strategy
from .crypto import Keyring, Signer
from .simnet import AGREEMENT, LIVENESS, VALIDITY, Simulation, Trace, Verdict, Violation
from .synod import COMMIT, NOTIFY, PROPOSE, STATUS, RoundInfo, SynodInstance
from .wire import SenderValue, Validator

PRE = "pre"

# Free choice when nothing is forced: a distinguished "no value" marker.
BOTTOM = b"\x00<bottom>"
# Agreement outcome when every broadcast ended in BOTTOM.
DEFAULT = b"\x00<default>"


def check_resilience(n: int, f: int) -> None:
    if f < 0 or 2 * f >= n:
        raise ConfigError(f"need f < n/2 (got n={n}, f={f})")


class LeaderOracle:
    """Leader per iteration.

    Modes: ``random`` (uniform, independent per iteration),
    ``designated-then-random`` (iteration 1 is led by each instance's sender),
    ``round-robin`` and ``scripted``.
    """

    MODES = ("random", "designated-then-random", "round-robin", "scripted")

    def __init__(self, n: int, mode: str = "random", seed: int | str = 0, script: Optional[list[int]] = None) -> None:
        if mode not in self.MODES:
            raise ConfigError(f"unknown oracle mode {mode!r}")
        if mode == "scripted" and not script:
            raise ConfigError("scripted oracle needs a leader list")
        self.n = n
        self.mode = mode
        self.rng = random.Random(seed)
        self.script = list(script or [])
        self.drawn: dict[int, int] = {}

    def designated_first(self) -> bool:
        return self.mode == "designated-then-random"

    def draw(self, k: int) -> int:
        """Shared leader of iteration ``k``; identical on repeated calls."""
        if k not in self.drawn:
            if self.mode == "round-robin":
                self.drawn[k] = (k - 1) % self.n
            elif self.mode == "scripted":
                self.drawn[k] = self.script[(k - 1) % len(self.script)]
            else:
                self.drawn[k] = self.rng.randrange(self.n)
        return self.drawn[k]


def most_frequent(values: Iterable[Optional[bytes]]) -> bytes:
    """Most frequent non-bottom value; ties go to the least value in byte order."""
    counts = Counter(v for v in values if v is not None and v != BOTTOM)
    if not counts:
        return DEFAULT
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


class BroadcastParty:
    """One party running a set of broadcast instances (instance id = slot).

    ``senders`` maps instance ids to their designated sender; ``inputs``
    holds this party's value for instances it sends.
    """

    def __init__(self, me: int, n: int, f: int, validator: Validator, signer: Signer,
                 senders: dict[int, int], inputs: dict[int, bytes], free_choice: bytes = BOTTOM) -> None:
        self.me, self.n, self.f = me, n, f
        self.validator = validator
        self.signer = signer
        self.senders = senders
        self.inputs = inputs
        self.free_choice = free_choice
        self.events: list = []
        self.instances = {s: SynodInstance(me, n, f, s, validator, signer, events=self.events)
                          for s in sorted(senders)}
        self._proofs: dict[int, object] = {}

    @property
    def terminated(self) -> bool:
        return all(i.terminated for i in self.instances.values())

    def decision(self, slot: int) -> Optional[bytes]:
        c = self.instances[slot].committed
        return None if c is None else c[0]

    def _acting(self, info: RoundInfo, slot: int) -> bool:
        """Whether this party plays leader for ``slot`` in the status/propose rounds."""
        leader = info.leader_for(slot)
        if leader is not None:
            return leader == self.me
        if info.hint is not None:
            return info.hint == self.me
        return True

    def send(self, info: RoundInfo) -> list:
        out = []
        if info.kind == PRE:
            for slot, sender in self.senders.items():
                if sender == self.me and slot in self.inputs:
                    out.append((None, SenderValue.create(self.signer, slot, self.inputs[slot])))
            return out
        k = info.k
        for slot, inst in self.instances.items():
            if info.kind == STATUS:
                msg = inst.status_msg(k)
                if msg is None:
                    continue
                leader = info.leader_for(slot)
                if leader is None:
                    leader = info.hint
                out.append((leader, msg))
            elif info.kind == PROPOSE:
                proof = self._proofs.get(slot)
                if proof is not None and not inst.terminated and self._acting(info, slot):
                    out.append((None, inst.propose(k, proof, lambda: self.free_choice)))
            elif info.kind == COMMIT:
                out.extend((None, m) for m in inst.commit_msgs(k))
            elif info.kind == NOTIFY:
                msg = inst.notify_msg(k)
                if msg is not None:
                    out.append((None, msg))
        return out

    def receive(self, info: RoundInfo, inbox: list) -> None:
        by_slot: dict[int, list] = {}
        for sender, msg in inbox:
            slot = getattr(msg, "slot", None)
            if slot in self.instances:
                by_slot.setdefault(slot, []).append((sender, msg))
        if info.kind == PRE:
            for slot, msgs in by_slot.items():
                sender = self.senders[slot]
                valid = sorted({m.value for s, m in msgs if isinstance(m, SenderValue) and s == sender
                                and self.validator.sender_value_ok(m, slot, m.value)})
                if valid:
                    # a faulty sender may sign several values; keep the least one
                    sv = next(m for s, m in msgs if isinstance(m, SenderValue) and m.value == valid[0])
                    self.instances[slot].accept_sender_value(sv)
            return
        k = info.k
        for slot, inst in self.instances.items():
            msgs = by_slot.get(slot, [])
            leader = info.leader_for(slot)
            if info.kind == STATUS:
                self._proofs[slot] = None
                if not inst.terminated and self._acting(info, slot):
                    self._proofs[slot] = inst.collect_status(k, msgs)
            elif info.kind == PROPOSE:
                inst.on_propose(k, leader, msgs)
            elif info.kind == COMMIT:
                inst.on_commit(k, leader, msgs)
            elif info.kind == NOTIFY:
                inst.on_notify(k, msgs)


@dataclass
class BroadcastResult:
    decisions: dict[int, dict[int, Optional[bytes]]]
    rounds: int
    iterations: int
    leaders: list[int]
    honest_at_propose: list[bool]
    verdict: Verdict
    corrupted: list[int] = field(default_factory=list)


class BroadcastDriver:
    """Runs broadcast instances ``senders`` (slot -> sender) with a leader oracle."""

    def __init__(self, n: int, f: int, senders: dict[int, int], inputs: dict[int, dict[int, bytes]],
                 oracle: LeaderOracle, seed: int = 0, strategy: Optional[Strategy] = None,
                 scheme: str = "hmac", trace: Optional[Trace] = None, parallel: bool = False,
                 lazy_candidates: bool = False) -> None:
        check_resilience(n, f)
        self.n, self.f = n, f
        self.senders = senders
        self.oracle = oracle
        self.lazy = lazy_candidates
        self.keyring = Keyring(n, seed, scheme)
        self.validator = Validator(n, f, self.keyring, designated_sender=lambda slot: senders.get(slot))
        self.parties = [BroadcastParty(i, n, f, self.validator, self.keyring.signer(i), senders, inputs.get(i, {}))
                        for i in range(n)]
        self.sim = Simulation(n, f, self.keyring, self.validator, self.parties, strategy, seed, trace, parallel)
        self.leaders: list[int] = []
        self.honest_at_propose: list[bool] = []

    def _infos(self, k: int) -> list[RoundInfo]:
        base = 4 * (k - 1) + 2
        per_slot = None
        leader = None
        if k == 1 and self.oracle.designated_first():
            per_slot = dict(self.senders)
            if len(set(per_slot.values())) == 1:
                leader, per_slot = next(iter(per_slot.values())), None
        hint = self.oracle.draw(k) if self.lazy and leader is None and per_slot is None else None
        return [RoundInfo(base + r, kind, k, leader, 0, per_slot, hint)
                for r, kind in enumerate((STATUS, PROPOSE, COMMIT, NOTIFY))]

    def _elector(self, infos: list[RoundInfo]) -> Callable[[RoundInfo], None]:
        def elect(info: RoundInfo) -> None:
            leader = self.oracle.draw(info.k)
            for i in infos:
                i.leader = leader
            self.honest_at_propose.append(self.sim.is_honest(leader))

        return elect

    def all_done(self) -> bool:
        return all(self.parties[i].terminated for i in self.sim.honest())

    def run(self, max_iterations: int = 200, stop_when_committed: bool = False) -> BroadcastResult:
        """``stop_when_committed`` ends the run after the commit round in which the last
        honest party committed; the skipped notify round cannot change any decision."""
        self.sim.step(RoundInfo(1, PRE, 0))
        rounds = 1
        k = 0
        finished_at = None
        while k < max_iterations and not self.all_done() and not (stop_when_committed and finished_at):
            k += 1
            infos = self._infos(k)
            needs_election = infos[0].leader is None and infos[0].per_slot is None
            for info in infos:
                elect = self._elector(infos) if needs_election and info.kind == PROPOSE else None
                if not needs_election and info.kind == PROPOSE:
                    self.honest_at_propose.append(
                        all(self.sim.is_honest(x) for x in ([info.leader] if info.per_slot is None
                                                           else info.per_slot.values())))
                self.sim.step(info, elect)
                if info.kind == COMMIT and finished_at is None and self._all_committed():
                    # honest parties stop here without waiting for notifies
                    finished_at = info.number
                    if stop_when_committed:
                        break
            leader = infos[2].leader
            self.leaders.append(leader if leader is not None else -1)
            if leader is not None and self.sim.is_honest(leader) and not self._all_committed():
                self.sim.fail(LIVENESS, f"iteration {k} had honest leader {leader} but not every honest party committed")
        rounds = finished_at if finished_at is not None else self.sim.round
        decisions = {i: {s: self.parties[i].decision(s) for s in self.senders} for i in self.sim.honest()}
        verdict = self.sim.verdict(rounds=rounds, iterations=k)
        self._check_validity(decisions)
        return BroadcastResult(decisions, rounds, k, self.leaders, self.honest_at_propose, verdict,
                               list(self.sim.corrupted))

    def _all_committed(self) -> bool:
        return all(self.parties[i].instances[s].committed is not None
                   for i in self.sim.honest() for s in self.senders)

    def _check_validity(self, decisions) -> None:
        for slot, sender in self.senders.items():
            if not self.sim.is_honest(sender):
                continue
            want = self.parties[sender].inputs.get(slot)
            for i, d in decisions.items():
                if d[slot] != want:
                    self.sim.fail(VALIDITY, f"instance {slot}: honest sender {sender} sent "
                                            f"{want!r} but party {i} decided {d[slot]!r}")


def broadcast_run(n: int, f: int, sender: int, value: bytes, oracle: Optional[LeaderOracle] = None,
                  seed: int = 0, strategy: Optional[Strategy] = None, trace: Optional[Trace] = None,
                  lazy_candidates: bool = False, max_iterations: int = 200,
                  stop_when_committed: bool = False) -> BroadcastResult:
    oracle = oracle or LeaderOracle(n, "random", seed)
    driver = BroadcastDriver(n, f, {0: sender}, {sender: {0: value}}, oracle, seed, strategy, trace=trace,
                             lazy_candidates=lazy_candidates)
    return driver.run(max_iterations, stop_when_committed)


@dataclass
class AgreementResult:
    decisions: dict[int, bytes]
    vectors: dict[int, list[Optional[bytes]]]
    broadcast: BroadcastResult

    @property
    def verdict(self) -> Verdict:
        return self.broadcast.verdict


def agreement_run(inputs: list[bytes], f: int, oracle: Optional[LeaderOracle] = None, seed: int = 0,
                  strategy: Optional[Strategy] = None, trace: Optional[Trace] = None,
                  max_iterations: int = 200) -> AgreementResult:
    n = len(inputs)
    oracle = oracle or LeaderOracle(n, "designated-then-random", seed)
    senders = {j: j for j in range(n)}
    driver = BroadcastDriver(n, f, senders, {j: {j: inputs[j]} for j in range(n)}, oracle, seed, strategy,
                             trace=trace)
    result = driver.run(max_iterations)
    vectors = {i: [d[j] for j in range(n)] for i, d in result.decisions.items()}
    decisions = {i: most_frequent(v) for i, v in vectors.items()}
    honest_inputs = {inputs[i] for i in driver.sim.honest()}
    rnd = result.rounds
    if len(set(decisions.values())) > 1:
        result.verdict.violations.append(
            Violation(AGREEMENT, rnd, f"parties decided {sorted(set(decisions.values()))}"))
    if len(honest_inputs) == 1 and set(decisions.values()) != honest_inputs:
        result.verdict.violations.append(
            Violation(VALIDITY, rnd, "honest parties share an input but decided otherwise"))
    return AgreementResult(decisions, vectors, result)


def expected_round_measure(n: int, trials: int, seed: int = 0, lazy_candidates: bool = False) -> float:
    """Mean total rounds with ``f`` silent static Byzantine parties and a random oracle."""
    from .adversary import SilentStrategy

    f = (n - 1) // 2
    total = 0
    for t in range(trials):
        rs = seed * 1_000_003 + t
        rng = random.Random(f"corrupt:{rs}")
        bad = tuple(sorted(rng.sample(range(n), f)))
        honest = [i for i in range(n) if i not in bad]
        sender = honest[0]
        res = broadcast_run(n, f, sender, b"payload", LeaderOracle(n, "random", f"oracle:{rs}"), seed=rs,
                            strategy=SilentStrategy(bad), lazy_candidates=lazy_candidates,
                            stop_when_committed=True)
        if not res.verdict.ok:
            raise AssertionError(res.verdict.summary())
        total += res.rounds
    return total / trials


def analytic_mean_rounds(n: int) -> float:
    """4/p for p = (f+1)/(2f+1): the closed form of 1 + 4*E[I] - 1 with geometric I."""
    f = (n - 1) // 2
    return 4 * (2 * f + 1) / (f + 1)

