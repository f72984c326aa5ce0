"""Deterministic lock-step network simulator.

Every round has three phases:

1. send: every replica object (honest ones and the shadows of corrupted
   ones) produces its outbox;
2. adversary: corrupted replicas' real outboxes are derived from their
   shadows' after the adversary has seen this round's honest traffic
   addressed to them;
3. deliver: all messages reach their recipients at the end of the round,
   ordered by sender id, and every replica's ``receive`` runs.

Honest messages are never dropped, delayed or altered.  A run-wide
certificate ledger and agreement/liveness checkers are evaluated after
every round.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .adversary import Adversary, ConfigError, Strategy
from .crypto import Keyring
from .synod import COMMIT, NOTIFY, PROPOSE, ROUND_KINDS, STATUS, RoundInfo, SynodReplica
from .wire import (
    CommitCertificate,
    NotifyCertificate,
    NotifyMsg,
    ProposeMsg,
    StatusMsg,
    Validator,
    message_digest,
)

HARNESS = -1

# property labels used in violations
AGREEMENT = "agreement"
CERT_UNIQUENESS = "certificate-uniqueness"
LIVENESS = "liveness"
VIEW_UNIQUENESS = "view-uniqueness"
HONEST_LEADER_KEPT = "honest-leader-kept"
CHECKPOINT_SKEW = "checkpoint-skew"
SYNCHRONY = "synchrony"
VALIDITY = "validity"


# -- trace --------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEvent:
    round: int
    replica: int
    kind: str
    detail: dict
    digest: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {"round": self.round, "replica": self.replica, "kind": self.kind,
             "detail": self.detail, "digest": self.digest},
            sort_keys=True, separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        raw = json.loads(line)
        missing = {"round", "replica", "kind", "detail", "digest"} - set(raw)
        if missing:
            raise ValueError(f"trace record lacks {sorted(missing)}")
        return cls(raw["round"], raw["replica"], raw["kind"], raw["detail"], raw["digest"])


class Trace:
    """Totally ordered event list, serialized as JSON Lines."""

    def __init__(self, record_sends: bool = True) -> None:
        self.record_sends = record_sends
        self.events: list[TraceEvent] = []

    def add(self, round_no: int, replica: int, kind: str, detail: Optional[dict] = None,
            digest: str = "") -> int:
        self.events.append(TraceEvent(round_no, replica, kind, detail or {}, digest))
        return len(self.events) - 1

    def dumps(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @staticmethod
    def load(path) -> list[TraceEvent]:
        events = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    events.append(TraceEvent.from_json(line))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return events

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]


# -- verdicts -----------------------------------------------------------------


@dataclass
class Violation:
    prop: str
    round: int
    detail: str
    event: Optional[int] = None

    def __str__(self) -> str:
        where = "" if self.event is None else f", trace event {self.event}"
        return f"{self.prop} violated in round {self.round}{where}: {self.detail}"


@dataclass
class Verdict:
    violations: list[Violation] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None

    def summary(self) -> str:
        return "OK" if self.ok else str(self.first)


class InvariantViolation(AssertionError):
    def __init__(self, violation: Violation) -> None:
        super().__init__(str(violation))
        self.violation = violation


# -- certificate ledger -------------------------------------------------------


class CertificateLedger:
    """Run-wide record of certificates and honest commits per slot.

    Once the first honest replica commits (v*, k*) for a slot, every
    certificate observed for that slot with k >= k* must be for v*, and
    every honest commit must be for v*.
    """

    def __init__(self) -> None:
        self.certs: dict[int, dict[int, set]] = {}
        self.first: dict[int, tuple[int, Optional[int], bytes]] = {}
        self.committed: dict[int, bytes] = {}
        self.violations: list[Violation] = []

    def _fail(self, prop: str, round_no: int, detail: str, event: Optional[int]) -> None:
        self.violations.append(Violation(prop, round_no, detail, event))

    def has(self, slot: int, k: int, value: bytes) -> bool:
        return value in self.certs.get(slot, {}).get(k, ())

    def cert(self, round_no: int, slot: int, k: int, value: bytes, event: Optional[int] = None) -> None:
        bucket = self.certs.setdefault(slot, {}).setdefault(k, set())
        if value in bucket:
            return
        bucket.add(value)
        first = self.first.get(slot)
        if first is not None and first[1] is not None and k >= first[1] and value != first[2]:
            self._fail(CERT_UNIQUENESS, round_no,
                       f"slot {slot}: certificate for {value.hex()} at k={k} after commit of "
                       f"{first[2].hex()} at k={first[1]}", event)

    def commit(self, round_no: int, replica: int, slot: int, k: Optional[int], value: bytes,
               event: Optional[int] = None) -> None:
        prior = self.committed.get(slot)
        if prior is not None and prior != value:
            self._fail(AGREEMENT, round_no,
                       f"slot {slot}: replica {replica} committed {value.hex()} but {prior.hex()} was committed",
                       event)
            return
        if prior is None:
            self.committed[slot] = value
        first = self.first.get(slot)
        if k is not None and (first is None or first[1] is None or (first[0] == round_no and k < first[1])):
            self.first[slot] = (round_no, k, value)
            for kk, values in self.certs.get(slot, {}).items():
                if kk >= k and values - {value}:
                    bad = sorted(values - {value})[0]
                    self._fail(CERT_UNIQUENESS, round_no,
                               f"slot {slot}: certificate for {bad.hex()} at k={kk} conflicts with "
                               f"commit of {value.hex()} at k={k}", event)
        elif first is None:
            self.first[slot] = (round_no, None, value)


# -- simulation ---------------------------------------------------------------


def _targets(n: int, dest) -> Iterable[int]:
    if dest is None:
        return range(n)
    if isinstance(dest, int):
        return (dest,)
    return dest


def _certs_in(msg) -> Iterable[CommitCertificate]:
    if isinstance(msg, (StatusMsg, NotifyMsg)):
        if isinstance(msg.cert, CommitCertificate):
            yield msg.cert
    elif isinstance(msg, ProposeMsg):
        if msg.proof is not None and isinstance(msg.proof.cert, CommitCertificate):
            yield msg.proof.cert
    elif isinstance(msg, CommitCertificate):
        yield msg
    elif isinstance(msg, NotifyCertificate):
        yield msg.as_commit_certificate()


class Simulation:
    """Drives replica objects through rounds.  Protocol-agnostic.

    Replica objects need ``send(info) -> [(dest, msg)]``,
    ``receive(info, inbox)`` and an ``events`` list of ``(kind, detail)``
    pairs that the simulator drains after every round.
    """

    def __init__(self, n: int, f: int, keyring: Keyring, validator: Validator, replicas: list,
                 strategy: Optional[Strategy] = None, seed: int = 0, trace: Optional[Trace] = None,
                 parallel: bool = False, workers: int = 4) -> None:
        self.n = n
        self.f = f
        self.keyring = keyring
        self.validator = validator
        self.replicas = replicas
        self.adversary = Adversary(n, f, keyring, strategy or Strategy(), seed)
        for r in self.adversary.strategy.static:
            self.adversary.corrupt(r, 0)
        self.trace = trace if trace is not None else Trace(record_sends=False)
        self.ledger = CertificateLedger()
        self.violations: list[Violation] = []
        self.round = 0
        self.parallel = parallel
        self.workers = workers
        self._seen_msgs: dict[int, object] = {}
        self._seen_certs: dict[int, object] = {}
        self.commit_listeners: list[Callable] = []
        self._log_corruptions()

    # -- helpers --------------------------------------------------------------

    @property
    def corrupted(self) -> list[int]:
        return self.adversary.corrupted

    def honest(self) -> list[int]:
        bad = set(self.adversary.corrupted)
        return [i for i in range(self.n) if i not in bad]

    def is_honest(self, i: int) -> bool:
        return not self.adversary.is_corrupt(i)

    def fail(self, prop: str, detail: str, event: Optional[int] = None) -> None:
        self.violations.append(Violation(prop, self.round, detail, event))

    def _log_corruptions(self) -> None:
        for round_no, kind, detail in self.adversary.log:
            self.trace.add(round_no, HARNESS, kind, detail)
        self.adversary.log.clear()

    # -- one round ------------------------------------------------------------

    def send_phase(self, info: RoundInfo, elect: Optional[Callable[[RoundInfo], None]] = None) -> list:
        self.round = info.number
        self.adversary.strategy.on_round_start(self.adversary, info)
        self._log_corruptions()
        outs = [rep.send(info) for rep in self.replicas]
        if elect is not None:
            elect(info)
            self.trace.add(info.number, HARNESS, "elect", {"k": info.k, "leader": info.leader})
            self.adversary.strategy.on_elect(self.adversary, info)
            self._log_corruptions()
        return outs

    def adversary_view(self, outs: list) -> list:
        """Messages the corrupted replicas receive this round from honest senders."""
        bad = set(self.adversary.corrupted)
        seen = []
        for i, out in enumerate(outs):
            if i in bad:
                continue
            for dest, msg in out:
                if any(j in bad for j in _targets(self.n, dest)):
                    seen.append(msg)
        return seen

    def adversary_phase(self, info: RoundInfo, outs: list, choose=None) -> dict[int, list]:
        adv = self.adversary
        adv.observe(self.adversary_view(outs))
        result = {}
        for i in sorted(adv.corrupted):
            action = adv.strategy.choose(adv, info, i) if choose is None else choose(i)
            result[i] = adv.apply(action, info, i, outs[i])
        return result

    def deliver_phase(self, info: RoundInfo, outs: list, byz: dict[int, list]) -> None:
        n = self.n
        inboxes: list[list] = [[] for _ in range(n)]
        record = self.trace.record_sends
        for i in range(n):
            out = byz[i] if i in byz else outs[i]
            for dest, msg in out:
                targets = list(_targets(n, dest))
                for j in targets:
                    inboxes[j].append((i, msg))
                if record:
                    self.trace.add(info.number, i, "send",
                                   {"type": type(msg).__name__, "to": "all" if dest is None else targets},
                                   message_digest(msg))
                self._scan(info.number, msg)
        if self.parallel:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(lambda j: self.replicas[j].receive(info, inboxes[j]), range(n)))
        else:
            for j in range(n):
                self.replicas[j].receive(info, inboxes[j])
        self._drain(info)

    def step(self, info: RoundInfo, elect: Optional[Callable[[RoundInfo], None]] = None) -> None:
        outs = self.send_phase(info, elect)
        byz = self.adversary_phase(info, outs)
        self.deliver_phase(info, outs, byz)

    # -- bookkeeping ----------------------------------------------------------

    def _scan(self, round_no: int, msg) -> None:
        key = id(msg)
        if key in self._seen_msgs:
            return
        self._seen_msgs[key] = msg
        for cert in _certs_in(msg):
            ck = id(cert)
            if ck in self._seen_certs:
                continue
            self._seen_certs[ck] = cert
            if self.validator.cert_reason(cert).name == "OK" and not self.ledger.has(cert.slot, cert.k, cert.value):
                ev = self.trace.add(round_no, HARNESS, "cert",
                                    {"slot": cert.slot, "k": cert.k, "value": cert.value.hex()})
                self.ledger.cert(round_no, cert.slot, cert.k, cert.value, ev)

    def _drain(self, info: RoundInfo) -> None:
        for i, rep in enumerate(self.replicas):
            if not rep.events:
                continue
            honest = self.is_honest(i)
            for kind, detail in rep.events:
                ev = self.trace.add(info.number, i, kind if honest else "shadow-" + kind, detail)
                if kind == "commit":
                    value = bytes.fromhex(detail["value"])
                    k = detail.get("k")
                    slot = detail.get("slot", 0)
                    if k is not None:
                        # a commit means f+1 commit requests for (value, k) exist
                        self.ledger.cert(info.number, slot, k, value, ev)
                    if honest:
                        self.ledger.commit(info.number, i, slot, k, value, ev)
                        for cb in self.commit_listeners:
                            cb(i, slot, value)
            rep.events.clear()

    def verdict(self, **stats) -> Verdict:
        return Verdict(self.ledger.violations + self.violations, stats)


# -- synod harness ------------------------------------------------------------


def round_robin(k: int, n: int) -> int:
    return (k - 1) % n


@dataclass
class SynodRun:
    sim: Simulation
    rounds: int
    decisions: dict[int, Optional[bytes]]
    verdict: Verdict


def synod_infos(k: int, first_round: int, leader: int, slot: int = 0) -> list[RoundInfo]:
    return [RoundInfo(first_round + r, kind, k, leader, slot) for r, kind in enumerate(ROUND_KINDS)]


class SynodDriver:
    """Runs one synod instance with a leader schedule until all honest replicas terminate."""

    def __init__(self, n: int, f: int, inputs: Optional[list[bytes]] = None, seed: int = 0,
                 strategy: Optional[Strategy] = None, leaders: Optional[list[int]] = None,
                 scheme: str = "hmac", trace: Optional[Trace] = None, parallel: bool = False,
                 detect_equivocation: bool = True) -> None:
        self.n, self.f = n, f
        self.keyring = Keyring(n, seed, scheme)
        self.validator = Validator(n, f, self.keyring)
        inputs = inputs or [f"v{i}".encode() for i in range(n)]
        self.replicas = [SynodReplica(i, n, f, self.validator, self.keyring.signer(i), inputs[i])
                         for i in range(n)]
        for r in self.replicas:
            r.inst.detect_equivocation = detect_equivocation
        self.leaders = leaders
        self.sim = Simulation(n, f, self.keyring, self.validator, self.replicas, strategy, seed, trace, parallel)
        self.k = 0

    def leader_of(self, k: int) -> int:
        if self.leaders:
            return self.leaders[(k - 1) % len(self.leaders)]
        return round_robin(k, self.n)

    def all_honest_done(self) -> bool:
        return all(self.replicas[i].terminated for i in self.sim.honest())

    def iteration_infos(self) -> list[RoundInfo]:
        self.k += 1
        return synod_infos(self.k, 4 * (self.k - 1) + 1, self.leader_of(self.k))

    def check_liveness(self, info: RoundInfo) -> None:
        """An iteration led by an honest (possibly terminated) leader terminates every honest replica."""
        if not self.sim.is_honest(info.leader):
            return
        stuck = [i for i in self.sim.honest() if not self.replicas[i].terminated]
        if stuck:
            self.sim.fail(LIVENESS, f"iteration {info.k} had honest leader {info.leader} "
                                    f"but replicas {stuck} did not terminate")

    def run(self, max_iterations: int = 20) -> SynodRun:
        rounds = 0
        while self.k < max_iterations and not self.all_honest_done():
            for info in self.iteration_infos():
                self.sim.step(info)
                rounds = info.number
            self.check_liveness(info)
        decisions = {i: self.replicas[i].decision for i in self.sim.honest()}
        verdict = self.sim.verdict(rounds=rounds, iterations=self.k)
        return SynodRun(self.sim, rounds, decisions, verdict)


# -- scenario entry point -----------------------------------------------------


def run(scenario, trace: Optional[Trace] = None, parallel: bool = False):
    """Run one scenario; returns ``(Trace, Verdict)``."""
    from .scenario import build_run

    trace = trace if trace is not None else Trace(record_sends=True)
    verdict = build_run(scenario, trace, parallel)
    return trace, verdict


def exhaustive_small(n: int = 3, iterations: int = 3, menu=None, detect_equivocation: bool = True,
                     budget: int = 2_000_000):
    from .exhaustive import explore

    return explore(n=n, iterations=iterations, menu=menu, detect_equivocation=detect_equivocation,
                   budget=budget)


__all__ = [
    "AGREEMENT", "CERT_UNIQUENESS", "CertificateLedger", "ConfigError", "InvariantViolation", "LIVENESS",
    "Simulation", "SynodDriver", "SynodRun", "Trace", "TraceEvent", "Verdict", "Violation",
    "exhaustive_small", "round_robin", "run", "synod_infos",
]
