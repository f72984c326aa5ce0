"""Basic state machine replication: one synod instance per slot, run back to back.

Each replica works only on its cursor slot ``s_i`` (the lowest slot it has
not committed).  Messages for past slots are ignored, since the replica's
final notify for those slots serves as its virtual message.  From future
slots only notify messages are used: they set the accepted state of that
slot.  Leaders rotate round robin over iterations.
"""

from __future__ import annotations

import enum
from typing import Callable, Iterable, Optional, Union

from .adversary import FOLLOW, Action, Strategy, register_script
from .crypto import Keyring, Signer
from .simnet import LIVENESS, Simulation, Trace, Verdict, round_robin, synod_infos
from .synod import COMMIT, NOTIFY, PROPOSE, STATUS, RoundInfo, SynodInstance
from .wire import (
    Context,
    NotifyCertificate,
    NotifyMsg,
    NotifySummary,
    Reason,
    Validator,
)

NOOP = b"noop"


class Route(enum.Enum):
    PROCESS = "process"
    IGNORE_PAST = "ignore_past"
    NOTIFY_ONLY_FUTURE = "notify_only_future"
    IGNORE_FUTURE = "ignore_future"


def route(msg, cursor: int) -> Route:
    slot = msg.slot
    if slot < cursor:
        return Route.IGNORE_PAST
    if slot == cursor:
        return Route.PROCESS
    return Route.NOTIFY_ONLY_FUTURE if isinstance(msg, NotifyMsg) else Route.IGNORE_FUTURE


def round_robin_leader(k: int, n: int) -> int:
    if k < 1:
        raise ValueError("iterations start at 1")
    return round_robin(k, n)


def build_notify_certificate(inbox: Iterable, slot: int, validator: Validator) -> Optional[NotifyCertificate]:
    """f+1 distinct-signer notify summaries for one value of ``slot``, lowest signers first."""
    by_value: dict[bytes, dict[int, NotifySummary]] = {}
    for _, msg in inbox:
        s = msg.summary if isinstance(msg, NotifyMsg) else msg
        if not isinstance(s, NotifySummary) or s.slot != slot:
            continue
        if isinstance(msg, NotifyMsg) and not validator.notify_reason(msg, Context(slot, s.k), current=False) is Reason.OK:
            continue
        if not validator.notify_summary_ok(s, slot):
            continue
        by_value.setdefault(s.value, {}).setdefault(s.signer, s)
    for value in sorted(by_value):
        signers = by_value[value]
        if len(signers) >= validator.quorum:
            chosen = tuple(signers[i] for i in sorted(signers)[: validator.quorum])
            return NotifyCertificate(slot, value, chosen)
    return None


def client_verify(reply: Union[NotifyCertificate, Iterable[NotifyMsg]], slot: int,
                  validator: Validator) -> Optional[bytes]:
    """Value certified for ``slot`` by a notify certificate or f+1 notify messages; None = reject."""
    if isinstance(reply, NotifyCertificate):
        return reply.value if validator.notify_cert_reason(reply, slot) is Reason.OK else None
    msgs = list(reply)
    if len(msgs) < validator.quorum:
        return None
    signers = set()
    values = set()
    for m in msgs:
        if not isinstance(m, NotifyMsg) or m.signer in signers:
            return None
        if validator.notify_reason(m, Context(slot, m.summary.k), current=False) is not Reason.OK:
            return None
        signers.add(m.signer)
        values.add(m.summary.value)
    return values.pop() if len(values) == 1 else None


class BasicReplica:
    def __init__(self, me: int, n: int, f: int, validator: Validator, signer: Signer,
                 choose: Callable[[int, int], bytes]) -> None:
        self.me, self.n, self.f = me, n, f
        self.validator = validator
        self.signer = signer
        self.choose = choose
        self.cursor = 1
        self.instances: dict[int, SynodInstance] = {}
        self.log: dict[int, tuple[bytes, Optional[NotifyCertificate]]] = {}
        self.events: list = []
        self._proof = None

    def instance(self, slot: int) -> SynodInstance:
        inst = self.instances.get(slot)
        if inst is None:
            inst = SynodInstance(self.me, self.n, self.f, slot, self.validator, self.signer, events=self.events)
            self.instances[slot] = inst
        return inst

    def accepted(self, slot: int):
        inst = self.instances.get(slot)
        return None if inst is None else inst.accepted

    def _current(self, inbox: list) -> list:
        return [(s, m) for s, m in inbox if getattr(m, "slot", None) is not None
                and route(m, self.cursor) is Route.PROCESS]

    def send(self, info: RoundInfo) -> list:
        cur = self.instance(self.cursor)
        k = info.k
        if info.kind == STATUS:
            msg = cur.status_msg(k)
            return [] if msg is None else [(info.leader, msg)]
        if info.kind == PROPOSE:
            if info.leader != self.me or self._proof is None:
                return []
            slot = self.cursor
            return [(None, cur.propose(k, self._proof, lambda: self.choose(slot, self.me)))]
        if info.kind == COMMIT:
            return [(None, m) for m in cur.commit_msgs(k)]
        if info.kind == NOTIFY:
            msg = cur.notify_msg(k)
            return [] if msg is None else [(None, msg)]
        return []

    def receive(self, info: RoundInfo, inbox: list) -> None:
        k = info.k
        cur = self.instance(self.cursor)
        if info.kind == STATUS:
            self._proof = cur.collect_status(k, self._current(inbox)) if info.leader == self.me else None
        elif info.kind == PROPOSE:
            cur.on_propose(k, info.leader, self._current(inbox))
        elif info.kind == COMMIT:
            cur.on_commit(k, info.leader, self._current(inbox))
        elif info.kind == NOTIFY:
            by_slot: dict[int, list] = {}
            for sender, msg in inbox:
                if isinstance(msg, NotifyMsg) and route(msg, self.cursor) is not Route.IGNORE_PAST:
                    by_slot.setdefault(msg.slot, []).append((sender, msg))
            for slot in sorted(by_slot):
                self.instance(slot).on_notify(k, by_slot[slot])
            if cur.terminated:
                value = cur.committed[0]
                cert = build_notify_certificate(by_slot.get(self.cursor, []), self.cursor, self.validator)
                self.log[self.cursor] = (value, cert)
                self.events.append(("log", {"slot": self.cursor, "value": value.hex(),
                                            "certified": cert is not None}))
                self.cursor += 1
            self._proof = None


def default_choice(slot: int, leader: int) -> bytes:
    return f"req-{slot}-from-{leader}".encode()


class BasicDriver:
    """Runs basic SMR for a number of iterations and checks per-leader progress and throughput."""

    def __init__(self, n: int, f: int, seed: int = 0, strategy: Optional[Strategy] = None,
                 leaders: Optional[list[int]] = None, choose: Callable[[int, int], bytes] = default_choice,
                 scheme: str = "hmac", trace: Optional[Trace] = None, parallel: bool = False) -> None:
        self.n, self.f = n, f
        self.keyring = Keyring(n, seed, scheme)
        self.validator = Validator(n, f, self.keyring)
        self.replicas = [BasicReplica(i, n, f, self.validator, self.keyring.signer(i), choose) for i in range(n)]
        self.sim = Simulation(n, f, self.keyring, self.validator, self.replicas, strategy, seed, trace, parallel)
        self.leaders = leaders
        self.k = 0
        self.rotation_gains: list[int] = []
        self._rotation_start = 0

    def leader_of(self, k: int) -> int:
        if self.leaders:
            return self.leaders[(k - 1) % len(self.leaders)]
        return round_robin_leader(k, self.n)

    def min_cursor(self) -> int:
        return min(self.replicas[i].cursor for i in self.sim.honest())

    def common_log(self) -> int:
        """Number of slots committed by every honest replica."""
        return self.min_cursor() - 1

    def run(self, iterations: int) -> Verdict:
        rotation = 2 * self.f + 1
        for _ in range(iterations):
            self.k += 1
            leader = self.leader_of(self.k)
            before = self.min_cursor()
            for info in synod_infos(self.k, 4 * (self.k - 1) + 1, leader):
                self.sim.step(info)
            if self.sim.is_honest(leader) and self.min_cursor() <= before:
                self.sim.fail(LIVENESS, f"iteration {self.k} with honest leader {leader} "
                                        f"left the lowest honest slot at {before}")
            if self.k % rotation == 0:
                self.rotation_gains.append(self.common_log() - self._rotation_start)
                self._rotation_start = self.common_log()
        return self.sim.verdict(iterations=self.k, slots=self.common_log(),
                                rotation_gains=list(self.rotation_gains))


class StraddleStrategy(Strategy):
    """Corrupted leaders make exactly one honest replica commit the current slot.

    The proposal reaches every replica but the highest honest one, and the
    corrupted replicas' commit requests reach only the lowest honest one,
    which is then the only honest replica holding f+1 commit requests.  The
    others learn the value from its notify but stay on the slot, so honest
    cursors straddle two slots when the next leader takes over.
    """

    def choose(self, adv, info, me):
        honest = [i for i in range(adv.n) if not adv.is_corrupt(i)]
        if not adv.is_corrupt(info.leader) or not honest:
            return FOLLOW
        if info.kind == PROPOSE and me == info.leader:
            return Action("only", subset=frozenset(i for i in range(adv.n) if i != honest[-1]))
        if info.kind == COMMIT:
            return Action("only", subset=frozenset({honest[0]}))
        return FOLLOW


register_script("straddle", StraddleStrategy)
