"""The 4-round synchronous Byzantine synod (n = 2f+1).

``SynodInstance`` holds the per-slot state of one replica and implements the
four rounds as separate send/receive handlers.  It never schedules itself:
the caller passes the iteration number and the iteration leader each round.
``SynodReplica`` wires one instance to the round-based simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .crypto import Signer
from .wire import (
    CommitCertificate,
    CommitMsg,
    Context,
    NotifyMsg,
    NotifySummary,
    ProposeMsg,
    ProposeSummary,
    Reason,
    SafeValueProof,
    SenderValue,
    StatusMsg,
    Validator,
)

STATUS, PROPOSE, COMMIT, NOTIFY = "status", "propose", "commit", "notify"
ROUND_KINDS = (STATUS, PROPOSE, COMMIT, NOTIFY)

Inbox = list[tuple[int, object]]
Outbox = list[tuple[Optional[int], object]]  # None destination = every replica


@dataclass
class Accepted:
    value: Optional[bytes] = None
    k: int = 0
    cert: object = None  # CommitCertificate, SenderValue (pre-round) or None

    @property
    def rank(self) -> tuple[int, int]:
        return (self.k, 0 if self.value is None else 1)


@dataclass
class RoundInfo:
    """What the harness tells every replica about the current round."""

    number: int
    kind: str
    k: int = 0
    leader: Optional[int] = None
    slot: int = 0
    per_slot: Optional[dict] = None  # leader per instance when instances differ
    hint: Optional[int] = None  # leader to be elected, for the lazy-candidate shortcut

    def leader_for(self, slot: int) -> Optional[int]:
        if self.per_slot is not None and slot in self.per_slot:
            return self.per_slot[slot]
        return self.leader


@dataclass
class SynodInstance:
    me: int
    n: int
    f: int
    slot: int
    validator: Validator
    signer: Signer
    accepted: Accepted = field(default_factory=Accepted)
    v_from_leader: Optional[bytes] = None
    forward: object = None
    committed: Optional[tuple[bytes, int]] = None
    commit_cert: Optional[CommitCertificate] = None
    terminated: bool = False
    notified: bool = False
    final_notify: Optional[NotifyMsg] = None
    peers: dict[int, NotifyMsg] = field(default_factory=dict)
    seen: dict[int, set] = field(default_factory=dict)
    commit_sent: set = field(default_factory=set)
    proof: Optional[SafeValueProof] = None
    events: list = field(default_factory=list)

    # Mutation switch for tests; honest replicas always check.
    detect_equivocation: bool = True

    def _emit(self, kind: str, **detail) -> None:
        detail.setdefault("slot", self.slot)
        self.events.append((kind, detail))

    def ctx(self, k: int, leader: Optional[int] = None) -> Context:
        return Context(slot=self.slot, k=k, leader=leader)

    # -- round 0 ------------------------------------------------------------

    def status_msg(self, k: int) -> Optional[StatusMsg]:
        if self.terminated:
            return None
        a = self.accepted
        return StatusMsg.create(self.signer, self.slot, k, a.value, a.k, a.cert)

    def collect_status(self, k: int, inbox: Inbox) -> Optional[SafeValueProof]:
        """Leader side of round 0: pick f+1 valid summaries into a safe value proof.

        Terminated peers' notify summaries stand in for their statuses.  The
        highest-ranked summary (lowest signer on ties) is always included
        together with its certificate.
        """
        ctx = self.ctx(k)
        pool: dict[int, tuple[tuple[int, int], object, object]] = {}
        for _, msg in inbox:
            if not isinstance(msg, StatusMsg) or msg.signer in pool:
                continue
            if self.validator.status_reason(msg, ctx) is Reason.OK:
                s = msg.summary
                rank = (s.accepted_k, 0 if s.value is None else 1)
                pool[msg.signer] = (rank, s, msg.cert)
        for t, nm in sorted(self.peers.items()):
            if t not in pool and nm.summary.k < k:
                pool[t] = ((nm.summary.k, 1), nm.summary, nm.cert)
        return assemble_proof(self.slot, k, pool, self.f)

    # -- round 1 ------------------------------------------------------------

    def propose(self, k: int, proof: SafeValueProof, choice: Callable[[], bytes]) -> ProposeMsg:
        """Leader side of round 1: propose a value that is safe under ``proof``."""
        reason, forced = self.validator.proof_check(proof, self.slot, k)
        if reason is not Reason.OK:
            raise ValueError(f"leader built an invalid proof: {reason.value}")
        value = forced if forced is not None else choice()
        return ProposeMsg.create(self.signer, self.slot, k, value, proof)

    def on_propose(self, k: int, leader: int, inbox: Inbox, allow_unproven: bool = False) -> None:
        self.v_from_leader = None
        self.forward = None
        if self.terminated:
            return
        seen = self.seen.setdefault(k, set())
        virtual = self.peers.get(leader)
        if virtual is not None:
            vt = virtual.summary
            seen.add(vt.value)
            if vt.value == self.accepted.value:
                self.v_from_leader, self.forward = vt.value, vt
        ctx = Context(slot=self.slot, k=k, leader=leader, allow_unproven=allow_unproven)
        for sender, msg in inbox:
            if sender != leader or not isinstance(msg, ProposeMsg):
                continue
            if self.validator.propose_reason(msg, ctx) is Reason.OK:
                seen.add(msg.summary.value)
                if self.v_from_leader is None:
                    self.v_from_leader, self.forward = msg.summary.value, msg.summary
        if len(seen) > 1:
            # the leader already signed something else for this iteration: forward, never commit
            self.v_from_leader = None

    # -- round 2 ------------------------------------------------------------

    def commit_msgs(self, k: int) -> list:
        if self.terminated or self.forward is None or k in self.commit_sent:
            return []
        self.commit_sent.add(k)
        if self.v_from_leader is None:
            return [self.forward]
        return [self.forward, CommitMsg.create(self.signer, self.slot, k, self.v_from_leader)]

    def on_commit(self, k: int, leader: int, inbox: Inbox) -> None:
        if self.terminated:
            return
        ctx = self.ctx(k, leader)
        seen = self.seen.setdefault(k, set())
        for _, item in inbox:
            if isinstance(item, (ProposeSummary, NotifySummary)) and self.validator.forwarded_proposal_ok(item, ctx):
                seen.add(item.value)
        v = self.v_from_leader
        if v is None:
            return
        if self.detect_equivocation and any(x != v for x in seen):
            self._emit("equivocation", k=k, leader=leader)
            return
        votes: dict[int, object] = {}
        for _, msg in inbox:
            if isinstance(msg, CommitMsg) and msg.value == v and msg.signer not in votes:
                if self.validator.commit_reason(msg, ctx) is Reason.OK:
                    votes[msg.signer] = msg
        for t, nm in self.peers.items():
            if t not in votes and nm.summary.value == v and nm.summary.k < k:
                votes[t] = nm.summary
        if len(votes) < self.f + 1:
            return
        entries = tuple(votes[s] for s in sorted(votes)[: self.f + 1])
        cert = CommitCertificate(self.slot, v, k, entries)
        self.commit_cert = cert
        self.committed = (v, k)
        self.accepted = Accepted(v, k, cert)
        self._emit("commit", k=k, value=v.hex())

    # -- round 3 ------------------------------------------------------------

    def notify_msg(self, k: int) -> Optional[NotifyMsg]:
        if self.committed is None or self.notified:
            return None
        v, kc = self.committed
        self.final_notify = NotifyMsg.create(self.signer, self.slot, kc, v, self.commit_cert)
        self.notified = True
        self.terminated = True
        self._emit("terminate", k=kc)
        return self.final_notify

    def on_notify(self, k: int, inbox: Inbox) -> None:
        """End of round 3: record terminated peers and accept (lowest sender on conflicts)."""
        ctx = self.ctx(k)
        valid: dict[int, NotifyMsg] = {}
        for _, msg in inbox:
            if isinstance(msg, NotifyMsg) and msg.signer not in valid and msg.signer != self.me:
                if self.validator.notify_reason(msg, ctx) is Reason.OK:
                    valid[msg.signer] = msg
        for t, nm in valid.items():
            self.peers.setdefault(t, nm)
        if self.terminated or not valid:
            return
        self.on_notify_received(valid[min(valid)])

    def on_notify_received(self, nm: NotifyMsg) -> None:
        s = nm.summary
        if s.k < self.accepted.k:
            return
        self.accepted = Accepted(s.value, s.k, nm.cert)
        self._emit("accept", k=s.k, value=s.value.hex(), source=s.signer)

    def accept_sender_value(self, sv: SenderValue) -> None:
        """Pre-round accept: state becomes (v_s, 0, <v_s>)."""
        self.accepted = Accepted(sv.value, 0, sv)
        self._emit("accept", k=0, value=sv.value.hex(), source=sv.signer)


def assemble_proof(slot: int, k: int, pool: dict, f: int) -> Optional[SafeValueProof]:
    """Pick f+1 entries of ``pool`` (signer -> (rank, entry, cert)) into a safe value proof.

    The highest-ranked entry (lowest signer on ties) is always included
    together with its certificate; the rest are the lowest signers.
    """
    if len(pool) < f + 1:
        return None
    best = min(pool, key=lambda sid: (tuple(-x for x in pool[sid][0]), sid))
    rest = [sid for sid in sorted(pool) if sid != best][:f]
    chosen = sorted([best, *rest])
    top_rank, _, top_cert = pool[best]
    cert = None if top_rank == (0, 0) else top_cert
    return SafeValueProof(slot, k, tuple(pool[sid][1] for sid in chosen), cert)


class SynodReplica:
    """One replica running a single synod instance under harness-driven rounds.

    With ``all_lead`` every replica acts as a candidate leader in the status
    and propose rounds; the real leader is revealed only after proposals are
    out, and replicas honor just that leader's proposal.
    """

    def __init__(self, me: int, n: int, f: int, validator: Validator, signer: Signer,
                 input_value: bytes, slot: int = 0, all_lead: bool = False) -> None:
        self.me = me
        self.n = n
        self.f = f
        self.input_value = input_value
        self.all_lead = all_lead
        self.inst = SynodInstance(me, n, f, slot, validator, signer)
        self._proof: Optional[SafeValueProof] = None

    @property
    def events(self) -> list:
        return self.inst.events

    @property
    def terminated(self) -> bool:
        return self.inst.terminated

    @property
    def decision(self) -> Optional[bytes]:
        return None if self.inst.committed is None else self.inst.committed[0]

    def choice(self) -> bytes:
        return self.input_value

    def send(self, info: RoundInfo) -> Outbox:
        inst = self.inst
        k = info.k
        if info.kind == STATUS:
            msg = inst.status_msg(k)
            if msg is None:
                return []
            if self.all_lead:
                return [(None, msg)]
            return [(info.leader, msg)]
        if info.kind == PROPOSE:
            if inst.terminated or self._proof is None:
                return []
            if not self.all_lead and info.leader != self.me:
                return []
            return [(None, inst.propose(k, self._proof, self.choice))]
        if info.kind == COMMIT:
            return [(None, m) for m in inst.commit_msgs(k)]
        if info.kind == NOTIFY:
            msg = inst.notify_msg(k)
            return [] if msg is None else [(None, msg)]
        return []

    def receive(self, info: RoundInfo, inbox: Inbox) -> None:
        inst = self.inst
        k = info.k
        if info.kind == STATUS:
            self._proof = None
            if not inst.terminated and (self.all_lead or info.leader == self.me):
                self._proof = inst.collect_status(k, inbox)
        elif info.kind == PROPOSE:
            inst.on_propose(k, info.leader, inbox)
        elif info.kind == COMMIT:
            inst.on_commit(k, info.leader, inbox)
        elif info.kind == NOTIFY:
            inst.on_notify(k, inbox)


def leader_collect_status(inst: SynodInstance, k: int, inbox: Inbox) -> Optional[SafeValueProof]:
    return inst.collect_status(k, inbox)


def leader_propose(inst: SynodInstance, k: int, proof: SafeValueProof,
                   choice_hook: Callable[[], bytes]) -> ProposeMsg:
    return inst.propose(k, proof, choice_hook)


def step_round(replica, info: RoundInfo, inbox: Inbox) -> Outbox:
    """Process the inbox delivered at the end of round ``info`` and return
    the replica's sends for the following round of the same iteration.

    Convenience for driving a replica by hand; the simulator calls
    ``send``/``receive`` directly.
    """
    replica.receive(info, inbox)
    nxt = ROUND_KINDS.index(info.kind) + 1
    if nxt >= len(ROUND_KINDS):
        return []
    return replica.send(RoundInfo(info.number + 1, ROUND_KINDS[nxt], info.k, info.leader, info.slot))
