"""Stable-leader state machine replication.

One leader per view drives every slot in three rounds (propose, commit,
notify-light).  All slots of a view share the iteration number
``iter_of_view(view)``, so a leader that signs two values for one slot in
one view is caught as an equivocator.  Every ``c`` slots the replicas
certify a digest of the batch; a certified batch is a stable checkpoint and
anchors the next view change.

Replicas accuse a leader that fails to produce a notify certificate or a
checkpoint in time.  f+1 accusations form a view-change certificate, which
the next leader turns into a new-view message.  The four view-change rounds
(VC1 to VC4) bring the new leader enough status information to re-propose
every slot after the checkpoint safely.

A replica "has view number l" once it gave up on view l-1, but is "in view
l" only if it got the new-view message for l directly from its leader and
saw no equivocation about the checkpoint.  Only in-view replicas run the
common case; everybody commits on a notify certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .adversary import ACTIONS, Action, Strategy, register_script
from .crypto import Keyring, Signer
from .simnet import (
    CHECKPOINT_SKEW,
    HONEST_LEADER_KEPT,
    LIVENESS,
    VIEW_UNIQUENESS,
    Simulation,
    Trace,
    Verdict,
)
from .synod import Accepted, RoundInfo, SynodInstance, assemble_proof
from .wire import (
    CheckpointCertificate,
    CheckpointSummary,
    CommitCertificate,
    Context,
    NewViewMsg,
    NotifyCertificate,
    NotifyMsg,
    NotifySummary,
    ProposeMsg,
    ProposeSummary,
    Reason,
    StatusMaxMsg,
    StatusMsg,
    Validator,
    ViewChangeCertificate,
    ViewChangeMsg,
    batch_digest,
    iter_of_view,
)

STABLE = "stable"
CHECKPOINT_BUDGET = 2  # rounds after a batch's last notify-light round

# trace event kinds
VIEW_CHANGE_SENT = "ViewChangeSent"
NEW_VIEW_SENT = "NewViewSent"
ENTERED_VIEW = "EnteredView"
EXITED_VIEW = "ExitedView"
CHECKPOINT_STABLE = "CheckpointStable"
LEADER_MARKED_FAULTY = "LeaderMarkedFaulty"

PROPOSE_PHASE, COMMIT_PHASE, NOTIFY_PHASE = 0, 1, 2


def default_choice(slot: int, leader: int) -> bytes:
    return f"req-{slot}-from-{leader}".encode()


@dataclass
class ViewChange:
    """A view change in progress at one replica.  ``start`` is the VC1 round."""

    target: int
    start: int
    nv: NewViewMsg
    direct: bool
    sprime: int
    equivocated: bool = False


@dataclass
class LeaderPool:
    """VC4 material the new leader keeps for building proofs during its view."""

    statuses: dict = field(default_factory=dict)  # slot -> {signer: StatusMsg}
    maxes: dict = field(default_factory=dict)  # signer -> StatusMaxMsg


class StableReplica:
    def __init__(self, me: int, n: int, f: int, validator: Validator, signer: Signer, batch: int,
                 choose: Callable[[int, int], bytes] = default_choice) -> None:
        if batch < 1:
            raise ValueError("checkpoint batch size must be at least 1")
        self.me, self.n, self.f = me, n, f
        self.q = f + 1
        self.c = batch
        self.validator = validator
        self.signer = signer
        self.choose = choose
        self.events: list = []
        # views
        self.view = 0
        self.in_view = True
        self.last_entered = 0
        self.cc_start = 1  # first propose round of the current view
        self.base_slot = 1  # slot proposed at cc_start
        self.grievances: set[int] = set()
        self.vc_seen: dict[int, dict[int, ViewChangeMsg]] = {}
        self.vcert: Optional[ViewChangeCertificate] = None
        self.v_sent_round: Optional[int] = None
        self.held: dict[int, ViewChangeCertificate] = {}
        self.nv_sent: set[int] = set()
        self.nv_seen: dict[int, int] = {}
        self.vc: Optional[ViewChange] = None
        self.pool: Optional[LeaderPool] = None
        self._vc_msgs: dict[int, ViewChangeMsg] = {}
        # slots
        self.instances: dict[int, SynodInstance] = {}
        self.log: dict[int, bytes] = {}
        self.prefix = 0
        self.light: dict[int, dict[bytes, dict[int, NotifySummary]]] = {}
        self._summaries: dict[int, NotifySummary] = {}
        self._notifies: dict[int, NotifyMsg] = {}
        # checkpoints
        self.stable = 0
        self.stable_proof: Optional[CheckpointCertificate] = None
        self.cp_certs: dict[int, CheckpointCertificate] = {}
        self.cp_votes: dict[tuple[int, bytes], dict[int, CheckpointSummary]] = {}
        self.cp_outbox: list[int] = []
        self.cp_summary_sent: set[int] = set()
        self.cp_broadcast: list[CheckpointCertificate] = []
        self.cp_due: list[tuple[int, int, int]] = []  # (batch, deadline round, view)
        self._round_stable = 0
        self._stable_at = (0, 0)

    # -- helpers --------------------------------------------------------------

    def leader(self, view: int) -> int:
        return view % self.n

    def _emit(self, kind: str, **detail) -> None:
        self.events.append((kind, detail))

    def inst(self, slot: int) -> SynodInstance:
        i = self.instances.get(slot)
        if i is None:
            i = SynodInstance(self.me, self.n, self.f, slot, self.validator, self.signer, events=self.events)
            self.instances[slot] = i
        return i

    def position(self, r: int) -> Optional[tuple[int, int]]:
        """(slot, phase) of the common case in round ``r``, if this replica runs it."""
        if not self.in_view or self.vc is not None or r < self.cc_start:
            return None
        i, phase = divmod(r - self.cc_start, 3)
        return self.base_slot + i, phase

    def _accuse(self, view: int, why: str) -> None:
        if view in self.grievances:
            return
        self.grievances.add(view)
        self._emit(LEADER_MARKED_FAULTY, view=view, leader=self.leader(view), why=why)

    def _exit(self, why: str) -> None:
        if self.in_view:
            self.in_view = False
            self._emit(EXITED_VIEW, view=self.view, why=why)

    # -- commits and checkpoints ----------------------------------------------

    def _logged(self, slot: int, value: bytes) -> None:
        self.log[slot] = value
        self.light.pop(slot, None)
        while self.prefix + 1 in self.log:
            self.prefix += 1
        # vouch for a batch only once everything up to its end is committed
        for b in range(self.stable // self.c + 1, self.prefix // self.c + 1):
            if b not in self.cp_summary_sent:
                self.cp_summary_sent.add(b)
                self.cp_outbox.append(b)

    def _commit(self, slot: int, value: bytes, cert: CommitCertificate, via: str) -> None:
        inst = self.inst(slot)
        if slot in self.log:
            return
        inst.committed = (value, cert.k)
        inst.commit_cert = cert
        inst.accepted = Accepted(value, cert.k, cert)
        inst.terminated = True
        self._emit("commit", slot=slot, k=cert.k, value=value.hex(), via=via)
        self._logged(slot, value)

    def _transfer(self, cert: CheckpointCertificate) -> None:
        """Commit a certified batch without per-slot certificates."""
        base = (cert.batch - 1) * self.c
        for i, value in enumerate(cert.values, 1):
            slot = base + i
            if slot in self.log:
                continue
            inst = self.inst(slot)
            inst.committed = (value, 0)
            inst.terminated = True
            self._emit("commit", slot=slot, k=None, value=value.hex(), via="checkpoint")
            self._logged(slot, value)

    def _take_checkpoint(self, cert: CheckpointCertificate) -> None:
        if cert.batch * self.c <= self.stable or cert.batch in self.cp_certs:
            return
        self.cp_certs[cert.batch] = cert
        self._transfer(cert)
        self.cp_broadcast.append(cert)
        self.stable = cert.batch * self.c
        self.stable_proof = cert
        self._emit(CHECKPOINT_STABLE, slot=self.stable, batch=cert.batch)

    def _summary(self, slot: int) -> Optional[NotifySummary]:
        s = self._summaries.get(slot)
        if s is None:
            inst = self.instances.get(slot)
            if inst is None or inst.commit_cert is None:
                return None
            v, k = inst.committed
            s = NotifySummary.create(self.signer, slot, k, v)
            self._summaries[slot] = s
        return s

    def _full_notify(self, slot: int) -> Optional[NotifyMsg]:
        nm = self._notifies.get(slot)
        if nm is None:
            inst = self.instances.get(slot)
            if inst is None or inst.commit_cert is None:
                return None
            v, k = inst.committed
            nm = NotifyMsg.create(self.signer, slot, k, v, inst.commit_cert)
            self._notifies[slot] = nm
            self._summaries.setdefault(slot, nm.summary)
        return nm

    # -- send -----------------------------------------------------------------

    def send(self, info: RoundInfo) -> list:
        r = info.number
        self._round_stable = self.stable
        out: list = []
        self._send_monitor(r, out)
        self._send_view_change(r, out)
        self._send_common_case(r, out)
        self._send_checkpoints(out)
        return out

    def _vc_msg(self, target: int) -> ViewChangeMsg:
        m = self._vc_msgs.get(target)
        if m is None:
            m = ViewChangeMsg.create(self.signer, target)
            self._vc_msgs[target] = m
            self._emit(VIEW_CHANGE_SENT, view=target)
        return m

    def _send_monitor(self, r: int, out: list) -> None:
        for g in sorted(self.grievances):
            if g >= self.last_entered:
                out.append((None, self._vc_msg(g + 1)))
        if self.vcert is not None and self.vcert.view == self.view + 1:
            out.append((self.leader(self.vcert.view), self.vcert))
            if self.v_sent_round is None:
                self.v_sent_round = r
        if self.held:
            m = max(self.held)
            if m > self.view and m not in self.nv_sent and (self.vc is None or m > self.vc.target):
                proof = self.stable_proof if self.stable else None
                nv = NewViewMsg.create(self.signer, m, self.held[m], self.stable, proof)
                self.nv_sent.add(m)
                out.append((None, nv))
                self._emit(NEW_VIEW_SENT, view=m, checkpoint=self.stable)

    def _send_view_change(self, r: int, out: list) -> None:
        vc = self.vc
        if vc is None:
            return
        phase = r - vc.start
        new_leader = self.leader(vc.target)
        if phase == 1 and vc.direct and new_leader != self.me:
            out.append((None, vc.nv))
        elif phase == 2:
            for slot in sorted(self.log):
                if slot > vc.sprime:
                    nm = self._full_notify(slot)
                    if nm is not None:
                        out.append((None, nm))
        elif phase == 3:
            k = iter_of_view(vc.target)
            touched = [s for s, i in self.instances.items() if s in self.log or i.accepted.value is not None]
            top = max([vc.sprime, *touched])
            for slot in range(vc.sprime + 1, top + 1):
                a = self.inst(slot).accepted
                out.append((new_leader, StatusMsg.create(self.signer, slot, k, a.value, a.k, a.cert)))
            out.append((new_leader, StatusMaxMsg.create(self.signer, top, vc.target)))

    def _proof_for(self, slot: int, k: int):
        pool = {}
        lp = self.pool or LeaderPool()
        for sid, msg in lp.statuses.get(slot, {}).items():
            s = msg.summary
            pool[sid] = ((s.accepted_k, 0 if s.value is None else 1), s, msg.cert)
        for sid, mx in lp.maxes.items():
            if sid not in pool and slot > mx.top:
                pool[sid] = ((0, 0), mx, None)
        for t, nm in self.inst(slot).peers.items():
            if t not in pool and nm.summary.k < k:
                pool[t] = ((nm.summary.k, 1), nm.summary, nm.cert)
        return assemble_proof(slot, k, pool, self.f)

    def _proposal(self, slot: int, k: int) -> Optional[ProposeMsg]:
        inst = self.inst(slot)
        if inst.terminated:
            return None  # our final notify serves as the proposal
        if self.view == 0:
            return ProposeMsg.create(self.signer, slot, k, self.choose(slot, self.me), None)
        proof = self._proof_for(slot, k)
        if proof is None:
            return None
        reason, forced = self.validator.proof_check(proof, slot, k)
        if reason is not Reason.OK:
            return None
        value = forced if forced is not None else self.choose(slot, self.me)
        return ProposeMsg.create(self.signer, slot, k, value, proof)

    def _send_common_case(self, r: int, out: list) -> None:
        pos = self.position(r)
        if pos is None:
            return
        slot, phase = pos
        k = iter_of_view(self.view)
        if phase == PROPOSE_PHASE:
            if self.leader(self.view) == self.me:
                msg = self._proposal(slot, k)
                if msg is not None:
                    out.append((None, msg))
        elif phase == COMMIT_PHASE:
            out.extend((None, m) for m in self.inst(slot).commit_msgs(k))
        else:
            s = self._summary(slot)
            if s is not None:
                out.append((None, s))

    def _send_checkpoints(self, out: list) -> None:
        for b in self.cp_outbox:
            lo = (b - 1) * self.c + 1
            values = tuple(self.log[s] for s in range(lo, lo + self.c))
            out.append((None, CheckpointSummary.create(self.signer, b, batch_digest(b, values))))
        self.cp_outbox = []
        for cert in self.cp_broadcast:
            out.append((None, cert))
        self.cp_broadcast = []

    # -- receive --------------------------------------------------------------

    def receive(self, info: RoundInfo, inbox: list) -> None:
        r = info.number
        # stable checkpoint at the start of this round and of the previous one
        self._stable_at = (self._round_stable, self._stable_at[0])
        self._recv_checkpoints(inbox)
        self._recv_notify_summaries(inbox)
        self._recv_view_change_msgs(inbox)
        self._record_leader_values(inbox)
        self._recv_common_case(r, inbox)
        self._recv_new_view(r, inbox)
        self._recv_view_change(r, inbox)
        self._monitor_deadline(r)
        self._checkpoint_deadlines(r)

    def _recv_checkpoints(self, inbox: list) -> None:
        touched = set()
        for _, m in sorted(inbox, key=lambda sm: getattr(sm[1], "batch", 0)):
            if isinstance(m, CheckpointCertificate):
                if m.batch * self.c > self.stable and m.batch not in self.cp_certs:
                    if self.validator.checkpoint_cert_reason(m) is Reason.OK:
                        self._take_checkpoint(m)
            elif isinstance(m, CheckpointSummary):
                if m.batch * self.c > self.stable and self.validator.signed_ok(m):
                    self.cp_votes.setdefault((m.batch, m.digest), {}).setdefault(m.signer, m)
                    touched.add((m.batch, m.digest))
        for b, d in sorted(touched):
            votes = self.cp_votes[(b, d)]
            if len(votes) < self.q or b in self.cp_certs or b * self.c <= self.stable:
                continue
            if self.prefix < b * self.c:
                continue
            lo = (b - 1) * self.c + 1
            values = tuple(self.log[s] for s in range(lo, lo + self.c))
            if batch_digest(b, values) != d:
                continue
            chosen = tuple(votes[i] for i in sorted(votes)[: self.q])
            self._take_checkpoint(CheckpointCertificate(b, d, values, chosen))
        for key in [key for key in self.cp_votes if key[0] * self.c <= self.stable]:
            del self.cp_votes[key]

    def _recv_notify_summaries(self, inbox: list) -> None:
        touched = set()
        for _, m in inbox:
            s = m.summary if isinstance(m, NotifyMsg) else m
            if not isinstance(s, NotifySummary) or s.slot in self.log or s.slot <= self.stable:
                continue
            if self.validator.notify_summary_ok(s, s.slot):
                self.light.setdefault(s.slot, {}).setdefault(s.value, {}).setdefault(s.signer, s)
                touched.add(s.slot)
        for slot in sorted(touched):
            for value, sigs in sorted(self.light.get(slot, {}).items()):
                if len(sigs) >= self.q:
                    n_cert = NotifyCertificate(slot, value, tuple(sigs[i] for i in sorted(sigs)[: self.q]))
                    self._commit(slot, value, n_cert.as_commit_certificate(), "notify-certificate")
                    break

    def _recv_view_change_msgs(self, inbox: list) -> None:
        for _, m in inbox:
            if isinstance(m, ViewChangeMsg):
                if m.view > self.view and self.validator.signed_ok(m):
                    self.vc_seen.setdefault(m.view, {}).setdefault(m.signer, m)
            elif isinstance(m, ViewChangeCertificate):
                if (m.view > self.view and self.leader(m.view) == self.me and m.view not in self.held
                        and self.validator.view_change_cert_reason(m, m.view) is Reason.OK):
                    self.held[m.view] = m
        for view in [v for v in self.vc_seen if v <= self.view]:
            del self.vc_seen[view]
        for view, got in self.vc_seen.items():
            if len(got) < self.q:
                continue
            cert = None
            if view == self.view + 1 and self.vcert is None:
                cert = self.vcert = ViewChangeCertificate(view, tuple(got[i] for i in sorted(got)[: self.q]))
            if self.leader(view) == self.me and view not in self.held:
                self.held[view] = cert or ViewChangeCertificate(view, tuple(got[i] for i in sorted(got)[: self.q]))

    def _record_leader_values(self, inbox: list) -> None:
        """Remember every value the current leader signed for a slot, whatever our phase.

        Replicas that entered a view one round apart run the common case out
        of phase; recording forwarded proposals in every round keeps the
        equivocation check sound for them.
        """
        if not self.in_view:
            return
        leader = self.leader(self.view)
        k = iter_of_view(self.view)
        for _, m in inbox:
            s = m.summary if isinstance(m, ProposeMsg) else m
            if isinstance(s, ProposeSummary):
                if s.signer == leader and s.k == k and s.value and self.validator.signed_ok(s):
                    self.inst(s.slot).seen.setdefault(k, set()).add(s.value)
            elif isinstance(s, NotifySummary) and s.signer == leader and s.k <= k and s.value:
                if self.validator.signed_ok(s) and s.slot > self.stable:
                    self.inst(s.slot).seen.setdefault(k, set()).add(s.value)

    def _recv_common_case(self, r: int, inbox: list) -> None:
        pos = self.position(r)
        if pos is None:
            return
        slot, phase = pos
        k = iter_of_view(self.view)
        leader = self.leader(self.view)
        inst = self.inst(slot)
        msgs = [(s, m) for s, m in inbox if getattr(m, "slot", None) == slot]
        if phase == PROPOSE_PHASE:
            if not inst.terminated:
                inst.on_propose(k, leader, msgs, allow_unproven=self.view == 0)
        elif phase == COMMIT_PHASE:
            if not inst.terminated:
                inst.on_commit(k, leader, msgs)
                if inst.committed is not None and slot not in self.log:
                    inst.terminated = True
                    self._logged(slot, inst.committed[0])
        else:
            if slot not in self.log:
                self._accuse(self.view, f"no notify certificate for slot {slot}")
            if slot % self.c == 0 and slot > self.stable:
                self.cp_due.append((slot // self.c, r + CHECKPOINT_BUDGET, self.view))

    def _recv_new_view(self, r: int, inbox: list) -> None:
        cands: dict[int, list] = {}
        for sender, m in inbox:
            if not isinstance(m, NewViewMsg) or m.view <= self.view:
                continue
            if self.vc is not None and m.view < self.vc.target:
                continue
            if self.validator.new_view_reason(m, m.view, self.c) is not Reason.OK:
                continue
            cands.setdefault(m.view, []).append((sender, m))
        if not cands:
            return
        target = max(cands)
        copies = cands[target]
        direct = [nv for s, nv in copies if s == nv.signer]
        forwarded = [nv for s, nv in copies if s != nv.signer]
        self.nv_seen.setdefault(target, r)
        vc = self.vc
        if vc is None or vc.target < target:
            # forwarded-only: VC1 was last round (a rushing adversary can forward in VC1 itself)
            is_direct = bool(direct)
            nv = (direct or forwarded)[0]
            self._exit(f"new view {target}")
            vc = self.vc = ViewChange(target, r if is_direct else r - 1, nv, is_direct, nv.checkpoint)
            self.pool = None
            if nv.proof is not None:
                self._take_checkpoint(nv.proof)
            if not is_direct:
                self._accuse(target, "new-view only forwarded")
            if nv.checkpoint < self._stable_at[0 if is_direct else 1] - self.c:
                # honest stable checkpoints are at most one batch apart
                vc.equivocated = True
                self._accuse(target, "new-view checkpoint more than one batch stale")
        for nv in direct + forwarded:
            if nv.checkpoint != vc.sprime and not vc.equivocated:
                vc.equivocated = True
                self._accuse(target, "new-view equivocation on checkpoint")

    def _recv_view_change(self, r: int, inbox: list) -> None:
        vc = self.vc
        if vc is None:
            return
        phase = r - vc.start
        if phase == 2:
            by_slot: dict[int, list[NotifyMsg]] = {}
            for _, m in inbox:
                if isinstance(m, NotifyMsg) and m.slot > vc.sprime:
                    by_slot.setdefault(m.slot, []).append(m)
            for slot in sorted(by_slot):
                inst = self.inst(slot)
                valid = [m for m in by_slot[slot]
                         if self.validator.notify_reason(m, Context(slot, m.summary.k), current=False) is Reason.OK]
                for m in valid:
                    if m.signer != self.me:
                        inst.peers.setdefault(m.signer, m)
                if valid and slot not in self.log:
                    best = max(valid, key=lambda m: (m.summary.k, -m.signer))
                    if best.summary.k > inst.accepted.k:
                        inst.on_notify_received(best)
        elif phase == 3:
            k = iter_of_view(vc.target)
            if self.leader(vc.target) == self.me:
                pool = LeaderPool()
                for _, m in inbox:
                    if isinstance(m, StatusMsg):
                        if self.validator.status_reason(m, Context(m.slot, k)) is Reason.OK:
                            pool.statuses.setdefault(m.slot, {}).setdefault(m.signer, m)
                    elif isinstance(m, StatusMaxMsg):
                        if m.view == vc.target and self.validator.signed_ok(m):
                            pool.maxes.setdefault(m.signer, m)
                self.pool = pool
            self.view = vc.target
            self.vc = None
            self.vcert = None
            self.v_sent_round = None
            if vc.direct and not vc.equivocated:
                self.in_view = True
                self.last_entered = self.view
                self.cc_start = r + 1
                self.base_slot = vc.sprime + 1
                self.grievances = {g for g in self.grievances if g >= self.view}
                self.cp_due = []
                self._emit(ENTERED_VIEW, view=self.view, slot=self.base_slot)
            else:
                self._exit("new view not entered")

    def _monitor_deadline(self, r: int) -> None:
        if self.v_sent_round is None or self.vc is not None or r < self.v_sent_round + 1:
            return
        target = self.view + 1
        seen = self.nv_seen.get(target)
        if seen is not None and seen >= self.v_sent_round:
            return
        self._accuse(target, "next leader did not send new-view")
        self._exit("next leader silent")
        self.view = target
        self.vcert = None
        self.v_sent_round = None

    def _checkpoint_deadlines(self, r: int) -> None:
        keep = []
        for batch, due, view in self.cp_due:
            if r < due:
                keep.append((batch, due, view))
                continue
            if (self.in_view and self.view == view and batch not in self.cp_certs
                    and self.stable < batch * self.c):
                self._accuse(view, f"checkpoint {batch} not stable in time")
        self.cp_due = keep


# -- driver ---------------------------------------------------------------------


@dataclass
class StableRun:
    verdict: Verdict
    rounds: Optional[int]
    slots: int
    views: int


class StableDriver:
    """Runs the stable-leader protocol round by round and checks its invariants.

    ``rounds`` in the result is the first round at which every honest
    replica had committed slots 1..``slots``.
    """

    def __init__(self, n: int, f: int, batch: int = 10, seed: int = 0, strategy: Optional[Strategy] = None,
                 choose: Callable[[int, int], bytes] = default_choice, scheme: str = "hmac",
                 trace: Optional[Trace] = None, parallel: bool = False) -> None:
        self.n, self.f, self.c = n, f, batch
        self.keyring = Keyring(n, seed, scheme)
        self.validator = Validator(n, f, self.keyring)
        self.replicas = [StableReplica(i, n, f, self.validator, self.keyring.signer(i), batch, choose)
                         for i in range(n)]
        self.sim = Simulation(n, f, self.keyring, self.validator, self.replicas, strategy, seed, trace, parallel)
        self.round = 0
        self._grievances = [set() for _ in range(n)]
        self.commit_rounds: dict[int, int] = {}
        self.max_skew = 0

    def common_prefix(self) -> int:
        return min(self.replicas[i].prefix for i in self.sim.honest())

    def step(self) -> None:
        self.round += 1
        self.sim.step(RoundInfo(self.round, STABLE))
        self._check()

    def _check(self) -> None:
        sim = self.sim
        honest = sim.honest()
        views = {self.replicas[i].view for i in honest if self.replicas[i].in_view}
        if len(views) > 1:
            sim.fail(VIEW_UNIQUENESS, f"honest replicas in views {sorted(views)}")
        stables = [self.replicas[i].stable for i in honest]
        skew = max(stables) - min(stables)
        self.max_skew = max(self.max_skew, skew)
        if skew > self.c:
            sim.fail(CHECKPOINT_SKEW, f"stable checkpoints {stables} differ by more than {self.c}")
        for i in honest:
            new = self.replicas[i].grievances - self._grievances[i]
            for view in sorted(new):
                leader = view % self.n
                if sim.is_honest(leader):
                    sim.fail(HONEST_LEADER_KEPT, f"replica {i} accused honest leader {leader} of view {view}")
            self._grievances[i] |= new
        prefix = self.common_prefix()
        for s in range(len(self.commit_rounds) + 1, prefix + 1):
            self.commit_rounds[s] = self.round

    def run(self, slots: int, max_rounds: Optional[int] = None) -> StableRun:
        limit = max_rounds if max_rounds is not None else 3 * slots + 200 * (self.c + 1) * (self.f + 1)
        while self.common_prefix() < slots and self.round < limit:
            self.step()
        done = self.commit_rounds.get(slots)
        if done is None:
            self.sim.fail(LIVENESS, f"{self.common_prefix()} of {slots} slots committed after {self.round} rounds")
        views = max(r.view for r in self.replicas)
        verdict = self.sim.verdict(rounds=done, slots=self.common_prefix(), views=views,
                                   max_checkpoint_skew=self.max_skew)
        return StableRun(verdict, done, self.common_prefix(), views)

    def steady_state_gaps(self, warmup: int = 1) -> list[int]:
        """Rounds between consecutive common-prefix commits, after ``warmup`` slots."""
        s = sorted(self.commit_rounds)
        return [self.commit_rounds[b] - self.commit_rounds[a] for a, b in zip(s, s[1:]) if a >= warmup]


# -- worst-case leader scripts ----------------------------------------------------


def _targets(n: int, dest) -> list[int]:
    if dest is None:
        return list(range(n))
    if isinstance(dest, int):
        return [dest]
    return sorted(dest)


class StableLeaderScript(Strategy):
    """Corrupted replicas filter their shadows' traffic by message type.

    ``leader_mode``: ``silent`` drops the corrupted leader's proposals,
    ``exclude`` keeps proposals and notify summaries away from the victims
    and withholds checkpoint summaries.  Slots up to ``honest_slots`` are
    left alone so that a stable checkpoint can exist.
    ``newview_mode``: ``follow``, ``none`` (never step up), ``half`` (send
    new-view to half the honest replicas), ``split`` (half get a new-view
    without checkpoint, the rest the real one), ``stale`` (claim no
    checkpoint).  ``victims``: ``lowest`` honest id or ``half`` of them.
    """

    def __init__(self, static, leader_mode: str = "exclude", newview_mode: str = "follow",
                 victims: str = "lowest", honest_slots: int = 0, batch: int = 1) -> None:
        super().__init__(static)
        self.batch = batch
        self.leader_mode = leader_mode
        self.newview_mode = newview_mode
        self.victims = victims
        self.honest_slots = honest_slots

    def _sets(self, n: int) -> tuple[frozenset, frozenset]:
        honest = [i for i in range(n) if i not in self.static]
        half = frozenset(honest[: max(1, len(honest) // 2)])
        victims = frozenset(honest[:1]) if self.victims == "lowest" else half
        return victims, half

    def choose(self, adv, info, me):
        return Action("stable_script")

    def transform(self, adv, me: int, out: list) -> list:
        victims, half = self._sets(adv.n)
        result = []
        for dest, msg in out:
            targets = _targets(adv.n, dest)
            late = getattr(msg, "slot", 0) > self.honest_slots
            if isinstance(msg, (CheckpointSummary, CheckpointCertificate)):
                if self.leader_mode == "exclude" and msg.batch * self.batch > self.honest_slots:
                    continue
            elif isinstance(msg, ProposeMsg) and late:
                if self.leader_mode == "silent":
                    continue
                targets = [j for j in targets if j not in victims]
            elif isinstance(msg, NotifySummary) and late and self.leader_mode == "exclude":
                targets = [j for j in targets if j not in victims]
            elif isinstance(msg, NewViewMsg) and msg.signer == me:
                mode = self.newview_mode
                if mode == "none":
                    continue
                if mode == "half":
                    targets = [j for j in targets if j in half or j in self.static]
                elif mode == "stale" and msg.checkpoint:
                    msg = NewViewMsg.create(adv.signer(me), msg.view, msg.vc_cert, 0, None)
                elif mode == "split" and msg.checkpoint:
                    alt = NewViewMsg.create(adv.signer(me), msg.view, msg.vc_cert, 0, None)
                    mine = tuple(j for j in targets if j in half)
                    if mine:
                        result.append((mine, alt))
                    targets = [j for j in targets if j not in half]
            if targets:
                result.append((tuple(targets), msg))
        return result


def _act_stable_script(adv, action, info, me, out):
    return adv.strategy.transform(adv, me, out)


ACTIONS["stable_script"] = _act_stable_script


def script_factory(leader_mode: str, newview_mode: str, victims: str = "lowest",
                   honest_slots: int = 0) -> Callable:
    def make(static, batch: int = 1):
        return StableLeaderScript(static or (0, 1), leader_mode, newview_mode, victims,
                                  honest_slots * batch, batch)
    return make


STABLE_SCRIPTS = {
    "stable-silent": script_factory("silent", "none"),
    "stable-exclude-one": script_factory("exclude", "follow"),
    "stable-half-newview": script_factory("exclude", "half"),
    "stable-newview-equivocate": script_factory("exclude", "split", honest_slots=1),
    "stable-stale-checkpoint": script_factory("exclude", "stale", honest_slots=1),
}

for _name, _factory in STABLE_SCRIPTS.items():
    register_script(_name, _factory)


def worst_case_rounds(n: int, f: int, batch: int, slots: int, seed: int = 0,
                      scripts: Optional[list[str]] = None) -> dict[str, StableRun]:
    """Run each worst-case script with the first f leaders corrupted."""
    static = tuple(range(f))
    result = {}
    for name in scripts or sorted(STABLE_SCRIPTS):
        drv = StableDriver(n, f, batch, seed, STABLE_SCRIPTS[name](static, batch))
        result[name] = drv.run(slots)
    return result


@dataclass
class LivenessFit:
    """Worst-case rounds beyond 3s against c*f, with a least-squares line through them."""

    n: int
    f: int
    slots: int
    overheads: dict[int, int]
    k_const: int
    slope: float
    intercept: float
    r2: float

    def bound(self, c: int) -> int:
        return 3 * self.slots + self.k_const * c * self.f


def liveness_fit(n: int, f: int, batches: list[int], slots: int = 50, seed: int = 0) -> LivenessFit:
    """Fix K as the smallest integer with overhead <= K*c*f for every measured c."""
    overheads = {}
    for c in batches:
        runs = worst_case_rounds(n, f, c, slots, seed)
        if not all(r.verdict.ok and r.rounds is not None for r in runs.values()):
            bad = next(name for name, r in runs.items() if not r.verdict.ok or r.rounds is None)
            raise RuntimeError(f"script {bad} failed at c={c}: {runs[bad].verdict.summary()}")
        overheads[c] = max(r.rounds for r in runs.values()) - 3 * slots
    k_const = max(-(-o // (c * f)) for c, o in overheads.items())
    x = np.array([c * f for c in batches], dtype=float)
    y = np.array([overheads[c] for c in batches], dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot
    return LivenessFit(n, f, slots, overheads, int(k_const), float(slope), float(intercept), r2)
