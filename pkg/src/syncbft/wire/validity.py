"""Validity predicates for every message and certificate.

All checks are pure functions of (message, context).  A ``Validator`` holds
the key ring and the quorum size and memoizes signature checks by object
identity, since the same immutable object is usually delivered to many
replicas.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..crypto import Keyring
from .codec import signing_payload
from .messages import (
    CheckpointCertificate,
    CheckpointSummary,
    CommitCertificate,
    CommitMsg,
    NewDayMsg,
    NewViewMsg,
    NotifyCertificate,
    NotifyMsg,
    NotifySummary,
    ProposeMsg,
    ProposeSummary,
    SafeValueProof,
    SenderValue,
    StatusMaxMsg,
    StatusMsg,
    StatusSummary,
    SyncMsg,
    ViewChangeCertificate,
    ViewChangeMsg,
    batch_digest,
    iter_of_view,
)


class Reason(enum.Enum):
    OK = "ok"
    BAD_SIGNATURE = "bad-signature"
    WRONG_SLOT = "wrong-slot"
    WRONG_ITERATION = "wrong-iteration"
    WRONG_VIEW = "wrong-view"
    NOT_LEADER = "signer-not-leader"
    EMPTY_VALUE = "empty-value"
    STATUS_CERT_MISMATCH = "status-cert-does-not-certify-claim"
    STATUS_ZERO_WITH_CERT = "status-initial-state-with-certificate"
    STATUS_CLAIM_NOT_PAST = "status-claim-not-before-current-iteration"
    PROOF_SIZE = "proof-not-f+1-summaries"
    PROOF_DUP_SIGNER = "proof-duplicate-signer"
    PROOF_BAD_ENTRY = "proof-invalid-summary"
    PROOF_CERT_PRESENT = "proof-k*=0-with-certificate"
    PROOF_CERT_MISSING = "proof-certificate-does-not-certify-highest"
    NOT_SAFE = "value-not-safe-to-propose"
    APP_PREDICATE = "application-value-predicate"
    PROOF_MISSING = "proof-missing"
    CERT_SIZE = "certificate-not-f+1-entries"
    CERT_DUP_SIGNER = "certificate-duplicate-signer"
    CERT_MIXED = "certificate-entries-disagree"
    CERT_ITER = "certificate-commit-iteration-mismatch"
    CERT_CLAIM = "certificate-does-not-certify-claim"
    BAD_TYPE = "unexpected-message-type"
    CHECKPOINT_DIGEST = "checkpoint-digest-mismatch"
    WRONG_SENDER = "wrong-designated-sender"


@dataclass
class Context:
    """The validating replica's local view for one check."""

    slot: int = 0
    k: int = 0
    leader: Optional[int] = None
    view: Optional[int] = None
    allow_unproven: bool = False


ValuePredicate = Callable[[bytes], bool]


def _always(_: bytes) -> bool:
    return True


@dataclass
class Validator:
    n: int
    f: int
    keys: Keyring
    value_predicate: ValuePredicate = _always
    designated_sender: Callable[[int], Optional[int]] = lambda slot: None
    _sig_memo: dict = field(default_factory=dict, repr=False)
    _cert_memo: dict = field(default_factory=dict, repr=False)

    @property
    def quorum(self) -> int:
        return self.f + 1

    # -- signatures ---------------------------------------------------------

    def signed_ok(self, rec, signer: Optional[int] = None) -> bool:
        """Check ``rec.sig`` against ``signer`` (default: ``rec.signer``)."""
        key = id(rec)
        hit = self._sig_memo.get(key)
        if hit is not None and hit[0] is rec:
            ok = hit[1]
        else:
            who = rec.signer if signer is None else signer
            ok = isinstance(rec.sig, bytes) and self.keys.verify(who, signing_payload(rec), rec.sig)
            self._sig_memo[key] = (rec, ok)
        return ok

    # -- certificates -------------------------------------------------------

    def cert_reason(self, cert: CommitCertificate) -> Reason:
        """Structural validity of a commit certificate for its own (slot, value, k)."""
        key = id(cert)
        hit = self._cert_memo.get(key)
        if hit is not None and hit[0] is cert:
            return hit[1]
        r = self._cert_reason(cert)
        self._cert_memo[key] = (cert, r)
        return r

    def _cert_reason(self, cert) -> Reason:
        if not isinstance(cert, CommitCertificate):
            return Reason.BAD_TYPE
        if not cert.value:
            return Reason.EMPTY_VALUE
        entries = cert.entries
        if len(entries) != self.quorum:
            return Reason.CERT_SIZE
        if len({e.signer for e in entries}) != len(entries):
            return Reason.CERT_DUP_SIGNER
        for e in entries:
            if isinstance(e, CommitMsg):
                if e.k != cert.k:
                    return Reason.CERT_ITER
            elif isinstance(e, NotifySummary):
                if not 1 <= e.k <= cert.k:
                    return Reason.CERT_ITER
            else:
                return Reason.BAD_TYPE
            if e.slot != cert.slot or e.value != cert.value:
                return Reason.CERT_MIXED
            if not self.signed_ok(e):
                return Reason.BAD_SIGNATURE
        return Reason.OK

    def certifies(self, cert, slot: int, value, k: int) -> bool:
        if not isinstance(cert, CommitCertificate):
            return False
        if cert.slot != slot or cert.value != value or cert.k != k:
            return False
        return self.cert_reason(cert) is Reason.OK

    def sender_value_ok(self, sv, slot: int, value) -> bool:
        return (isinstance(sv, SenderValue) and sv.slot == slot and sv.value == value
                and sv.signer == self.designated_sender(slot) and bool(value) and self.signed_ok(sv))

    def notify_cert_reason(self, cert, slot: Optional[int] = None) -> Reason:
        if not isinstance(cert, NotifyCertificate):
            return Reason.BAD_TYPE
        if slot is not None and cert.slot != slot:
            return Reason.WRONG_SLOT
        if len(cert.summaries) != self.quorum:
            return Reason.CERT_SIZE
        if len({s.signer for s in cert.summaries}) != self.quorum:
            return Reason.CERT_DUP_SIGNER
        for s in cert.summaries:
            if not isinstance(s, NotifySummary):
                return Reason.BAD_TYPE
            if s.slot != cert.slot or s.value != cert.value:
                return Reason.CERT_MIXED
            if not self.signed_ok(s):
                return Reason.BAD_SIGNATURE
        return Reason.OK

    def view_change_cert_reason(self, cert, view: int) -> Reason:
        if not isinstance(cert, ViewChangeCertificate) or cert.view != view:
            return Reason.WRONG_VIEW
        if len(cert.msgs) != self.quorum:
            return Reason.CERT_SIZE
        if len({m.signer for m in cert.msgs}) != self.quorum:
            return Reason.CERT_DUP_SIGNER
        for m in cert.msgs:
            if not isinstance(m, ViewChangeMsg) or m.view != view:
                return Reason.WRONG_VIEW
            if not self.signed_ok(m):
                return Reason.BAD_SIGNATURE
        return Reason.OK

    def checkpoint_cert_reason(self, cert, batch: Optional[int] = None) -> Reason:
        if not isinstance(cert, CheckpointCertificate):
            return Reason.BAD_TYPE
        if batch is not None and cert.batch != batch:
            return Reason.WRONG_SLOT
        if batch_digest(cert.batch, cert.values) != cert.digest:
            return Reason.CHECKPOINT_DIGEST
        if len(cert.summaries) != self.quorum:
            return Reason.CERT_SIZE
        if len({s.signer for s in cert.summaries}) != self.quorum:
            return Reason.CERT_DUP_SIGNER
        for s in cert.summaries:
            if not isinstance(s, CheckpointSummary) or s.batch != cert.batch or s.digest != cert.digest:
                return Reason.CERT_MIXED
            if not self.signed_ok(s):
                return Reason.BAD_SIGNATURE
        return Reason.OK

    # -- status / proof -----------------------------------------------------

    def status_reason(self, msg, ctx: Context) -> Reason:
        if not isinstance(msg, StatusMsg) or not isinstance(msg.summary, StatusSummary):
            return Reason.BAD_TYPE
        s = msg.summary
        if s.slot != ctx.slot:
            return Reason.WRONG_SLOT
        if s.k != ctx.k:
            return Reason.WRONG_ITERATION
        if not (self.signed_ok(s) and self.signed_ok(msg, s.signer)):
            return Reason.BAD_SIGNATURE
        if s.accepted_k == 0:
            if s.value is None:
                return Reason.OK if msg.cert is None else Reason.STATUS_ZERO_WITH_CERT
            return Reason.OK if self.sender_value_ok(msg.cert, s.slot, s.value) else Reason.STATUS_CERT_MISMATCH
        if s.accepted_k >= s.k or s.accepted_k < 0:
            return Reason.STATUS_CLAIM_NOT_PAST
        if not self.certifies(msg.cert, s.slot, s.value, s.accepted_k):
            return Reason.STATUS_CERT_MISMATCH
        return Reason.OK

    def claim(self, entry, slot: int, k: int) -> Optional[tuple[tuple[int, int], Optional[bytes]]]:
        """Rank and value claimed by one proof entry, or None if the entry is invalid.

        Rank is ``(iteration, has_value)``: a pre-round accept sits at
        iteration 0 but above "nothing accepted".
        """
        if isinstance(entry, StatusSummary):
            if entry.slot != slot or entry.k != k or not 0 <= entry.accepted_k < k:
                return None
            if entry.accepted_k > 0 and not entry.value:
                return None
            if entry.accepted_k == 0 and entry.value is not None and self.designated_sender(slot) is None:
                return None
            if not self.signed_ok(entry):
                return None
            return (entry.accepted_k, 0 if entry.value is None else 1), entry.value
        if isinstance(entry, NotifySummary):
            if entry.slot != slot or not 1 <= entry.k < k or not entry.value:
                return None
            if not self.signed_ok(entry):
                return None
            return (entry.k, 1), entry.value
        if isinstance(entry, StatusMaxMsg):
            if iter_of_view(entry.view) != k or slot <= entry.top:
                return None
            if not self.signed_ok(entry):
                return None
            return (0, 0), None
        return None

    def proof_check(self, proof, slot: int, k: int) -> tuple[Reason, Optional[bytes]]:
        """Validate a safe value proof; returns (reason, forced value or None for 'any')."""
        if not isinstance(proof, SafeValueProof):
            return Reason.BAD_TYPE, None
        if proof.slot != slot:
            return Reason.WRONG_SLOT, None
        if proof.k != k:
            return Reason.WRONG_ITERATION, None
        if len(proof.entries) != self.quorum:
            return Reason.PROOF_SIZE, None
        if len({e.signer for e in proof.entries}) != self.quorum:
            return Reason.PROOF_DUP_SIGNER, None
        claims = []
        for e in proof.entries:
            c = self.claim(e, slot, k)
            if c is None:
                return Reason.PROOF_BAD_ENTRY, None
            claims.append(c)
        top = max(rank for rank, _ in claims)
        if top == (0, 0):
            return (Reason.OK, None) if proof.cert is None else (Reason.PROOF_CERT_PRESENT, None)
        candidates = {v for rank, v in claims if rank == top}
        for v in candidates:
            if top[0] == 0:
                if self.sender_value_ok(proof.cert, slot, v):
                    return Reason.OK, v
            elif self.certifies(proof.cert, slot, v, top[0]):
                return Reason.OK, v
        return Reason.PROOF_CERT_MISSING, None

    def safe_to_propose(self, value, proof, slot: int, k: int) -> bool:
        reason, forced = self.proof_check(proof, slot, k)
        if reason is not Reason.OK or not value:
            return False
        return (forced is None or forced == value) and self.value_predicate(value)

    # -- per-message predicates -------------------------------------------

    def propose_reason(self, msg, ctx: Context) -> Reason:
        if not isinstance(msg, ProposeMsg) or not isinstance(msg.summary, ProposeSummary):
            return Reason.BAD_TYPE
        s = msg.summary
        if s.slot != ctx.slot:
            return Reason.WRONG_SLOT
        if s.k != ctx.k:
            return Reason.WRONG_ITERATION
        if s.signer != ctx.leader:
            return Reason.NOT_LEADER
        if not s.value:
            return Reason.EMPTY_VALUE
        if not (self.signed_ok(s) and self.signed_ok(msg, s.signer)):
            return Reason.BAD_SIGNATURE
        if msg.proof is None:
            if not ctx.allow_unproven:
                return Reason.PROOF_MISSING
        else:
            reason, forced = self.proof_check(msg.proof, s.slot, s.k)
            if reason is not Reason.OK:
                return reason
            if forced is not None and forced != s.value:
                return Reason.NOT_SAFE
        if not self.value_predicate(s.value):
            return Reason.APP_PREDICATE
        return Reason.OK

    def forwarded_proposal_ok(self, item, ctx: Context) -> bool:
        """A proposal (real or virtual) signed by the iteration leader, as forwarded in round 2."""
        if isinstance(item, ProposeSummary):
            return (item.slot == ctx.slot and item.k == ctx.k and item.signer == ctx.leader
                    and bool(item.value) and self.signed_ok(item))
        if isinstance(item, NotifySummary):
            return (item.slot == ctx.slot and 1 <= item.k < ctx.k and item.signer == ctx.leader
                    and bool(item.value) and self.signed_ok(item))
        return False

    def commit_reason(self, msg, ctx: Context) -> Reason:
        if not isinstance(msg, CommitMsg):
            return Reason.BAD_TYPE
        if msg.slot != ctx.slot:
            return Reason.WRONG_SLOT
        if msg.k != ctx.k:
            return Reason.WRONG_ITERATION
        if not msg.value:
            return Reason.EMPTY_VALUE
        return Reason.OK if self.signed_ok(msg) else Reason.BAD_SIGNATURE

    def notify_reason(self, msg, ctx: Context, current: bool = True) -> Reason:
        """``current=False`` accepts notifies from earlier iterations (view-change replay)."""
        if not isinstance(msg, NotifyMsg) or not isinstance(msg.summary, NotifySummary):
            return Reason.BAD_TYPE
        s = msg.summary
        if s.slot != ctx.slot:
            return Reason.WRONG_SLOT
        if current and s.k != ctx.k:
            return Reason.WRONG_ITERATION
        if not (self.signed_ok(s) and self.signed_ok(msg, s.signer)):
            return Reason.BAD_SIGNATURE
        if not self.certifies(msg.cert, s.slot, s.value, s.k):
            return Reason.CERT_CLAIM
        return Reason.OK

    def notify_summary_ok(self, s, slot: int) -> bool:
        return (isinstance(s, NotifySummary) and s.slot == slot and s.k >= 1 and bool(s.value)
                and self.signed_ok(s))

    def new_view_reason(self, msg, view: int, batch_size: int) -> Reason:
        if not isinstance(msg, NewViewMsg) or msg.view != view:
            return Reason.WRONG_VIEW
        if msg.signer != view % self.n:
            return Reason.NOT_LEADER
        if not self.signed_ok(msg):
            return Reason.BAD_SIGNATURE
        r = self.view_change_cert_reason(msg.vc_cert, view)
        if r is not Reason.OK:
            return r
        if msg.checkpoint == 0:
            return Reason.OK if msg.proof is None else Reason.BAD_TYPE
        if msg.checkpoint < 0 or msg.checkpoint % batch_size:
            return Reason.WRONG_SLOT
        return self.checkpoint_cert_reason(msg.proof, msg.checkpoint // batch_size)

    def sync_ok(self, msg, day: Optional[int] = None) -> bool:
        return isinstance(msg, SyncMsg) and (day is None or msg.day == day) and self.signed_ok(msg)

    def new_day_reason(self, msg) -> Reason:
        if not isinstance(msg, NewDayMsg):
            return Reason.BAD_TYPE
        if not self.signed_ok(msg):
            return Reason.BAD_SIGNATURE
        if len({s.signer for s in msg.syncs}) < self.quorum or len(msg.syncs) != self.quorum:
            return Reason.CERT_SIZE
        if not all(self.sync_ok(s, msg.day) for s in msg.syncs):
            return Reason.CERT_MIXED
        return Reason.OK

    # -- dispatcher -------------------------------------------------------

    def validate(self, msg, ctx: Context) -> Reason:
        """Validity of any protocol message under ``ctx`` with a reason code."""
        if isinstance(msg, StatusMsg):
            return self.status_reason(msg, ctx)
        if isinstance(msg, ProposeMsg):
            return self.propose_reason(msg, ctx)
        if isinstance(msg, CommitMsg):
            return self.commit_reason(msg, ctx)
        if isinstance(msg, NotifyMsg):
            return self.notify_reason(msg, ctx)
        if isinstance(msg, CommitCertificate):
            return self.cert_reason(msg)
        if isinstance(msg, NotifyCertificate):
            return self.notify_cert_reason(msg, ctx.slot)
        if isinstance(msg, SafeValueProof):
            return self.proof_check(msg, ctx.slot, ctx.k)[0]
        if isinstance(msg, NewViewMsg):
            return self.new_view_reason(msg, msg.view if ctx.view is None else ctx.view, 1)
        if isinstance(msg, NewDayMsg):
            return self.new_day_reason(msg)
        if isinstance(msg, (SyncMsg, ViewChangeMsg, StatusMaxMsg, CheckpointSummary, SenderValue,
                            StatusSummary, ProposeSummary, NotifySummary)):
            return Reason.OK if self.signed_ok(msg) else Reason.BAD_SIGNATURE
        if isinstance(msg, ViewChangeCertificate):
            return self.view_change_cert_reason(msg, msg.view)
        if isinstance(msg, CheckpointCertificate):
            return self.checkpoint_cert_reason(msg)
        return Reason.BAD_TYPE


def notify_as_virtual_status(summary: NotifySummary, k: int) -> NotifySummary:
    """A terminated replica's notify summary standing in for its status at iteration ``k``."""
    if not isinstance(summary, NotifySummary) or summary.k >= k:
        raise ValueError("notify summary must come from an earlier iteration")
    return summary
