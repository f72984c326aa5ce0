"""Protocol messages, summaries and certificates.

Every message carries a slot number; pure synod runs use slot 0.  Values
are opaque non-empty byte strings and ``None`` stands for the absent value.
Signed records keep their signature in a ``sig`` field that covers the
canonical encoding of every other field.  Layered messages (status,
propose, notify) nest a signed summary and add an outer signature by the
same replica over ``(summary, attachment)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..crypto import Signer, digest
from .codec import encode, signing_payload, wire_type

Value = Optional[bytes]


def _signed(cls, key: Signer, **fields):
    unsigned = cls(sig=b"", **fields)
    return cls(sig=key.sign(signing_payload(unsigned)), **fields)


@wire_type(1)
@dataclass(frozen=True)
class SenderValue:
    """Pre-round broadcast ``<v_s>`` signed by the designated sender."""

    slot: int
    value: bytes
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, slot: int, value: bytes) -> "SenderValue":
        return _signed(cls, signer, slot=slot, value=value, signer=signer.replica)


@wire_type(2)
@dataclass(frozen=True)
class StatusSummary:
    slot: int
    k: int
    value: Value
    accepted_k: int
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: Value, accepted_k: int) -> "StatusSummary":
        return _signed(cls, signer, slot=slot, k=k, value=value, accepted_k=accepted_k, signer=signer.replica)


@wire_type(4)
@dataclass(frozen=True)
class ProposeSummary:
    """The leader-signed proposal body; this is what gets forwarded."""

    slot: int
    k: int
    value: bytes
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: bytes) -> "ProposeSummary":
        return _signed(cls, signer, slot=slot, k=k, value=value, signer=signer.replica)


@wire_type(7)
@dataclass(frozen=True)
class CommitMsg:
    slot: int
    k: int
    value: bytes
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: bytes) -> "CommitMsg":
        return _signed(cls, signer, slot=slot, k=k, value=value, signer=signer.replica)


@wire_type(8)
@dataclass(frozen=True)
class NotifySummary:
    slot: int
    k: int
    value: bytes
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: bytes) -> "NotifySummary":
        return _signed(cls, signer, slot=slot, k=k, value=value, signer=signer.replica)


@wire_type(9)
@dataclass(frozen=True)
class CommitCertificate:
    """f+1 commit requests for ``k``, or notify summaries from iterations <= ``k``."""

    slot: int
    value: bytes
    k: int
    entries: tuple[Union[CommitMsg, NotifySummary], ...]

    @property
    def signers(self) -> tuple[int, ...]:
        return tuple(e.signer for e in self.entries)


@wire_type(14)
@dataclass(frozen=True)
class StatusMaxMsg:
    """Claims nothing was committed or accepted above slot ``top``."""

    top: int
    view: int
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, top: int, view: int) -> "StatusMaxMsg":
        return _signed(cls, signer, top=top, view=view, signer=signer.replica)


ProofEntry = Union[StatusSummary, NotifySummary, StatusMaxMsg]
AcceptCert = Union[CommitCertificate, SenderValue, None]


@wire_type(3)
@dataclass(frozen=True)
class StatusMsg:
    summary: StatusSummary
    cert: AcceptCert
    sig: bytes

    @property
    def signer(self) -> int:
        return self.summary.signer

    @property
    def slot(self) -> int:
        return self.summary.slot

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: Value, accepted_k: int,
               cert: AcceptCert) -> "StatusMsg":
        summary = StatusSummary.create(signer, slot, k, value, accepted_k)
        return _signed(cls, signer, summary=summary, cert=cert)


@wire_type(5)
@dataclass(frozen=True)
class SafeValueProof:
    slot: int
    k: int
    entries: tuple[ProofEntry, ...]
    cert: AcceptCert


@wire_type(6)
@dataclass(frozen=True)
class ProposeMsg:
    summary: ProposeSummary
    proof: Optional[SafeValueProof]
    sig: bytes

    @property
    def signer(self) -> int:
        return self.summary.signer

    @property
    def slot(self) -> int:
        return self.summary.slot

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: bytes,
               proof: Optional[SafeValueProof]) -> "ProposeMsg":
        summary = ProposeSummary.create(signer, slot, k, value)
        return _signed(cls, signer, summary=summary, proof=proof)


@wire_type(10)
@dataclass(frozen=True)
class NotifyMsg:
    summary: NotifySummary
    cert: CommitCertificate
    sig: bytes

    @property
    def signer(self) -> int:
        return self.summary.signer

    @property
    def slot(self) -> int:
        return self.summary.slot

    @classmethod
    def create(cls, signer: Signer, slot: int, k: int, value: bytes,
               cert: CommitCertificate) -> "NotifyMsg":
        summary = NotifySummary.create(signer, slot, k, value)
        return _signed(cls, signer, summary=summary, cert=cert)


@wire_type(11)
@dataclass(frozen=True)
class NotifyCertificate:
    """f+1 notify summaries for one (slot, value); iterations may differ."""

    slot: int
    value: bytes
    summaries: tuple[NotifySummary, ...]

    def as_commit_certificate(self) -> CommitCertificate:
        top = max(s.k for s in self.summaries)
        return CommitCertificate(self.slot, self.value, top, self.summaries)


@wire_type(12)
@dataclass(frozen=True)
class ViewChangeMsg:
    view: int
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, view: int) -> "ViewChangeMsg":
        return _signed(cls, signer, view=view, signer=signer.replica)


@wire_type(13)
@dataclass(frozen=True)
class ViewChangeCertificate:
    view: int
    msgs: tuple[ViewChangeMsg, ...]


@wire_type(15)
@dataclass(frozen=True)
class CheckpointSummary:
    batch: int
    digest: bytes
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, batch: int, batch_digest: bytes) -> "CheckpointSummary":
        return _signed(cls, signer, batch=batch, digest=batch_digest, signer=signer.replica)


@wire_type(16)
@dataclass(frozen=True)
class CheckpointCertificate:
    """Notify certificate over a batch digest; carries the batch values."""

    batch: int
    digest: bytes
    values: tuple[bytes, ...]
    summaries: tuple[CheckpointSummary, ...]


@wire_type(17)
@dataclass(frozen=True)
class NewViewMsg:
    view: int
    vc_cert: ViewChangeCertificate
    checkpoint: int
    proof: Optional[CheckpointCertificate]
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, view: int, vc_cert: ViewChangeCertificate, checkpoint: int,
               proof: Optional[CheckpointCertificate]) -> "NewViewMsg":
        return _signed(cls, signer, view=view, vc_cert=vc_cert, checkpoint=checkpoint, proof=proof,
                       signer=signer.replica)


@wire_type(18)
@dataclass(frozen=True)
class SyncMsg:
    day: int
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, day: int) -> "SyncMsg":
        return _signed(cls, signer, day=day, signer=signer.replica)


@wire_type(19)
@dataclass(frozen=True)
class NewDayMsg:
    day: int
    syncs: tuple[SyncMsg, ...]
    signer: int
    sig: bytes

    @classmethod
    def create(cls, signer: Signer, day: int, syncs: tuple[SyncMsg, ...]) -> "NewDayMsg":
        return _signed(cls, signer, day=day, syncs=syncs, signer=signer.replica)


def batch_digest(batch: int, values: tuple[bytes, ...]) -> bytes:
    return digest(encode((batch, values)))


def message_digest(msg) -> str:
    """Short hex digest used in traces."""
    return digest(encode(msg))[:8].hex()


def iter_of_view(view: int) -> int:
    """Stable-leader runs use one iteration number per view."""
    return view + 1
