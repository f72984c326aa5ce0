"""Message schema, canonical encoding and validity predicates."""

from .codec import DecodeError, decode, encode, signing_payload
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
    Value,
    ViewChangeCertificate,
    ViewChangeMsg,
    batch_digest,
    iter_of_view,
    message_digest,
)
from .validity import Context, Reason, Validator, notify_as_virtual_status

__all__ = [name for name in dir() if not name.startswith("_")]
