import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.crypto import Keyring
from syncbft.wire import (
    CommitCertificate,
    CommitMsg,
    Context,
    DecodeError,
    NewDayMsg,
    NotifyMsg,
    NotifySummary,
    ProposeMsg,
    Reason,
    SafeValueProof,
    SenderValue,
    StatusMsg,
    StatusSummary,
    SyncMsg,
    Validator,
    decode,
    encode,
    signing_payload,
)

N, F = 5, 2


@pytest.fixture
def ring():
    return Keyring(N, seed=0)


@pytest.fixture
def val(ring):
    return Validator(N, F, ring)


# -- golden bytes, built by hand with struct rather than through the codec ----

def _int(v):
    return struct.pack(">Bq", 1, v)


def _bytes(b):
    return struct.pack(">BI", 2, len(b)) + b


def test_golden_scalars():
    assert encode(None) == b"\x00"
    assert encode(True) == b"\x05\x01"
    assert encode(False) == b"\x05\x00"
    assert encode(7) == bytes.fromhex("010000000000000007")
    assert encode(-1) == bytes.fromhex("01ffffffffffffffff")
    assert encode(b"ab") == bytes.fromhex("02000000026162")
    assert encode("hi") == bytes.fromhex("04000000026869")
    assert encode((1, None)) == bytes.fromhex("0300000002" "010000000000000001" "00")


def test_golden_commit_record():
    msg = CommitMsg(slot=3, k=2, value=b"blue", signer=1, sig=b"\x09" * 4)
    want = struct.pack(">BHH", 6, 7, 5) + _int(3) + _int(2) + _bytes(b"blue") + _int(1) + _bytes(b"\x09" * 4)
    assert encode(msg) == want
    # the signed payload drops the sig field and declares one field fewer
    assert signing_payload(msg) == struct.pack(">BHH", 6, 7, 4) + _int(3) + _int(2) + _bytes(b"blue") + _int(1)


def test_golden_nested_sync_in_new_day():
    s = SyncMsg(day=4, signer=0, sig=b"")
    nd = NewDayMsg(day=4, syncs=(s,), signer=2, sig=b"x")
    inner = struct.pack(">BHH", 6, 18, 3) + _int(4) + _int(0) + _bytes(b"")
    want = (struct.pack(">BHH", 6, 19, 4) + _int(4) + struct.pack(">BI", 3, 1) + inner
            + _int(2) + _bytes(b"x"))
    assert encode(nd) == want


def test_encoding_cache_does_not_change_bytes():
    msg = CommitMsg(1, 1, b"v", 0, b"s")
    first = encode(msg)
    assert encode(msg) == first
    assert encode(CommitMsg(1, 1, b"v", 0, b"s")) == first


def test_decode_errors():
    with pytest.raises(DecodeError):
        decode(b"")
    with pytest.raises(DecodeError):
        decode(b"\x01\x00")
    with pytest.raises(DecodeError):
        decode(b"\x07")
    with pytest.raises(DecodeError):
        decode(encode(5) + b"\x00")
    with pytest.raises(DecodeError):
        decode(struct.pack(">BHH", 6, 999, 0))
    with pytest.raises(DecodeError):
        decode(struct.pack(">BHH", 6, 7, 2) + _int(1) + _int(1))


values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2 ** 63), 2 ** 63 - 1) | st.binary(max_size=20)
    | st.text(max_size=10),
    lambda inner: st.lists(inner, max_size=4).map(tuple),
    max_leaves=12,
)


@given(values)
def test_roundtrip_plain_values(v):
    assert decode(encode(v)) == v


@given(st.integers(0, 50), st.integers(1, 50), st.binary(min_size=1, max_size=16), st.integers(0, 4))
@settings(max_examples=60)
def test_roundtrip_signed_records(slot, k, value, who):
    ring = Keyring(N, seed=0)
    signer = ring.signer(who)
    cm = CommitMsg.create(signer, slot, k, value)
    sm = StatusMsg.create(signer, slot, k + 1, value, k, CommitCertificate(slot, value, k, (cm,)))
    for rec in (cm, sm, NotifySummary.create(signer, slot, k, value)):
        back = decode(encode(rec))
        assert back == rec
        assert encode(back) == encode(rec)


def test_signature_covers_every_other_field(ring, val):
    cm = CommitMsg.create(ring.signer(1), 0, 1, b"v")
    assert val.signed_ok(cm)
    assert ring.verify(1, signing_payload(cm), cm.sig)
    for changed in (
        CommitMsg(0, 2, b"v", 1, cm.sig),
        CommitMsg(0, 1, b"w", 1, cm.sig),
        CommitMsg(1, 1, b"v", 1, cm.sig),
        CommitMsg(0, 1, b"v", 2, cm.sig),
    ):
        assert not val.signed_ok(changed)


# -- validity predicates ------------------------------------------------------

def _cert(ring, slot, k, value, who=(0, 1, 2)):
    msgs = tuple(CommitMsg.create(ring.signer(i), slot, k, value) for i in who[:F + 1])
    return CommitCertificate(slot, value, k, msgs)


def test_certificate_reasons(ring, val):
    good = _cert(ring, 0, 1, b"v")
    assert val.cert_reason(good) is Reason.OK
    assert val.certifies(good, 0, b"v", 1)
    assert not val.certifies(good, 0, b"v", 2)
    small = CommitCertificate(0, b"v", 1, good.entries[:F])
    assert val.cert_reason(small) is Reason.CERT_SIZE
    dup = CommitCertificate(0, b"v", 1, (good.entries[0],) * (F + 1))
    assert val.cert_reason(dup) is Reason.CERT_DUP_SIGNER
    other = CommitMsg.create(ring.signer(3), 0, 1, b"w")
    mixed = CommitCertificate(0, b"v", 1, good.entries[:F] + (other,))
    assert val.cert_reason(mixed) is Reason.CERT_MIXED
    wrong_k = CommitMsg.create(ring.signer(3), 0, 2, b"v")
    assert val.cert_reason(CommitCertificate(0, b"v", 1, good.entries[:F] + (wrong_k,))) is Reason.CERT_ITER
    forged = CommitMsg(0, 1, b"v", 4, good.entries[0].sig)
    assert val.cert_reason(CommitCertificate(0, b"v", 1, good.entries[:F] + (forged,))) is Reason.BAD_SIGNATURE


def test_notify_summaries_from_earlier_iterations_certify(ring, val):
    sums = tuple(NotifySummary.create(ring.signer(i), 0, k, b"v") for i, k in ((0, 1), (1, 2), (2, 3)))
    assert val.cert_reason(CommitCertificate(0, b"v", 3, sums)) is Reason.OK
    assert val.cert_reason(CommitCertificate(0, b"v", 2, sums)) is Reason.CERT_ITER


def test_status_reasons(ring, val):
    ctx = Context(slot=0, k=3)
    fresh = StatusMsg.create(ring.signer(0), 0, 3, None, 0, None)
    assert val.validate(fresh, ctx) is Reason.OK
    cert = _cert(ring, 0, 1, b"v")
    accepted = StatusMsg.create(ring.signer(0), 0, 3, b"v", 1, cert)
    assert val.validate(accepted, ctx) is Reason.OK
    assert val.validate(accepted, Context(slot=0, k=4)) is Reason.WRONG_ITERATION
    assert val.validate(accepted, Context(slot=1, k=3)) is Reason.WRONG_SLOT
    lying = StatusMsg.create(ring.signer(0), 0, 3, b"w", 1, cert)
    assert val.validate(lying, ctx) is Reason.STATUS_CERT_MISMATCH
    zero_with_cert = StatusMsg.create(ring.signer(0), 0, 3, None, 0, cert)
    assert val.validate(zero_with_cert, ctx) is Reason.STATUS_ZERO_WITH_CERT
    future = StatusMsg.create(ring.signer(0), 0, 3, b"v", 3, _cert(ring, 0, 3, b"v"))
    assert val.validate(future, ctx) is Reason.STATUS_CLAIM_NOT_PAST


def _proof(ring, slot, k, claims, cert=None):
    entries = tuple(StatusSummary.create(ring.signer(i), slot, k, v, ak) for i, (v, ak) in enumerate(claims))
    return SafeValueProof(slot, k, entries, cert)


def test_safe_to_propose(ring, val):
    empty = _proof(ring, 0, 2, [(None, 0)] * 3)
    assert val.safe_to_propose(b"anything", empty, 0, 2)
    assert not val.safe_to_propose(b"", empty, 0, 2)
    cert = _cert(ring, 0, 1, b"v")
    locked = _proof(ring, 0, 2, [(None, 0), (b"v", 1), (None, 0)], cert)
    assert val.safe_to_propose(b"v", locked, 0, 2)
    assert not val.safe_to_propose(b"w", locked, 0, 2)
    assert val.proof_check(_proof(ring, 0, 2, [(None, 0), (b"v", 1), (None, 0)]), 0, 2)[0] is Reason.PROOF_CERT_MISSING
    assert val.proof_check(_proof(ring, 0, 2, [(None, 0)] * 2), 0, 2)[0] is Reason.PROOF_SIZE
    assert val.proof_check(empty, 0, 3)[0] is Reason.WRONG_ITERATION


def test_propose_reasons(ring, val):
    empty = _proof(ring, 0, 2, [(None, 0)] * 3)
    msg = ProposeMsg.create(ring.signer(1), 0, 2, b"v", empty)
    assert val.validate(msg, Context(slot=0, k=2, leader=1)) is Reason.OK
    assert val.validate(msg, Context(slot=0, k=2, leader=0)) is Reason.NOT_LEADER
    bare = ProposeMsg.create(ring.signer(1), 0, 2, b"v", None)
    assert val.validate(bare, Context(slot=0, k=2, leader=1)) is Reason.PROOF_MISSING
    assert val.validate(bare, Context(slot=0, k=2, leader=1, allow_unproven=True)) is Reason.OK
    cert = _cert(ring, 0, 1, b"v")
    locked = _proof(ring, 0, 2, [(None, 0), (b"v", 1), (None, 0)], cert)
    unsafe = ProposeMsg.create(ring.signer(1), 0, 2, b"w", locked)
    assert val.validate(unsafe, Context(slot=0, k=2, leader=1)) is Reason.NOT_SAFE


def test_notify_needs_matching_certificate(ring, val):
    cert = _cert(ring, 0, 2, b"v")
    ok = NotifyMsg.create(ring.signer(0), 0, 2, b"v", cert)
    assert val.validate(ok, Context(slot=0, k=2)) is Reason.OK
    bad = NotifyMsg.create(ring.signer(0), 0, 2, b"w", cert)
    assert val.validate(bad, Context(slot=0, k=2)) is Reason.CERT_CLAIM


def test_sender_value_only_from_designated_sender(ring):
    val = Validator(N, F, ring, designated_sender=lambda slot: 0)
    sv = SenderValue.create(ring.signer(0), 0, b"v")
    assert val.sender_value_ok(sv, 0, b"v")
    assert not val.sender_value_ok(SenderValue.create(ring.signer(1), 0, b"v"), 0, b"v")
    assert not val.sender_value_ok(sv, 0, b"w")


def test_new_day_needs_f_plus_one_distinct_syncs(ring, val):
    syncs = tuple(SyncMsg.create(ring.signer(i), 2) for i in range(F + 1))
    assert val.validate(NewDayMsg.create(ring.signer(4), 2, syncs), Context()) is Reason.OK
    short = NewDayMsg.create(ring.signer(4), 2, syncs[:F])
    assert val.validate(short, Context()) is Reason.CERT_SIZE
    dup = NewDayMsg.create(ring.signer(4), 2, (syncs[0],) * (F + 1))
    assert val.validate(dup, Context()) is Reason.CERT_SIZE
    wrong_day = NewDayMsg.create(ring.signer(4), 3, syncs)
    assert val.validate(wrong_day, Context()) is Reason.CERT_MIXED
