import hashlib

import pytest

from syncbft.crypto import (
    HmacScheme,
    Keyring,
    Signature,
    digest,
    sign_layer,
    verify,
    verify_layers,
)


def test_digest_is_sha256():
    # FIPS 180-2 test vector
    assert digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert digest(b"") == hashlib.sha256(b"").digest()


@pytest.mark.parametrize("scheme", ["hmac", "ed25519"])
def test_sign_verify_roundtrip(scheme):
    ring = Keyring(3, seed=1, scheme=scheme)
    sig = ring.signer(1).sign(b"hello")
    assert ring.verify(1, b"hello", sig)
    assert not ring.verify(1, b"hellO", sig)
    assert not ring.verify(2, b"hello", sig)
    assert not ring.verify(7, b"hello", sig)
    assert not ring.verify(1, b"hello", sig[:-1] + bytes([sig[-1] ^ 1]))


@pytest.mark.parametrize("scheme", ["hmac", "ed25519"])
def test_keys_deterministic_in_seed(scheme):
    a = Keyring(3, seed=5, scheme=scheme)
    b = Keyring(3, seed=5, scheme=scheme)
    c = Keyring(3, seed=6, scheme=scheme)
    assert a.public == b.public
    assert a.public[0] != c.public[0]
    assert a.signer(0).sign(b"x") == b.signer(0).sign(b"x")


def test_ed25519_signature_checks_against_library():
    from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

    ring = Keyring(2, seed=3, scheme="ed25519")
    sig = ring.signer(0).sign(b"payload")
    Ed25519PublicKey.from_public_bytes(ring.public[0]).verify(sig, digest(b"payload"))


def test_hmac_handle_alone_cannot_sign():
    scheme = HmacScheme()
    pair = scheme.keypair(0, b"seed")
    forged = Signature(0, hashlib.sha256(pair.verification_key + b"msg").digest())
    assert not verify(scheme, pair.verification_key, b"msg", forged)


def test_verify_never_raises_on_garbage():
    ring = Keyring(2, scheme="ed25519")
    assert not verify(ring.scheme, b"short", b"m", Signature(0, b"junk"))
    assert not ring.verify(0, b"m", None)


def test_layered_signatures():
    ring = Keyring(3, seed=2)
    scheme = ring.scheme
    pairs = ring._pairs
    s0 = sign_layer(scheme, pairs[0], b"body", [])
    s1 = sign_layer(scheme, pairs[1], b"body", [s0])
    assert verify_layers(scheme, ring.public, b"body", [s0, s1])
    assert not verify_layers(scheme, ring.public, b"body", [s1, s0])
    assert not verify_layers(scheme, ring.public, b"other", [s0, s1])


def test_sign_counts_track_signers():
    ring = Keyring(2)
    ring.signer(1).sign(b"a")
    ring.signer(1).sign(b"b")
    assert ring.sign_counts == [0, 2]
