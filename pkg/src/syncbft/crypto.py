"""Replica identities, signature schemes and layered signing.

Two schemes share one interface:

* ``ed25519`` -- real asymmetric signatures from the ``cryptography`` package.
* ``hmac`` -- a deterministic keyed-MAC scheme backed by a global key
  registry.  Much faster, used for exhaustive and statistical runs.

Signatures always cover the SHA-256 digest of the payload.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

ReplicaId = int

DIGEST_SIZE = 32


def digest(payload: bytes) -> bytes:
    """Collision resistant digest (SHA-256) of ``payload``."""
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class KeyPair:
    owner: ReplicaId
    signing_key: bytes = field(repr=False)
    verification_key: bytes


@dataclass(frozen=True)
class Signature:
    signer: ReplicaId
    bytes: bytes


class SignatureScheme:
    name = "abstract"

    def keypair(self, owner: ReplicaId, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def sign(self, key: KeyPair, payload: bytes) -> Signature:
        raise NotImplementedError

    def verify(self, verification_key: bytes, payload: bytes, signature: Signature) -> bool:
        raise NotImplementedError


class HmacScheme(SignatureScheme):
    """Keyed-MAC test scheme.

    The verification key is a public handle; the secret is only reachable
    through this scheme's registry, so nobody holding just a verification
    key can produce a valid tag.
    """

    name = "hmac"

    def __init__(self) -> None:
        self._secrets: dict[bytes, bytes] = {}

    def keypair(self, owner: ReplicaId, seed: bytes) -> KeyPair:
        secret = digest(b"hmac-secret" + seed + owner.to_bytes(4, "big"))
        handle = digest(b"hmac-handle" + secret)
        self._secrets[handle] = secret
        return KeyPair(owner, secret, handle)

    def sign(self, key: KeyPair, payload: bytes) -> Signature:
        tag = hmac.new(key.signing_key, digest(payload), hashlib.sha256).digest()
        return Signature(key.owner, tag)

    def verify(self, verification_key: bytes, payload: bytes, signature: Signature) -> bool:
        secret = self._secrets.get(verification_key)
        if secret is None or not isinstance(signature.bytes, bytes):
            return False
        expected = hmac.new(secret, digest(payload), hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature.bytes)


class Ed25519Scheme(SignatureScheme):
    name = "ed25519"

    def __init__(self) -> None:
        self._public: dict[bytes, Ed25519PublicKey] = {}

    def keypair(self, owner: ReplicaId, seed: bytes) -> KeyPair:
        sk = Ed25519PrivateKey.from_private_bytes(digest(b"ed25519" + seed + owner.to_bytes(4, "big")))
        pk = sk.public_key()
        raw = pk.public_bytes(Encoding.Raw, PublicFormat.Raw)
        self._public[raw] = pk
        return KeyPair(owner, sk.private_bytes_raw(), raw)

    def sign(self, key: KeyPair, payload: bytes) -> Signature:
        sk = Ed25519PrivateKey.from_private_bytes(key.signing_key)
        return Signature(key.owner, sk.sign(digest(payload)))

    def verify(self, verification_key: bytes, payload: bytes, signature: Signature) -> bool:
        pk = self._public.get(verification_key)
        if pk is None:
            try:
                pk = Ed25519PublicKey.from_public_bytes(verification_key)
            except ValueError:
                return False
        try:
            pk.verify(signature.bytes, digest(payload))
        except (InvalidSignature, TypeError, ValueError):
            return False
        return True


SCHEMES = {"hmac": HmacScheme, "ed25519": Ed25519Scheme}


def sign(scheme: SignatureScheme, key: KeyPair, payload: bytes) -> Signature:
    return scheme.sign(key, payload)


def verify(scheme: SignatureScheme, verification_key: bytes, payload: bytes, signature: Signature) -> bool:
    """Never raises; malformed signatures simply fail."""
    try:
        return scheme.verify(verification_key, payload, signature)
    except Exception:  # noqa: BLE001 - malformed input must not escape
        return False


def sign_layer(scheme: SignatureScheme, key: KeyPair, body: bytes, prior: Iterable[Signature]) -> Signature:
    """Sign ``body`` followed by every earlier signature's bytes, in order.

    This is the layered form where an outer signer covers ``x || sigma_i``.
    """
    return scheme.sign(key, body + b"".join(s.bytes for s in prior))


def verify_layers(scheme: SignatureScheme, keys: dict[ReplicaId, bytes], body: bytes,
                  layers: list[Signature]) -> bool:
    for i, sig in enumerate(layers):
        vk = keys.get(sig.signer)
        if vk is None:
            return False
        payload = body + b"".join(s.bytes for s in layers[:i])
        if not verify(scheme, vk, payload, sig):
            return False
    return True


class Keyring:
    """Key material for all replicas of one run plus a verification memo.

    ``signer(i)`` hands out the signing capability of replica ``i``; the
    simulator only ever passes an adversary the signers of corrupted
    replicas.
    """

    def __init__(self, n: int, seed: int | bytes = 0, scheme: str = "hmac") -> None:
        if isinstance(seed, int):
            seed = seed.to_bytes(8, "big", signed=True)
        self.n = n
        self.scheme: SignatureScheme = SCHEMES[scheme]()
        self._pairs = [self.scheme.keypair(i, seed) for i in range(n)]
        self.public = {kp.owner: kp.verification_key for kp in self._pairs}
        self.sign_counts = [0] * n
        self._memo: dict[tuple[int, bytes, bytes], bool] = {}

    def signer(self, replica: ReplicaId) -> "Signer":
        return Signer(self, self._pairs[replica])

    def verify(self, signer: ReplicaId, payload: bytes, sig: bytes) -> bool:
        if not isinstance(signer, int) or not 0 <= signer < self.n:
            return False
        key = (signer, payload, sig)
        hit = self._memo.get(key)
        if hit is None:
            hit = verify(self.scheme, self.public[signer], payload, Signature(signer, sig))
            self._memo[key] = hit
        return hit


class Signer:
    """Signing capability for exactly one replica."""

    __slots__ = ("_ring", "_pair")

    def __init__(self, ring: Keyring, pair: KeyPair) -> None:
        self._ring = ring
        self._pair = pair

    @property
    def replica(self) -> ReplicaId:
        return self._pair.owner

    def sign(self, payload: bytes) -> bytes:
        self._ring.sign_counts[self._pair.owner] += 1
        return self._ring.scheme.sign(self._pair, payload).bytes
