"""Pluggable signature providers for PoA.

Two schemes ship:

* EcdsaProvider -- real asymmetric signatures (NIST P-256).  Key pairs are
  derived deterministically from (seed, entity label); signatures themselves
  are randomized, so use the MAC scheme where byte-reproducibility matters.
* HmacProvider -- a deterministic keyed-MAC test scheme.  Every party derives
  the per-entity MAC key from a shared seed, so verification is possible
  without key distribution.  Orders of magnitude faster; used by the
  simulation harness.
"""

from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
    load_der_public_key,
)

from .names import EntityId


class SignatureProvider:
    """Interface: key generation, signing, verification."""

    scheme: str

    def keypair(self, entity: EntityId) -> tuple[object, bytes]:
        """Return (private key, public key bytes) for an entity."""
        raise NotImplementedError

    def sign(self, private_key, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


# Group order of NIST P-256, for deriving private scalars from seed material.
_P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


class EcdsaProvider(SignatureProvider):
    scheme = "ecdsa-p256"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def keypair(self, entity: EntityId) -> tuple[object, bytes]:
        material = hashlib.sha256(b"ecdsa|%d|%s" % (self.seed, entity.encode())).digest()
        secret = int.from_bytes(material, "big") % (_P256_ORDER - 1) + 1
        priv = ec.derive_private_key(secret, ec.SECP256R1())
        pub = priv.public_key().public_bytes(Encoding.DER, PublicFormat.SubjectPublicKeyInfo)
        return priv, pub

    def sign(self, private_key, message: bytes) -> bytes:
        return private_key.sign(message, ec.ECDSA(hashes.SHA256()))

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            load_der_public_key(public_key).verify(
                signature, message, ec.ECDSA(hashes.SHA256())
            )
            return True
        except (InvalidSignature, ValueError):
            return False


class HmacProvider(SignatureProvider):
    """Shared-seed keyed MAC; public key bytes just name the entity."""

    scheme = "hmac-sha256"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _mac_key(self, entity: str) -> bytes:
        return hashlib.sha256(b"hmac|%d|%s" % (self.seed, entity.encode())).digest()

    def keypair(self, entity: EntityId) -> tuple[object, bytes]:
        return self._mac_key(entity), b"hmac:" + entity.encode()

    def sign(self, private_key, message: bytes) -> bytes:
        return hmac.digest(private_key, message, "sha256")

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if not public_key.startswith(b"hmac:"):
            return False
        key = self._mac_key(public_key[5:].decode())
        return hmac.compare_digest(hmac.digest(key, message, "sha256"), signature)


def make_provider(scheme: str, seed: int = 0) -> SignatureProvider:
    if scheme == HmacProvider.scheme or scheme == "hmac":
        return HmacProvider(seed)
    if scheme == EcdsaProvider.scheme or scheme == "ecdsa":
        return EcdsaProvider(seed)
    raise ValueError("unknown signature scheme %r" % scheme)
