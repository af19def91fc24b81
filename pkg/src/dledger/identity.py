"""Identity-manager behavior: certificate issuance, revocation, trust resolution.

Manager root keys are installed out of band (scenario config).  All issuance
and revocation happens through ordinary ledger records, so every identity
intervention is auditable from the shared DAG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import DuplicateSubject, UnknownCert
from .ledger.core import LedgerState, RevocationState
from .names import EntityId, RecordName
from .records import (
    Certificate,
    PayloadKind,
    Record,
    RecordPayload,
    RevocationNotice,
)


@dataclass
class TrustStore:
    """Manager root public keys plus a cache of resolved certificates."""

    manager_keys: dict[EntityId, bytes] = field(default_factory=dict)
    resolved: dict[RecordName, Certificate] = field(default_factory=dict)

    def is_manager(self, entity: EntityId) -> bool:
        return entity in self.manager_keys

    def invalidate(self, cert_name: RecordName) -> None:
        self.resolved.pop(cert_name, None)


@dataclass
class ManagerState:
    """An identity manager's signing context over its own ledger view."""

    entity: EntityId
    private_key: object
    ledger: LedgerState
    last_revocation: Optional[RecordName] = None

    def _sign(self, message: bytes) -> bytes:
        return self.ledger.provider.sign(self.private_key, message)

    def issue_certificate(
        self,
        subject: EntityId,
        public_key: bytes,
        rng,
        not_before: float = 0.0,
        not_after: float = float("inf"),
    ) -> Record:
        existing = self.ledger.cert_by_subject.get(subject)
        if existing is not None and self.ledger.is_confirmed(existing):
            status = self.ledger.revocation_status(existing)
            if status.state is not RevocationState.REVOKED:
                raise DuplicateSubject(subject)
        cert = Certificate(
            subject=subject,
            public_key=public_key,
            issuer=self.entity,
            not_before=not_before,
            not_after=not_after,
        )
        payload = RecordPayload(kind=PayloadKind.CERT_ISSUANCE, body=cert.encode())
        return self.ledger.create_record(
            self.entity, payload, rng, self._sign, signer_key=None
        )

    def revoke_certificate(self, cert_name: RecordName, reason: str, rng) -> Record:
        stored = self.ledger.lookup(cert_name)
        if (
            stored is None
            or stored.record.payload.kind != PayloadKind.CERT_ISSUANCE
            or not self.ledger.is_confirmed(cert_name)
        ):
            raise UnknownCert(cert_name.render())
        notice = RevocationNotice(revoked_cert=cert_name, reason=reason)
        payload = RecordPayload(
            kind=PayloadKind.CERT_REVOCATION,
            body=notice.encode(),
            prev_revocation=self.last_revocation,
        )
        record = self.ledger.create_record(
            self.entity, payload, rng, self._sign, signer_key=None
        )
        self.last_revocation = record.name
        return record


class ResolveError(Exception):
    pass


class NotFound(ResolveError):
    pass


class NotConfirmed(ResolveError):
    pass


class Revoked(ResolveError):
    pass


def resolve_signer(
    trust_store: TrustStore, ledger: LedgerState, key_locator: RecordName
) -> Certificate:
    """Certificate for a key locator iff its issuance record is confirmed and valid."""
    cached = trust_store.resolved.get(key_locator)
    if cached is not None:
        if ledger.revocation_status(key_locator).state is RevocationState.REVOKED:
            trust_store.invalidate(key_locator)
            raise Revoked(key_locator.render())
        return cached
    stored = ledger.lookup(key_locator)
    if stored is None or stored.record.payload.kind != PayloadKind.CERT_ISSUANCE:
        raise NotFound(key_locator.render())
    if not ledger.is_confirmed(key_locator):
        raise NotConfirmed(key_locator.render())
    if ledger.revocation_status(key_locator).state is RevocationState.REVOKED:
        raise Revoked(key_locator.render())
    cert = stored.record.payload.certificate()
    if not trust_store.is_manager(cert.issuer):
        raise NotFound("issuer %s is not a configured manager" % cert.issuer)
    trust_store.resolved[key_locator] = cert
    return cert
