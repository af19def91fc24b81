"""Record structure and its canonical byte encoding.

Wire format is a flat TLV sequence (1-byte tag, 4-byte big-endian length,
value), fields in a fixed order:

    generator, approved names (in list order), payload kind, payload body,
    prev-revocation name (optional), signer key locator (optional), PoA.

The canonical encoding is the same sequence minus the trailing PoA field.
The record digest is SHA-256 over the canonical encoding; the PoA signs
the rendered record name (which embeds that digest, so the signature
transitively covers the content).  See docs/wire-format.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

from .errors import MalformedRecord, OversizePayload
from .names import EntityId, RecordName, content_hash

MAX_BODY_BYTES = 8192

_T_GENERATOR = 1
_T_APPROVED = 2
_T_KIND = 3
_T_BODY = 4
_T_PREV_REV = 5
_T_SIGNER = 6
_T_POA = 7

# Certificate / revocation-notice field tags (nested TLV inside the body).
_T_SUBJECT = 10
_T_PUBKEY = 11
_T_ISSUER = 12
_T_NOT_BEFORE = 13
_T_NOT_AFTER = 14
_T_REVOKED_CERT = 15
_T_REASON = 16


class PayloadKind(IntEnum):
    APPLICATION = 0
    CERT_ISSUANCE = 1
    CERT_REVOCATION = 2
    GENESIS = 3


def _tlv(tag: int, value: bytes) -> bytes:
    return struct.pack(">BI", tag, len(value)) + value


def _parse_tlvs(data: bytes) -> list[tuple[int, bytes]]:
    out = []
    i = 0
    n = len(data)
    while i < n:
        if i + 5 > n:
            raise MalformedRecord("truncated TLV header")
        tag, length = struct.unpack_from(">BI", data, i)
        i += 5
        if i + length > n:
            raise MalformedRecord("truncated TLV value")
        out.append((tag, data[i : i + length]))
        i += length
    return out


@dataclass(frozen=True)
class Certificate:
    subject: EntityId
    public_key: bytes
    issuer: EntityId
    not_before: float
    not_after: float

    def encode(self) -> bytes:
        return b"".join(
            (
                _tlv(_T_SUBJECT, self.subject.encode()),
                _tlv(_T_PUBKEY, self.public_key),
                _tlv(_T_ISSUER, self.issuer.encode()),
                _tlv(_T_NOT_BEFORE, struct.pack(">d", self.not_before)),
                _tlv(_T_NOT_AFTER, struct.pack(">d", self.not_after)),
            )
        )

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        fields = dict(_parse_tlvs(data))
        try:
            return cls(
                subject=EntityId(fields[_T_SUBJECT].decode()),
                public_key=fields[_T_PUBKEY],
                issuer=EntityId(fields[_T_ISSUER].decode()),
                not_before=struct.unpack(">d", fields[_T_NOT_BEFORE])[0],
                not_after=struct.unpack(">d", fields[_T_NOT_AFTER])[0],
            )
        except (KeyError, ValueError, struct.error) as e:
            raise MalformedRecord("bad certificate body: %s" % e) from None


@dataclass(frozen=True)
class RevocationNotice:
    revoked_cert: RecordName
    reason: str

    def encode(self) -> bytes:
        return _tlv(_T_REVOKED_CERT, self.revoked_cert.render().encode()) + _tlv(
            _T_REASON, self.reason.encode()
        )

    @classmethod
    def decode(cls, data: bytes) -> "RevocationNotice":
        fields = dict(_parse_tlvs(data))
        try:
            return cls(
                revoked_cert=RecordName.parse(fields[_T_REVOKED_CERT].decode()),
                reason=fields[_T_REASON].decode(),
            )
        except (KeyError, ValueError) as e:
            raise MalformedRecord("bad revocation body: %s" % e) from None


@dataclass(frozen=True)
class RecordPayload:
    kind: PayloadKind
    body: bytes = b""
    prev_revocation: Optional[RecordName] = None

    def __post_init__(self):
        if self.prev_revocation is not None and self.kind != PayloadKind.CERT_REVOCATION:
            raise ValueError("prev_revocation only allowed on revocation payloads")

    def certificate(self) -> Certificate:
        if self.kind != PayloadKind.CERT_ISSUANCE:
            raise ValueError("not a certificate payload")
        cert = getattr(self, "_cert", None)
        if cert is None:
            cert = Certificate.decode(self.body)
            object.__setattr__(self, "_cert", cert)
        return cert

    def revocation(self) -> RevocationNotice:
        if self.kind != PayloadKind.CERT_REVOCATION:
            raise ValueError("not a revocation payload")
        return RevocationNotice.decode(self.body)


@dataclass(frozen=True)
class Record:
    name: RecordName
    approved: tuple[RecordName, ...]
    payload: RecordPayload
    poa: bytes
    # Name of the CertIssuance record of the signing key; None means the
    # signer is an identity-manager root key installed out of band.
    signer_key: Optional[RecordName] = None
    canonical: bytes = field(default=b"", repr=False, compare=False)

    @property
    def generator(self) -> EntityId:
        return self.name.generator


def canonical_encode(
    generator: EntityId,
    approved: tuple[RecordName, ...],
    payload: RecordPayload,
    signer_key: Optional[RecordName],
) -> bytes:
    """Deterministic, injective encoding of the signed record fields."""
    if len(payload.body) > MAX_BODY_BYTES:
        raise OversizePayload(
            "payload body %d bytes exceeds cap %d" % (len(payload.body), MAX_BODY_BYTES)
        )
    seen = set()
    for a in approved:
        if a in seen:
            raise ValueError("duplicate approved name %s" % a.render())
        seen.add(a)
    parts = [_tlv(_T_GENERATOR, generator.encode())]
    for a in approved:
        parts.append(_tlv(_T_APPROVED, a.render().encode()))
    parts.append(_tlv(_T_KIND, bytes([payload.kind])))
    parts.append(_tlv(_T_BODY, payload.body))
    if payload.prev_revocation is not None:
        parts.append(_tlv(_T_PREV_REV, payload.prev_revocation.render().encode()))
    if signer_key is not None:
        parts.append(_tlv(_T_SIGNER, signer_key.render().encode()))
    return b"".join(parts)


def compute_name(generator: EntityId, encoding: bytes) -> RecordName:
    """Name a record from its canonical encoding."""
    return RecordName(generator, content_hash(encoding))


def encode_record(record: Record) -> bytes:
    """Full wire form: canonical encoding plus the PoA field."""
    canonical = record.canonical or canonical_encode(
        record.name.generator, record.approved, record.payload, record.signer_key
    )
    return canonical + _tlv(_T_POA, record.poa)


def decode_record(data: bytes) -> Record:
    """Parse wire bytes, recomputing the record name from the content.

    The caller is responsible for checking the recomputed name against
    the name the bytes were fetched under.
    """
    tlvs = _parse_tlvs(data)
    if not tlvs or tlvs[-1][0] != _T_POA:
        raise MalformedRecord("record must end with a PoA field")
    poa = tlvs[-1][1]
    body_tlvs = tlvs[:-1]

    generator = None
    approved: list[RecordName] = []
    kind = None
    body = b""
    prev_rev = None
    signer = None
    expected_order = [_T_GENERATOR, _T_APPROVED, _T_KIND, _T_BODY, _T_PREV_REV, _T_SIGNER]
    last_rank = -1
    try:
        for tag, value in body_tlvs:
            rank = expected_order.index(tag)
            if rank < last_rank or (rank == last_rank and tag != _T_APPROVED):
                raise MalformedRecord("field out of canonical order")
            last_rank = rank
            if tag == _T_GENERATOR:
                if generator is not None:
                    raise MalformedRecord("duplicate generator field")
                generator = EntityId(value.decode())
            elif tag == _T_APPROVED:
                approved.append(RecordName.parse(value.decode()))
            elif tag == _T_KIND:
                kind = PayloadKind(value[0]) if len(value) == 1 else None
                if kind is None:
                    raise MalformedRecord("bad kind field")
            elif tag == _T_BODY:
                body = value
            elif tag == _T_PREV_REV:
                prev_rev = RecordName.parse(value.decode())
            elif tag == _T_SIGNER:
                signer = RecordName.parse(value.decode())
    except MalformedRecord:
        raise
    except ValueError as e:
        raise MalformedRecord(str(e)) from None
    if generator is None or kind is None:
        raise MalformedRecord("missing required field")
    try:
        payload = RecordPayload(kind=kind, body=body, prev_revocation=prev_rev)
        canonical = canonical_encode(generator, tuple(approved), payload, signer)
    except (ValueError, OversizePayload) as e:
        raise MalformedRecord(str(e)) from None
    if canonical != data[: len(canonical)]:
        raise MalformedRecord("non-canonical field encoding")
    return Record(
        name=compute_name(generator, canonical),
        approved=tuple(approved),
        payload=payload,
        poa=poa,
        signer_key=signer,
        canonical=canonical,
    )


def build_record(
    generator: EntityId,
    approved: tuple[RecordName, ...],
    payload: RecordPayload,
    signer_key: Optional[RecordName],
    signer,
) -> Record:
    """Assemble, name, and sign a record.  `signer` maps name bytes to a PoA."""
    canonical = canonical_encode(generator, approved, payload, signer_key)
    name = compute_name(generator, canonical)
    poa = signer(name.render().encode())
    return Record(
        name=name,
        approved=approved,
        payload=payload,
        poa=poa,
        signer_key=signer_key,
        canonical=canonical,
    )
