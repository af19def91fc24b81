"""Entity identifiers and hierarchical record names.

A record is named by exactly three components:

    /DLedger/<generator id>/<record digest, lowercase hex>

The digest is the SHA-256 of the record's canonical encoding, so the name
binds the content.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

ROOT_COMPONENT = "DLedger"
DIGEST_LEN = 32


def content_hash(data: bytes) -> bytes:
    """The fixed 256-bit hash used for record digests everywhere."""
    return hashlib.sha256(data).digest()


class EntityId(str):
    """An entity label; a single name component (no '/')."""

    __slots__ = ()

    def __new__(cls, label: str) -> "EntityId":
        if not label:
            raise ValueError("entity label must be non-empty")
        if "/" in label:
            raise ValueError("entity label cannot contain '/': %r" % label)
        return super().__new__(cls, label)


@dataclass(frozen=True, eq=False)
class RecordName:
    """Name of a record: generator entity plus content digest."""

    generator: EntityId
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_LEN:
            raise ValueError("record digest must be %d bytes" % DIGEST_LEN)
        object.__setattr__(self, "_hash", hash(self.digest) ^ hash(self.generator))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, RecordName):
            return NotImplemented
        return self.digest == other.digest and self.generator == other.generator

    def __lt__(self, other):
        return (self.generator, self.digest) < (other.generator, other.digest)

    def render(self) -> str:
        # cached: names are rendered constantly on the sync path
        text = getattr(self, "_rendered", None)
        if text is None:
            text = "/%s/%s/%s" % (ROOT_COMPONENT, self.generator, self.digest.hex())
            object.__setattr__(self, "_rendered", text)
        return text

    def components(self) -> tuple[str, str, str]:
        return (ROOT_COMPONENT, str(self.generator), self.digest.hex())

    @classmethod
    def parse(cls, text: str) -> "RecordName":
        parts = text.split("/")
        if len(parts) != 4 or parts[0] != "" or parts[1] != ROOT_COMPONENT:
            raise ValueError("not a record name: %r" % text)
        try:
            digest = bytes.fromhex(parts[3])
        except ValueError:
            raise ValueError("bad digest in record name: %r" % text) from None
        if parts[3] != digest.hex():
            raise ValueError("digest must be lowercase hex: %r" % text)
        return cls(EntityId(parts[2]), digest)

    def __repr__(self):
        return "RecordName(%s)" % self.render()
