"""dledger: a DAG distributed ledger with signature-based proof-of-authentication,
weight-based confirmation, and a simulated content-centric network."""

from .errors import DLedgerError
from .names import EntityId, RecordName, content_hash
from .records import (
    Certificate,
    PayloadKind,
    Record,
    RecordPayload,
    RevocationNotice,
    build_record,
    decode_record,
    encode_record,
)
from .crypto import make_provider
from .ledger import (
    AdmissionOutcome,
    LedgerConfig,
    LedgerState,
    RejectReason,
    ValidationVerdict,
    available_backends,
    make_store,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissionOutcome",
    "Certificate",
    "DLedgerError",
    "EntityId",
    "LedgerConfig",
    "LedgerState",
    "PayloadKind",
    "Record",
    "RecordName",
    "RecordPayload",
    "RejectReason",
    "RevocationNotice",
    "ValidationVerdict",
    "available_backends",
    "build_record",
    "content_hash",
    "decode_record",
    "encode_record",
    "make_provider",
    "make_store",
    "__version__",
]
