from .core import (  # noqa: F401
    AdmissionOutcome,
    ArchiveReport,
    LedgerConfig,
    LedgerState,
    RejectReason,
    RevocationStatus,
    ValidationVerdict,
)
from .store import DagStore, available_backends, make_store  # noqa: F401
