"""Exception types shared across the package."""


class DLedgerError(Exception):
    """Base class for all package errors."""


class OversizePayload(DLedgerError):
    """Payload body exceeds the configured maximum."""


class MalformedRecord(DLedgerError):
    """Byte string does not decode as a well-formed record."""


class UnknownKey(DLedgerError):
    """Signer key locator resolves to no known certificate."""


class UnknownRecord(DLedgerError):
    """Record name not present in the ledger."""


class UnknownCert(DLedgerError):
    """Certificate name not present or not a certificate record."""


class DuplicateSubject(DLedgerError):
    """Subject already holds an unrevoked confirmed certificate."""


class InsufficientCandidates(DLedgerError):
    """Fewer eligible approval candidates than required."""


class WConfirmExceedsN(DLedgerError):
    """Confirmation threshold larger than the entity population."""


class ConfigInvalid(DLedgerError):
    """Scenario or ledger configuration violates an invariant."""


class ScheduleConflict(DLedgerError):
    """Overlapping partition schedules."""
