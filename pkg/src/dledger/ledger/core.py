"""Per-peer ledger state: admission pipeline, record creation, pruning.

Admission enforces, in order: name binding, PoA plus certificate status,
the interlock policy (no approving your own records, checked on every
path), the contribution policy (approved weights below the contribution
threshold, checked only for tailing arrivals), and the pluggable
application validator.  Records approving names we do not hold yet are
parked and retried once the missing ancestors arrive.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from ..errors import ConfigInvalid, InsufficientCandidates, UnknownRecord
from ..names import EntityId, RecordName, content_hash
from ..records import (
    PayloadKind,
    Record,
    RecordPayload,
    build_record,
    encode_record,
)


class AdmissionOutcome(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    PENDING = "pending"


class RejectReason(Enum):
    POA_INVALID = "PoAInvalid"
    CERT_NOT_CONFIRMED = "CertNotConfirmed"
    CERT_REVOKED = "CertRevoked"
    CERT_EXPIRED = "CertExpired"
    SELF_APPROVAL = "SelfApproval"
    CONTRIBUTION_VIOLATION = "ContributionViolation"
    APP_REJECTED = "AppRejected"
    DUPLICATE_NAME = "DuplicateName"
    MALFORMED = "Malformed"


@dataclass(frozen=True)
class ValidationVerdict:
    outcome: AdmissionOutcome
    reason: Optional[RejectReason] = None
    missing: frozenset = frozenset()
    confirmed_now: tuple = ()

    @property
    def accepted(self) -> bool:
        return self.outcome is AdmissionOutcome.ACCEPTED


class RevocationState(Enum):
    VALID = "valid"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class RevocationStatus:
    state: RevocationState
    revoked_at: Optional[RecordName] = None


@dataclass(frozen=True)
class ArchiveReport:
    pruned: tuple
    archived: tuple


@dataclass
class LedgerConfig:
    n: int = 2
    w_confirm: int = 3
    w_contribution: Optional[int] = None
    # how long after a record crosses w_contribution its approvers are still
    # admitted; absorbs propagation skew without excusing laziness
    contribution_grace: float = 1.0
    count_self_indirect: bool = False
    unconfirmed_ttl: float = 600.0
    archive_depth: Optional[int] = None
    pending_cap: int = 512
    fallback_window: int = 64
    # Adversary ledgers set this False to accept anything with a valid name.
    enforce_policies: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ConfigInvalid("n must be >= 2")
        if self.w_confirm < 1:
            raise ConfigInvalid("w_confirm must be positive")
        if self.w_contribution is None:
            self.w_contribution = max(
                1, min(self.w_confirm - 1, max(2, self.w_confirm // 4))
            )
        ok = 0 < self.w_contribution < self.w_confirm
        if not ok and not (self.w_confirm == 1 and self.w_contribution == 1):
            raise ConfigInvalid("need 0 < w_contribution < w_confirm")


@dataclass
class StoredRecord:
    record: Record
    rid: int
    seq: int
    arrival_time: float
    # False when this record (or an ancestor) violated the contribution
    # policy when it was stored; honest creators skip such candidates.
    eligible: bool = True
    # when this record's weight first crossed w_contribution, if ever
    capped_at: Optional[float] = None


@dataclass
class _Parked:
    record: Record
    missing: set
    is_tailing: bool
    poa_verified: bool
    parked_at: float


def accept_all(record: Record) -> bool:
    return True


class LedgerState:
    """Single-writer per-peer DAG store with weight bookkeeping."""

    def __init__(
        self,
        config: LedgerConfig,
        provider,
        trust_roots: Optional[dict] = None,
        app_validator: Callable[[Record], bool] = accept_all,
        store_backend: Optional[str] = None,
    ):
        from .store import make_store

        self.config = config
        self.provider = provider
        self.trust_roots = dict(trust_roots or {})
        self.app_validator = app_validator
        self._backend = store_backend
        self.store = make_store(
            config.w_confirm,
            config.count_self_indirect,
            store_backend,
            w_contribution=config.w_contribution,
        )
        self.entities: dict[str, int] = {}
        self.records: dict[RecordName, StoredRecord] = {}
        self.names_by_rid: list[RecordName] = []
        self.archive: dict[RecordName, StoredRecord] = {}
        self.confirmed: set[RecordName] = set()
        self.pending: dict[RecordName, _Parked] = {}
        self._pending_fifo: deque[RecordName] = deque()
        self._missing_index: dict[RecordName, set] = {}
        self.recent: deque[RecordName] = deque(maxlen=config.fallback_window)
        self.cert_by_subject: dict[EntityId, RecordName] = {}
        self.revoked: dict[RecordName, RecordName] = {}
        self.latest_confirmed_revocation: Optional[RecordName] = None
        self.genesis_names: list[RecordName] = []
        self._seq = 0
        self.on_confirmed: Optional[Callable] = None  # fn(names, now)

    # -- entity interning -------------------------------------------------

    def entity_index(self, label: str) -> int:
        idx = self.entities.get(label)
        if idx is None:
            idx = len(self.entities)
            self.entities[label] = idx
        return idx

    # -- queries -----------------------------------------------------------

    def __contains__(self, name: RecordName) -> bool:
        return name in self.records

    def lookup(self, name: RecordName) -> Optional[StoredRecord]:
        return self.records.get(name) or self.archive.get(name)

    def weight(self, name: RecordName) -> int:
        stored = self.records.get(name)
        if stored is None:
            raise UnknownRecord(name.render())
        return self.store.approvers_count(stored.rid)

    def approvers(self, name: RecordName) -> set[str]:
        stored = self.records.get(name)
        if stored is None:
            raise UnknownRecord(name.render())
        labels = list(self.entities)
        return {labels[e] for e in self.store.approver_entities(stored.rid)}

    def is_confirmed(self, name: RecordName) -> bool:
        if name in self.archive:
            return True
        stored = self.records.get(name)
        return stored is not None and self.store.is_confirmed(stored.rid)

    def tailing_names(self) -> list[RecordName]:
        return [self.names_by_rid[rid] for rid in self.store.tailing_ids()]

    def record_names(self) -> list[RecordName]:
        return sorted(self.records)

    # -- genesis bootstrap ---------------------------------------------------

    def inject_genesis(self, record: Record, now: float = 0.0) -> None:
        """Install a bootstrap record as already confirmed, bypassing policies."""
        if record.name in self.records:
            return
        gen_idx = self.entity_index(record.generator)
        rid = self.store.inject_confirmed(gen_idx, ())
        self._insert(record, rid, now)
        self.confirmed.add(record.name)
        if record.payload.kind == PayloadKind.GENESIS:
            self.genesis_names.append(record.name)
        if record.payload.kind == PayloadKind.CERT_ISSUANCE:
            cert = record.payload.certificate()
            self.cert_by_subject[cert.subject] = record.name

    # -- admission -----------------------------------------------------------

    def admit_record(
        self,
        record: Record,
        is_tailing_arrival: bool,
        now: float = 0.0,
        poa_verified: bool = False,
    ) -> ValidationVerdict:
        verdict = self._admit_one(record, is_tailing_arrival, now, poa_verified)
        if verdict.accepted:
            self._retry_parked(record.name, now)
        return verdict

    def _admit_one(
        self, record: Record, is_tailing_arrival: bool, now: float, poa_verified: bool
    ) -> ValidationVerdict:
        name = record.name
        if name in self.records or name in self.archive:
            return ValidationVerdict(AdmissionOutcome.REJECTED, RejectReason.DUPLICATE_NAME)

        if record.payload.kind == PayloadKind.GENESIS or not record.approved:
            # Genesis records only enter through inject_genesis.
            return ValidationVerdict(AdmissionOutcome.REJECTED, RejectReason.MALFORMED)
        if record.canonical and content_hash(record.canonical) != name.digest:
            return ValidationVerdict(AdmissionOutcome.REJECTED, RejectReason.MALFORMED)

        missing = {a for a in record.approved if a not in self.records and a not in self.archive}
        if record.signer_key is not None and self.lookup(record.signer_key) is None:
            missing.add(record.signer_key)
        if missing:
            self._park(record, missing, is_tailing_arrival, poa_verified, now)
            return ValidationVerdict(AdmissionOutcome.PENDING, missing=frozenset(missing))

        reason = self._check_poa(record, now, poa_verified)
        if reason is not None:
            return ValidationVerdict(AdmissionOutcome.REJECTED, reason)

        if self.config.enforce_policies:
            for a in record.approved:
                if a.generator == record.generator:
                    return ValidationVerdict(
                        AdmissionOutcome.REJECTED, RejectReason.SELF_APPROVAL
                    )

        contribution_ok = self._contribution_ok(record, now)
        if (
            is_tailing_arrival
            and self.config.enforce_policies
            and not contribution_ok
        ):
            return ValidationVerdict(
                AdmissionOutcome.REJECTED, RejectReason.CONTRIBUTION_VIOLATION
            )

        if self.config.enforce_policies and not self.app_validator(record):
            return ValidationVerdict(AdmissionOutcome.REJECTED, RejectReason.APP_REJECTED)

        gen_idx = self.entity_index(record.generator)
        approved_rids = tuple(
            self.records[a].rid for a in record.approved if a in self.records
        )
        rid, newly, capped = self.store.add_record(gen_idx, approved_rids)
        for c in capped:
            target = self.records.get(self.names_by_rid[c])
            if target is not None and target.capped_at is None:
                target.capped_at = now
        stored = self._insert(record, rid, now)
        # Contribution staleness only taints live tailing arrivals; synced
        # back-fill (e.g. a whole branch pulled after a partition heals) is
        # policy-clean by definition and must stay approvable, or the merged
        # branch could never be built upon.
        stored.eligible = (contribution_ok or not is_tailing_arrival) and all(
            (a in self.archive) or self.records[a].eligible
            for a in record.approved
            if a in self.records or a in self.archive
        )
        confirmed_names = tuple(self.names_by_rid[r] for r in newly)
        if confirmed_names:
            self._on_confirmations(confirmed_names, now)
        return ValidationVerdict(AdmissionOutcome.ACCEPTED, confirmed_now=confirmed_names)

    def _insert(self, record: Record, rid: int, now: float) -> StoredRecord:
        stored = StoredRecord(record=record, rid=rid, seq=self._seq, arrival_time=now)
        self._seq += 1
        assert rid == len(self.names_by_rid)
        self.names_by_rid.append(record.name)
        self.records[record.name] = stored
        self.recent.append(record.name)
        return stored

    def _contribution_ok(self, record: Record, now: float) -> bool:
        w_c = self.config.w_contribution
        grace = self.config.contribution_grace
        for a in record.approved:
            stored = self.records.get(a)
            if stored is None:  # archived ancestor: long confirmed
                return False
            if stored.record.payload.kind == PayloadKind.GENESIS:
                continue  # bootstrap records are always approvable
            if self.store.approvers_count(stored.rid) >= w_c:
                # Weights keep growing while a record is in flight, so a
                # recent crossing is propagation skew, not laziness.
                if stored.capped_at is None or now - stored.capped_at > grace:
                    return False
        return True

    def _check_poa(self, record: Record, now: float, poa_verified: bool):
        if record.signer_key is None:
            pub = self.trust_roots.get(record.generator)
            if pub is None:
                return RejectReason.POA_INVALID
        else:
            cert_stored = self.lookup(record.signer_key)
            cert_rec = cert_stored.record
            if cert_rec.payload.kind != PayloadKind.CERT_ISSUANCE:
                return RejectReason.POA_INVALID
            cert = cert_rec.payload.certificate()
            if cert.subject != record.generator:
                return RejectReason.POA_INVALID
            if not self.is_confirmed(record.signer_key):
                return RejectReason.CERT_NOT_CONFIRMED
            if record.signer_key in self.revoked:
                return RejectReason.CERT_REVOKED
            if not (cert.not_before <= now <= cert.not_after):
                return RejectReason.CERT_EXPIRED
            pub = cert.public_key
        if poa_verified:
            return None
        message = record.name.render().encode()
        if not self.provider.verify(pub, message, record.poa):
            return RejectReason.POA_INVALID
        return None

    # -- pending buffer ------------------------------------------------------

    def _park(self, record, missing, is_tailing, poa_verified, now):
        name = record.name
        if name in self.pending:
            return
        while len(self.pending) >= self.config.pending_cap:
            evicted = self._pending_fifo.popleft()
            entry = self.pending.pop(evicted, None)
            if entry is not None:
                for m in entry.missing:
                    waiters = self._missing_index.get(m)
                    if waiters is not None:
                        waiters.discard(evicted)
        self.pending[name] = _Parked(record, set(missing), is_tailing, poa_verified, now)
        self._pending_fifo.append(name)
        for m in missing:
            self._missing_index.setdefault(m, set()).add(name)

    def _retry_parked(self, arrived: RecordName, now: float) -> None:
        queue = deque([arrived])
        while queue:
            got = queue.popleft()
            waiters = self._missing_index.pop(got, None)
            if not waiters:
                continue
            for waiter_name in sorted(waiters):
                entry = self.pending.get(waiter_name)
                if entry is None:
                    continue
                entry.missing.discard(got)
                if entry.missing:
                    continue
                del self.pending[waiter_name]
                verdict = self._admit_one(
                    entry.record, entry.is_tailing, now, entry.poa_verified
                )
                if verdict.accepted:
                    queue.append(waiter_name)

    def pending_missing(self) -> set:
        """Names we are still waiting for (for fetch drivers)."""
        return set(self._missing_index)

    # -- confirmation side effects --------------------------------------------

    def _on_confirmations(self, names: tuple, now: float) -> None:
        for name in names:
            self.confirmed.add(name)
            rec = self.records[name].record
            kind = rec.payload.kind
            if kind == PayloadKind.CERT_ISSUANCE:
                cert = rec.payload.certificate()
                self.cert_by_subject.setdefault(cert.subject, name)
            elif kind == PayloadKind.CERT_REVOCATION:
                notice = rec.payload.revocation()
                self.revoked[notice.revoked_cert] = name
                self.latest_confirmed_revocation = name
        if self.on_confirmed is not None:
            self.on_confirmed(names, now)

    # -- record creation -------------------------------------------------------

    def eligible_candidates(self, generator: EntityId) -> list[RecordName]:
        """Tailing records another entity generated, with clean subgraphs."""
        out = []
        for name in self.tailing_names():
            stored = self.records[name]
            if name.generator != generator and stored.eligible:
                out.append(name)
        return sorted(out)

    def fallback_candidates(self, generator: EntityId) -> list[RecordName]:
        """Recent non-tailing records still below the contribution threshold."""
        w_c = self.config.w_contribution
        out = []
        for name in self.recent:
            stored = self.records.get(name)
            if stored is None or name.generator == generator or not stored.eligible:
                continue
            if self.store.is_tailing(stored.rid):
                continue
            if self.store.approvers_count(stored.rid) < w_c:
                out.append(name)
        # Bootstrap anchors are exempt from the contribution rule and stay
        # approvable forever, which keeps publishing live when tailing is thin.
        out.extend(n for n in self.genesis_names if n in self.records)
        return sorted(set(out))

    def create_record(
        self,
        generator: EntityId,
        payload: RecordPayload,
        rng,
        signer: Callable[[bytes], bytes],
        signer_key: Optional[RecordName],
    ) -> Record:
        """Assemble and sign a new record; the caller admits it separately."""
        n = self.config.n
        pool = self.eligible_candidates(generator)
        if len(pool) < n:
            extra = [
                c for c in self.fallback_candidates(generator)
                if c not in pool and c not in self.genesis_names
            ]
            pool = sorted(pool + extra)
        if len(pool) >= n:
            approved = tuple(rng.sample(pool, n))
        else:
            # last resort: top up from the bootstrap anchors, so approvals
            # only leak off the active frontier when there is no frontier
            anchors = sorted(
                a for a in self.genesis_names
                if a in self.records and a not in pool and a.generator != generator
            )
            if len(pool) + len(anchors) < n:
                raise InsufficientCandidates(
                    "need %d approval candidates, have %d"
                    % (n, len(pool) + len(anchors))
                )
            approved = tuple(pool + rng.sample(anchors, n - len(pool)))
        return build_record(generator, approved, payload, signer_key, signer)

    # -- revocation ---------------------------------------------------------------

    def revocation_status(self, cert_name: RecordName) -> RevocationStatus:
        """Walk the confirmed revocation back-pointer chain; no full-DAG scan."""
        cursor = self.latest_confirmed_revocation
        seen = set()
        while cursor is not None and cursor not in seen:
            seen.add(cursor)
            stored = self.lookup(cursor)
            if stored is None:
                break
            notice = stored.record.payload.revocation()
            if notice.revoked_cert == cert_name:
                return RevocationStatus(RevocationState.REVOKED, cursor)
            cursor = stored.record.payload.prev_revocation
        if self.lookup(cert_name) is None:
            return RevocationStatus(RevocationState.UNKNOWN)
        return RevocationStatus(RevocationState.VALID)

    # -- pruning / archiving ---------------------------------------------------------

    def prune_and_archive(self, now: float) -> ArchiveReport:
        ttl = self.config.unconfirmed_ttl
        children: dict[RecordName, list[RecordName]] = {}
        for name, stored in self.records.items():
            for a in stored.record.approved:
                children.setdefault(a, []).append(name)

        prune: set[RecordName] = set()
        queue = deque(
            name
            for name, stored in self.records.items()
            if not self.store.is_confirmed(stored.rid)
            and now - stored.arrival_time > ttl
        )
        while queue:
            name = queue.popleft()
            if name in prune:
                continue
            prune.add(name)
            for child in children.get(name, ()):
                if not self.store.is_confirmed(self.records[child].rid):
                    queue.append(child)

        archived: set[RecordName] = set()
        depth = self.config.archive_depth
        if depth is not None:
            dist = {name: 0 for name in self.tailing_names() if name not in prune}
            frontier = deque(dist)
            while frontier:
                name = frontier.popleft()
                d = dist[name]
                for a in self.records[name].record.approved:
                    if a in self.records and a not in dist:
                        dist[a] = d + 1
                        frontier.append(a)
            for name, stored in self.records.items():
                if name in prune:
                    continue
                if self.store.is_confirmed(stored.rid) and dist.get(name, depth + 1) > depth:
                    archived.add(name)

        if not prune and not archived:
            return ArchiveReport((), ())

        survivors = [
            (stored.seq, name)
            for name, stored in self.records.items()
            if name not in prune and name not in archived
        ]
        survivors.sort()
        old_records = self.records
        old_store = self.store

        from .store import make_store

        self.store = make_store(
            self.config.w_confirm,
            self.config.count_self_indirect,
            self._backend,
            w_contribution=self.config.w_contribution,
        )
        self.records = {}
        self.names_by_rid = []
        for name in archived:
            stored = old_records[name]
            stored.rid = -1
            self.archive[name] = stored
        for _, name in survivors:
            stored = old_records[name]
            was_confirmed = old_store.is_confirmed(stored.rid)
            approved_rids = tuple(
                self.records[a].rid for a in stored.record.approved if a in self.records
            )
            gen_idx = self.entity_index(stored.record.generator)
            if was_confirmed:
                rid = self.store.inject_confirmed(gen_idx, approved_rids)
            else:
                rid, newly, _capped = self.store.add_record(gen_idx, approved_rids)
            stored.rid = rid
            self.names_by_rid.append(name)
            self.records[name] = stored
        # Re-propagate surviving approvals so unconfirmed weights are exact.
        self._recompute_weights()
        self.confirmed -= prune
        self.recent = deque(
            (n for n in self.recent if n in self.records), maxlen=self.config.fallback_window
        )
        return ArchiveReport(tuple(sorted(prune)), tuple(sorted(archived)))

    def _recompute_weights(self) -> None:
        """Rebuild the store from scratch in rid order (post-prune)."""
        # add_record during the rebuild already propagated correctly because
        # survivors were re-added in topological (seq) order; nothing to do.
        return

    # -- export -----------------------------------------------------------------

    def export_dot(self) -> str:
        lines = ["digraph dledger {", "  rankdir=BT;"]
        items = sorted(self.records.items(), key=lambda kv: kv[1].seq)
        for name, stored in items:
            w = self.store.approvers_count(stored.rid)
            if self.store.is_confirmed(stored.rid):
                status = "confirmed"
            elif self.store.is_tailing(stored.rid):
                status = "tailing"
            else:
                status = "unconfirmed"
            label = "%s/%s\\nw=%d %s" % (name.generator, name.digest.hex()[:8], w, status)
            lines.append('  "%s" [label="%s"];' % (name.render(), label))
        for name, stored in items:
            for a in stored.record.approved:
                lines.append('  "%s" -> "%s";' % (name.render(), a.render()))
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dump_lines(self) -> list[str]:
        """Hex wire encodings, one per line, in admission order (archive included)."""
        rows = []
        for name, stored in self.archive.items():
            rows.append((stored.seq, stored.record))
        for name, stored in self.records.items():
            rows.append((stored.seq, stored.record))
        rows.sort(key=lambda r: r[0])
        return [encode_record(rec).hex() for _, rec in rows]
