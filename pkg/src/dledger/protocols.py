"""Per-peer protocol engines: publication, notification, synchronization.

A PeerDaemon owns one ledger and one network node.  New records are
announced with a multicast Notif Interest carrying the record's PoA (so
receivers can reject forgeries before fetching anything), then fetched by
name.  Periodic and recovery syncs multicast the peer's tailing-record
list; receivers fetch what they miss, recursing into missing ancestors,
and answer with their own sync when the sender looks stale.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import InsufficientCandidates
from .ledger.core import AdmissionOutcome, LedgerState, RejectReason
from .names import EntityId, RecordName
from .net import APP, DataPacket, Interest, Name, Network
from .records import (
    PayloadKind,
    Record,
    RecordPayload,
    decode_record,
    encode_record,
)

SYNC_PARAM_CAP = 64 * 1024

_name_cache: dict[str, RecordName] = {}


def _parse_record_name(text: str) -> RecordName:
    name = _name_cache.get(text)
    if name is None:
        if len(_name_cache) > 200_000:
            _name_cache.clear()
        name = RecordName.parse(text)
        _name_cache[text] = name
    return name


def tailing_digest(names: list[RecordName]) -> bytes:
    """Digest over the length-prefixed concatenation of rendered names."""
    h = hashlib.sha256()
    for name in names:
        rendered = name.render().encode()
        h.update(struct.pack(">I", len(rendered)))
        h.update(rendered)
    return h.digest()


def encode_sync_param(names: list[str], chunk: int, total: int) -> bytes:
    parts = [struct.pack(">HH", chunk, total)]
    for text in names:
        raw = text.encode()
        parts.append(struct.pack(">H", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def decode_sync_param(param: bytes) -> tuple[int, int, list[str]]:
    if len(param) < 4:
        raise ValueError("sync parameter too short")
    chunk, total = struct.unpack_from(">HH", param, 0)
    i = 4
    names = []
    while i < len(param):
        if i + 2 > len(param):
            raise ValueError("truncated sync name length")
        (ln,) = struct.unpack_from(">H", param, i)
        i += 2
        if i + ln > len(param):
            raise ValueError("truncated sync name")
        names.append(param[i : i + ln].decode())
        i += ln
    return chunk, total, names


def encode_notif_param(poa: bytes, signer_key: Optional[RecordName]) -> bytes:
    signer = signer_key.render().encode() if signer_key is not None else b""
    return struct.pack(">H", len(poa)) + poa + struct.pack(">H", len(signer)) + signer


def decode_notif_param(param: bytes) -> tuple[bytes, Optional[RecordName]]:
    (ln,) = struct.unpack_from(">H", param, 0)
    poa = param[2 : 2 + ln]
    i = 2 + ln
    (ls,) = struct.unpack_from(">H", param, i)
    signer = param[i + 2 : i + 2 + ls]
    key = _parse_record_name(signer.decode()) if ls else None
    return poa, key


class NullMetrics:
    """Metrics sink used when no harness is attached."""

    def on_published(self, name, peer, t):
        pass

    def on_stored(self, name, peer, t):
        pass

    def on_confirmed(self, names, peer, t):
        pass

    def on_rejected(self, reason, peer, t):
        pass

    def on_security_event(self, kind, peer, t):
        pass


@dataclass
class DaemonConfig:
    sync_interval: float = 10.0
    retry_schedule: tuple = (1.0, 2.0, 4.0)
    sync_reply_min_gap: float = 2.0


@dataclass
class _FetchState:
    attempt: int
    is_tailing: bool
    expected_poa: Optional[bytes]
    timer: object = None


# global decode memo: decoding is a pure function of the wire bytes, and in a
# simulation every peer fetches the same bytes.
_decode_cache: dict[bytes, Record] = {}


def cached_decode(data: bytes) -> Record:
    key = hashlib.sha256(data).digest()
    rec = _decode_cache.get(key)
    if rec is None:
        if len(_decode_cache) > 100_000:
            _decode_cache.clear()
        rec = decode_record(data)
        _decode_cache[key] = rec
    return rec


class PeerDaemon:
    def __init__(
        self,
        entity: EntityId,
        ledger: LedgerState,
        net: Network,
        private_key,
        rng,
        config: Optional[DaemonConfig] = None,
        signer_key: Optional[RecordName] = None,
        metrics=None,
    ):
        self.entity = entity
        self.ledger = ledger
        self.net = net
        self.sched = net.sched
        self.private_key = private_key
        self.rng = rng
        self.config = config or DaemonConfig()
        self.signer_key = signer_key
        self.metrics = metrics if metrics is not None else NullMetrics()
        self.node = net.nodes[str(entity)]
        self.node.on_app_interest = self._on_app_interest
        self.node.on_app_data = self._on_app_data
        net.register_prefix(str(entity), ("DLedger",))
        net.register_prefix(str(entity), ("DLedger", str(entity)))
        self.outstanding: dict[RecordName, _FetchState] = {}
        self._seen_notifs: set[RecordName] = set()
        self._sync_timer = None
        self._last_sync_sent = -1e9
        self._recent_syncs: dict[bytes, int] = {}
        self._digest_cache: tuple = (-1, b"", [])  # (ledger seq, digest, names)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        offset = self.rng.uniform(0.5, self.config.sync_interval)
        self._sync_timer = self.sched.call_later(offset, self._sync_tick)

    def on_links_restored(self, links) -> None:
        touched = any(link.a is self.node or link.b is self.node for link in links)
        if touched:
            self.run_sync()

    # -- publication --------------------------------------------------------

    def sign(self, message: bytes) -> bytes:
        return self.ledger.provider.sign(self.private_key, message)

    def publish(self, payload: RecordPayload) -> RecordName:
        record = self.ledger.create_record(
            self.entity, payload, self.rng, self.sign, self.signer_key
        )
        return self.publish_record(record)

    def publish_record(self, record: Record) -> RecordName:
        now = self.sched.now
        verdict = self.ledger.admit_record(
            record, is_tailing_arrival=True, now=now, poa_verified=True
        )
        if not verdict.accepted:
            raise InsufficientCandidates(
                "own record rejected locally: %s" % (verdict.reason,)
            )
        self.metrics.on_published(record.name, self.entity, now)
        self.metrics.on_stored(record.name, self.entity, now)
        self.announce(record)
        return record.name

    def announce(self, record: Record) -> None:
        name: Name = (
            "DLedger",
            "NOTIF",
            str(record.name.generator),
            record.name.digest.hex(),
        )
        param = encode_notif_param(record.poa, record.signer_key)
        interest = self.net.make_interest(name, param)
        self.net.express_interest(str(self.entity), interest)

    # -- app plane ------------------------------------------------------------

    def _on_app_interest(self, interest: Interest) -> Optional[bytes]:
        name = interest.name
        if len(name) >= 2 and name[0] == "DLedger":
            if name[1] == "NOTIF":
                self.on_notif(interest)
                return None
            if name[1] == "SYNC":
                self.on_sync(interest)
                return None
        if len(name) == 3 and name[0] == "DLedger":
            try:
                record_name = _parse_record_name("/" + "/".join(name))
            except ValueError:
                return None
            stored = self.ledger.lookup(record_name)
            if stored is not None:
                return encode_record(stored.record)
        return None

    # -- notification ------------------------------------------------------------

    def on_notif(self, interest: Interest) -> None:
        name = interest.name
        if len(name) != 4:
            return
        try:
            record_name = _parse_record_name("/DLedger/%s/%s" % (name[2], name[3]))
        except ValueError:
            self._security_event("NotifMalformed")
            return
        if (
            record_name in self.ledger.records
            or record_name in self.ledger.archive
            or record_name in self.ledger.pending
            or record_name in self.outstanding
            or record_name in self._seen_notifs
        ):
            return
        if interest.parameter is None:
            self._security_event("NotifPoAMissing")
            return
        try:
            poa, signer_key = decode_notif_param(interest.parameter)
        except (ValueError, struct.error, IndexError):
            self._security_event("NotifMalformed")
            return
        pub = self._signer_pub(record_name.generator, signer_key)
        if pub is None:
            self._security_event("NotifPoAInvalid")
            return
        if not self.ledger.provider.verify(pub, record_name.render().encode(), poa):
            self._security_event("NotifPoAInvalid")
            return
        self._seen_notifs.add(record_name)
        self.fetch(record_name, is_tailing=True, expected_poa=poa)

    def _signer_pub(self, generator: EntityId, signer_key: Optional[RecordName]):
        if signer_key is None:
            return self.ledger.trust_roots.get(generator)
        stored = self.ledger.lookup(signer_key)
        if stored is None or stored.record.payload.kind != PayloadKind.CERT_ISSUANCE:
            return None
        cert = stored.record.payload.certificate()
        if cert.subject != generator:
            return None
        return cert.public_key

    # -- fetching -------------------------------------------------------------------

    def fetch(
        self,
        record_name: RecordName,
        is_tailing: bool,
        expected_poa: Optional[bytes] = None,
    ) -> None:
        if record_name in self.outstanding or record_name in self.ledger.records:
            return
        state = _FetchState(attempt=0, is_tailing=is_tailing, expected_poa=expected_poa)
        self.outstanding[record_name] = state
        self._send_fetch(record_name, state)

    def _send_fetch(self, record_name: RecordName, state: _FetchState) -> None:
        interest = self.net.make_interest(record_name.components())
        self.net.express_interest(str(self.entity), interest)
        delay = self.config.retry_schedule[state.attempt]
        state.timer = self.sched.call_later(delay, self._fetch_timeout, record_name)

    def _fetch_timeout(self, record_name: RecordName) -> None:
        state = self.outstanding.get(record_name)
        if state is None:
            return
        state.attempt += 1
        if state.attempt >= len(self.config.retry_schedule):
            # Give up; the record will be requeued by a later sync round.
            del self.outstanding[record_name]
            self._seen_notifs.discard(record_name)
            return
        self._send_fetch(record_name, state)

    def _on_app_data(self, data: DataPacket) -> None:
        if len(data.name) != 3:
            return
        try:
            record_name = _parse_record_name("/" + "/".join(data.name))
        except ValueError:
            return
        state = self.outstanding.pop(record_name, None)
        if state is None:
            return
        if state.timer is not None:
            state.timer.cancel()
        try:
            record = cached_decode(data.content)
        except Exception:
            self._security_event("RecordMalformed")
            return
        if record.name != record_name:
            self._security_event("RecordNameMismatch")
            return
        poa_verified = False
        if state.expected_poa is not None:
            if record.poa != state.expected_poa:
                self._security_event("RecordPoAMismatch")
                return
            poa_verified = True
        now = self.sched.now
        verdict = self.ledger.admit_record(
            record, is_tailing_arrival=state.is_tailing, now=now, poa_verified=poa_verified
        )
        if verdict.outcome is AdmissionOutcome.ACCEPTED:
            self.metrics.on_stored(record_name, self.entity, now)
        elif verdict.outcome is AdmissionOutcome.PENDING:
            for missing in sorted(verdict.missing):
                self.fetch(missing, is_tailing=False)
        else:
            self.metrics.on_rejected(verdict.reason, self.entity, now)

    # -- synchronization ---------------------------------------------------------------

    def _sync_tick(self) -> None:
        self.run_sync()
        self._sync_timer = self.sched.call_later(
            self.config.sync_interval, self._sync_tick
        )

    def _tailing_view(self) -> tuple[bytes, list[RecordName]]:
        """Digest + names of the current tailing set, cached per ledger state."""
        seq = self.ledger._seq
        cached_seq, digest, names = self._digest_cache
        if seq != cached_seq:
            names = self.ledger.tailing_names()
            digest = tailing_digest(names)
            self._digest_cache = (seq, digest, names)
        return digest, names

    def run_sync(self) -> None:
        now = self.sched.now
        self._last_sync_sent = now
        digest, names = self._tailing_view()
        rendered = [n.render() for n in names]
        chunks: list[list[str]] = [[]]
        size = 4
        for text in rendered:
            need = 2 + len(text)
            if size + need > SYNC_PARAM_CAP:
                chunks.append([])
                size = 4
            chunks[-1].append(text)
            size += need
        total = len(chunks)
        for i, chunk in enumerate(chunks):
            name: Name = ("DLedger", "SYNC", digest.hex())
            if total > 1:
                name = name + ("c%d" % i,)
            param = encode_sync_param(chunk, i, total)
            interest = self.net.make_interest(name, param)
            self.net.express_interest(str(self.entity), interest)

    def on_sync(self, interest: Interest) -> None:
        if interest.parameter is None:
            return
        name = interest.name
        if len(name) < 3:
            return
        try:
            their_digest = bytes.fromhex(name[2])
        except ValueError:
            self._security_event("SyncMalformed")
            return
        my_digest, my_names = self._tailing_view()
        if their_digest == my_digest:
            return  # identical view (also covers hearing our own sync)
        dedup_key = hashlib.sha256(interest.parameter).digest()
        fingerprint = len(self.ledger.records) + len(self.outstanding)
        if self._recent_syncs.get(dedup_key) == fingerprint:
            return
        if len(self._recent_syncs) > 4096:
            self._recent_syncs.clear()
        self._recent_syncs[dedup_key] = fingerprint
        try:
            _chunk, _total, rendered = decode_sync_param(interest.parameter)
        except (ValueError, struct.error, UnicodeDecodeError):
            self._security_event("SyncMalformed")
            return
        sender_behind = False
        records = self.ledger.records
        archive = self.ledger.archive
        rendered = sorted(set(rendered))
        for text in rendered:
            try:
                rname = _parse_record_name(text)
            except ValueError:
                self._security_event("SyncMalformed")
                return
            stored = records.get(rname)
            if stored is None:
                if rname in archive:
                    sender_behind = True
                elif rname not in self.outstanding:
                    self.fetch(rname, is_tailing=False)
            elif self.ledger.store.is_confirmed(stored.rid):
                # They call tailing what we long since confirmed: genuinely
                # stale, not just propagation skew.  Offer our view back.
                sender_behind = True
        if sender_behind:
            now = self.sched.now
            if now - self._last_sync_sent >= self.config.sync_reply_min_gap:
                self.run_sync()

    def _security_event(self, kind: str) -> None:
        self.metrics.on_security_event(kind, self.entity, self.sched.now)

    # -- convenience for tests ---------------------------------------------------

    def record_names(self) -> set[RecordName]:
        return set(self.ledger.records)
