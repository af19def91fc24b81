"""Discrete-event simulation harness: peers, workloads, adversaries, metrics.

run_scenario() wires one ledger + protocol daemon per entity onto a
simulated network, drives Poisson publish workloads, runs any configured
adversaries alongside, and samples a metrics log suitable for byte-exact
determinism checks.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Optional

from ..crypto import make_provider
from ..errors import ConfigInvalid, InsufficientCandidates
from ..ledger.core import LedgerConfig, LedgerState
from ..names import EntityId, RecordName
from ..net import Network
from ..protocols import DaemonConfig, PeerDaemon, encode_notif_param
from ..records import (
    Certificate,
    PayloadKind,
    Record,
    RecordPayload,
    build_record,
)
from .scenario import AdversarySpec, Scenario
from .scheduler import Scheduler


def derive_seed(master: int, tag: str) -> int:
    h = hashlib.sha256(b"%d|%s" % (master, tag.encode())).digest()
    return int.from_bytes(h[:8], "big")


def honest_app_validator(record: Record) -> bool:
    """Application-layer check used by every honest peer in simulations."""
    return not record.payload.body.startswith(b"BAD")


class MetricsLog:
    """Append-only time series plus event counters for one run."""

    def __init__(self):
        self.samples: list[tuple] = []  # (t, peer, unconfirmed, tailing, records)
        self.confirmations: list[tuple] = []  # (t_confirm, peer, name, t_publish)
        self.rejections: dict[tuple, int] = {}
        self.security: dict[tuple, int] = {}
        self.publishes: dict[RecordName, tuple] = {}  # name -> (peer, t)
        self.store_stats: dict[RecordName, list] = {}  # name -> [count, last_t]
        self.publish_failures = 0
        self.link_rows: list[tuple] = []
        self.liveness_violations: list[str] = []
        self.n_honest = 0

    # sink interface used by PeerDaemon ------------------------------------

    def on_published(self, name, peer, t):
        self.publishes[name] = (str(peer), t)

    def on_stored(self, name, peer, t):
        st = self.store_stats.get(name)
        if st is None:
            self.store_stats[name] = [1, t]
        else:
            st[0] += 1
            if t > st[1]:
                st[1] = t

    def on_confirmed(self, names, peer, t):
        for name in names:
            pub = self.publishes.get(name)
            if pub is not None and pub[0] == str(peer):
                self.confirmations.append((t, str(peer), name.render(), pub[1]))

    def on_rejected(self, reason, peer, t):
        key = (str(peer), reason.name if reason is not None else "NONE")
        self.rejections[key] = self.rejections.get(key, 0) + 1

    def on_security_event(self, kind, peer, t):
        key = (str(peer), kind)
        self.security[key] = self.security.get(key, 0) + 1

    # analysis helpers -------------------------------------------------------

    def measured_t_vis(self) -> float:
        """Mean publish-to-last-peer-stored latency over fully propagated records."""
        total = 0.0
        count = 0
        for name, (peer, t_pub) in self.publishes.items():
            st = self.store_stats.get(name)
            if st is not None and st[0] >= self.n_honest:
                total += st[1] - t_pub
                count += 1
        if count == 0:
            return float("nan")
        return total / count

    def confirmation_latencies(self, t_from: float = 0.0) -> list[float]:
        return [
            t_c - t_p for (t_c, _peer, _name, t_p) in self.confirmations if t_p >= t_from
        ]

    def series(self, column: str, t_from: float = 0.0) -> list[float]:
        """Per-sample-instant mean of a column across peers."""
        idx = {"unconfirmed": 2, "tailing": 3, "records": 4}[column]
        by_t: dict[float, list] = {}
        for row in self.samples:
            if row[0] >= t_from:
                by_t.setdefault(row[0], []).append(row[idx])
        return [sum(v) / len(v) for _t, v in sorted(by_t.items())]


@dataclass
class SimResult:
    scenario: Scenario
    seed: int
    metrics: MetricsLog
    network: Network
    sched: Scheduler
    daemons: dict  # honest label -> PeerDaemon
    adversaries: dict = field(default_factory=dict)
    genesis: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def honest_labels(self) -> list[str]:
        return sorted(self.daemons)

    def ledger(self, label: str) -> LedgerState:
        return self.daemons[label].ledger

    def final_record_sets(self) -> dict[str, frozenset]:
        return {
            label: frozenset(
                list(d.ledger.records) + list(d.ledger.archive)
            )
            for label, d in self.daemons.items()
        }


# -- adversaries ---------------------------------------------------------------


class SpammerDaemon(PeerDaemon):
    """Floods validly signed records that approve its own or stale records."""

    def __init__(self, *args, rate: float = 2.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.rate = rate
        self._last_own: Optional[RecordName] = None

    def start(self):
        super().start()
        self.sched.call_later(1.0 / self.rate, self._spam_tick)

    def _spam_tick(self):
        self._spam_once()
        self.sched.call_later(1.0 / self.rate, self._spam_tick)

    def _old_confirmed(self, exclude=()) -> list[RecordName]:
        out = []
        for name in self.ledger.names_by_rid:
            stored = self.ledger.records.get(name)
            if stored is None or name in exclude:
                continue
            if self.ledger.store.is_confirmed(stored.rid):
                out.append(name)
            if len(out) >= 4:
                break
        return out

    def _spam_once(self):
        old = self._old_confirmed(exclude=(self._last_own,))
        if self._last_own is not None:
            if not old:
                return
            approved = (self._last_own, old[0])
        else:
            if len(old) < 2:
                return
            approved = (old[0], old[1])
        payload = RecordPayload(
            kind=PayloadKind.APPLICATION, body=b"spam|%f" % self.sched.now
        )
        record = build_record(
            self.entity, approved, payload, self.signer_key, self.sign
        )
        verdict = self.ledger.admit_record(
            record, is_tailing_arrival=True, now=self.sched.now, poa_verified=True
        )
        if verdict.accepted:
            self._last_own = record.name
            self.announce(record)


class LazyDaemon(PeerDaemon):
    """Publishes real payloads but only approves already-confirmed records."""

    def __init__(self, *args, rate: float = 0.5, **kwargs):
        super().__init__(*args, **kwargs)
        self.rate = rate
        self._count = 0

    def start(self):
        super().start()
        self.sched.call_later(1.0 / self.rate, self._tick)

    def _tick(self):
        self._lazy_once()
        self.sched.call_later(1.0 / self.rate, self._tick)

    def _lazy_once(self):
        targets = []
        for name in self.ledger.names_by_rid:
            stored = self.ledger.records.get(name)
            if stored is None or name.generator == self.entity:
                continue
            if stored.record.payload.kind == PayloadKind.GENESIS:
                continue
            if self.ledger.store.is_confirmed(stored.rid):
                targets.append(name)
            if len(targets) >= self.ledger.config.n:
                break
        if len(targets) < self.ledger.config.n:
            return
        self._count += 1
        payload = RecordPayload(
            kind=PayloadKind.APPLICATION, body=b"lazy|%d" % self._count
        )
        record = build_record(
            self.entity, tuple(targets), payload, self.signer_key, self.sign
        )
        verdict = self.ledger.admit_record(
            record, is_tailing_arrival=True, now=self.sched.now, poa_verified=True
        )
        if verdict.accepted:
            self.announce(record)


class ColluderDaemon(PeerDaemon):
    """One of k entities conspiring to confirm an application-invalid record."""

    def approve_target(self, target: RecordName):
        other = None
        for cand in self.ledger.eligible_candidates(self.entity):
            if cand != target:
                other = cand
                break
        if other is None:
            for name in self.ledger.names_by_rid:
                if name != target and name.generator != self.entity:
                    other = name
                    break
        if other is None:
            return
        payload = RecordPayload(
            kind=PayloadKind.APPLICATION, body=b"collude|%s" % str(self.entity).encode()
        )
        record = build_record(
            self.entity, (target, other), payload, self.signer_key, self.sign
        )
        verdict = self.ledger.admit_record(
            record, is_tailing_arrival=True, now=self.sched.now, poa_verified=True
        )
        if verdict.accepted:
            self.announce(record)


class NotifForger:
    """Floods Notif Interests announcing records that do not exist."""

    def __init__(self, label, net, rng, victims, cert_names, rate=1.0):
        self.label = label
        self.net = net
        self.rng = rng
        self.victims = victims
        self.cert_names = cert_names
        self.rate = rate
        self.forged: list[RecordName] = []

    def start(self, sched):
        self.sched = sched
        sched.call_later(1.0 / self.rate, self._tick)

    def _tick(self):
        victim = self.victims[self.rng.randrange(len(self.victims))]
        digest = bytes(self.rng.getrandbits(8) for _ in range(32))
        forged_name = RecordName(EntityId(victim), digest)
        self.forged.append(forged_name)
        poa = bytes(self.rng.getrandbits(8) for _ in range(32))
        param = encode_notif_param(poa, self.cert_names.get(victim))
        interest = self.net.make_interest(
            ("DLedger", "NOTIF", victim, digest.hex()), param
        )
        self.net.express_interest(self.label, interest)
        self.sched.call_later(1.0 / self.rate, self._tick)


def inject_adversary(scenario: Scenario, kind: str, params: Optional[dict] = None) -> Scenario:
    scenario.adversaries.append(AdversarySpec(kind=kind, params=dict(params or {})))
    return scenario.validate()


# -- genesis bootstrap ------------------------------------------------------------


def build_genesis(scenario, provider, manager_key, labels) -> tuple[list, dict]:
    """Bootstrap records: a few plain anchors plus one certificate per entity.

    All are generated by the identity manager with no approvals and enter
    every ledger pre-confirmed.
    """
    records = []
    cert_names = {}

    def sign(message: bytes) -> bytes:
        return provider.sign(manager_key, message)

    for i in range(scenario.genesis_records):
        payload = RecordPayload(kind=PayloadKind.GENESIS, body=b"genesis|%d" % i)
        records.append(
            build_record(EntityId("mgr"), (), payload, None, sign)
        )
    for label in labels:
        _priv, pub = provider.keypair(EntityId(label))
        cert = Certificate(
            subject=EntityId(label),
            public_key=pub,
            issuer=EntityId("mgr"),
            not_before=0.0,
            not_after=float("inf"),
        )
        payload = RecordPayload(kind=PayloadKind.CERT_ISSUANCE, body=cert.encode())
        rec = build_record(EntityId("mgr"), (), payload, None, sign)
        records.append(rec)
        cert_names[label] = rec.name
    return records, cert_names


# -- main entry -------------------------------------------------------------------


def run_scenario(
    scenario: Scenario,
    seed: Optional[int] = None,
    store_backend: Optional[str] = None,
    trace: bool = False,
) -> SimResult:
    scenario.validate()
    seed = scenario.seed if seed is None else seed
    sched = Scheduler()
    net = Network(
        sched,
        seed=derive_seed(seed, "net"),
        cs_capacity=scenario.cs_capacity,
        default_hop_budget=scenario.effective_hop_budget(),
        trace=trace,
    )
    provider = make_provider(scenario.scheme, derive_seed(seed, "keys"))
    mgr_priv, mgr_pub = provider.keypair(EntityId("mgr"))
    trust_roots = {EntityId("mgr"): mgr_pub}

    honest = [scenario.peer_label(i) for i in range(scenario.entities)]

    # adversary roster
    adv_daemons: dict[str, object] = {}
    adv_specs: list[tuple[str, AdversarySpec]] = []
    counters: dict[str, int] = {}
    colluder_labels: list[str] = []
    for spec in scenario.adversaries:
        if spec.kind == "colluders":
            k = int(spec.params.get("k", scenario.w_confirm))
            for i in range(k):
                label = "adv_col%02d" % i
                colluder_labels.append(label)
                adv_specs.append((label, spec))
        else:
            idx = counters.get(spec.kind, 0)
            counters[spec.kind] = idx + 1
            adv_specs.append(("adv_%s%d" % (spec.kind, idx), spec))

    signing_labels = honest + [
        lbl for (lbl, sp) in adv_specs if sp.kind != "notif_forger"
    ]
    genesis_records, cert_names = build_genesis(
        scenario, provider, mgr_priv, signing_labels
    )

    metrics = MetricsLog()
    metrics.n_honest = len(honest)

    # topology
    for label in honest:
        net.add_node(label)
    for i, j, lat in scenario.iter_edges():
        net.add_link(honest[i], honest[j], lat, scenario.loss_rate)
    # adversaries attach to a few well-spread honest peers
    attach = sorted({0, scenario.entities // 2, scenario.entities - 1})
    for label, _spec in adv_specs:
        net.add_node(label)
        for i in attach:
            net.add_link(label, honest[i], scenario.latency, scenario.loss_rate)

    daemon_cfg = DaemonConfig(sync_interval=scenario.sync_interval)

    def make_daemon(label, cls=PeerDaemon, sink=None, ledger_kwargs=None, **extra):
        grace = scenario.contribution_grace
        if grace is None:
            grace = max(1.0, 6.0 * scenario.latency)
        cfg_kwargs = dict(
            n=scenario.n,
            w_confirm=scenario.w_confirm,
            w_contribution=scenario.w_contribution,
            contribution_grace=grace,
            unconfirmed_ttl=scenario.unconfirmed_ttl,
            archive_depth=scenario.archive_depth,
        )
        cfg_kwargs.update(ledger_kwargs or {})
        config = LedgerConfig(**cfg_kwargs)
        validator = honest_app_validator
        if (ledger_kwargs or {}).get("enforce_policies") is False:
            validator = lambda record: True  # noqa: E731
        ledger = LedgerState(
            config,
            provider,
            trust_roots,
            app_validator=validator,
            store_backend=store_backend,
        )
        for rec in genesis_records:
            ledger.inject_genesis(rec, now=0.0)
        priv, _pub = provider.keypair(EntityId(label))
        rng = random.Random(derive_seed(seed, "daemon|" + label))
        daemon = cls(
            EntityId(label),
            ledger,
            net,
            priv,
            rng,
            config=daemon_cfg,
            signer_key=cert_names.get(label),
            metrics=sink,
            **extra,
        )
        net.on_links_restored.append(daemon.on_links_restored)
        return daemon

    daemons = {}
    for label in honest:
        daemon = make_daemon(label, sink=metrics)
        ledger = daemon.ledger
        ledger.on_confirmed = (
            lambda names, now, _l=label: metrics.on_confirmed(names, _l, now)
        )
        daemons[label] = daemon

    bad_holder: dict[str, RecordName] = {}
    forgers: list[NotifForger] = []
    for label, spec in adv_specs:
        params = spec.params
        if spec.kind == "spammer":
            adv_daemons[label] = make_daemon(
                label,
                cls=SpammerDaemon,
                ledger_kwargs={"enforce_policies": False},
                rate=float(params.get("rate", 2.0)),
            )
        elif spec.kind == "lazy":
            adv_daemons[label] = make_daemon(
                label,
                cls=LazyDaemon,
                ledger_kwargs={"enforce_policies": False},
                rate=float(params.get("rate", 0.5)),
            )
        elif spec.kind == "colluders":
            adv_daemons[label] = make_daemon(
                label,
                cls=ColluderDaemon,
                ledger_kwargs={
                    "enforce_policies": False,
                    "count_self_indirect": True,
                },
            )
        elif spec.kind == "notif_forger":
            forger = NotifForger(
                label,
                net,
                random.Random(derive_seed(seed, "forger|" + label)),
                honest,
                cert_names,
                rate=float(params.get("rate", 1.0)),
            )
            adv_daemons[label] = forger
            forgers.append(forger)

    # colluder plot: one invalid record, then one direct approval per colluder
    if colluder_labels:
        spec = next(s for s in scenario.adversaries if s.kind == "colluders")
        bad_at = float(spec.params.get("bad_at", 20.0))
        gap = float(spec.params.get("gap", 3.0))
        leader = adv_daemons[colluder_labels[0]]

        def publish_bad():
            payload = RecordPayload(kind=PayloadKind.APPLICATION, body=b"BAD|payload")
            try:
                record = leader.ledger.create_record(
                    leader.entity, payload, leader.rng, leader.sign, leader.signer_key
                )
            except InsufficientCandidates:
                sched.call_later(1.0, publish_bad)
                return
            bad_holder["bad"] = record.name
            leader.publish_record(record)

        sched.call_at(bad_at, publish_bad)
        for i, label in enumerate(colluder_labels):
            daemon = adv_daemons[label]

            def approve_bad(d=daemon):
                bad = bad_holder.get("bad")
                if bad is None or bad not in d.ledger.records:
                    sched.call_later(1.0, approve_bad)
                    return
                d.approve_target(bad)

            sched.call_at(bad_at + gap * (i + 1), approve_bad)

    # honest Poisson workloads
    drain = scenario.duration if scenario.drain is None else scenario.drain
    pub_rngs = {
        label: random.Random(derive_seed(seed, "publish|" + label)) for label in honest
    }
    pub_counts = dict.fromkeys(honest, 0)

    def do_publish(label):
        daemon = daemons[label]
        pub_counts[label] += 1
        payload = RecordPayload(
            kind=PayloadKind.APPLICATION,
            body=b"app|%s|%06d" % (label.encode(), pub_counts[label]),
        )
        try:
            daemon.publish(payload)
        except InsufficientCandidates:
            # candidate pool momentarily thin; hold the record and retry
            metrics.publish_failures += 1
            pub_counts[label] -= 1
            if sched.now + 0.5 < drain:
                sched.call_at(sched.now + 0.5, do_publish, label)
            return
        schedule_publish(label)

    def schedule_publish(label):
        dt = pub_rngs[label].expovariate(scenario.lambda_e)
        t = sched.now + dt
        if t < drain:
            sched.call_at(t, do_publish, label)

    # sampling
    def sample():
        t = sched.now
        for label in honest:
            ledger = daemons[label].ledger
            n_rec = len(ledger.records)
            confirmed_live = len(ledger.confirmed) - len(ledger.archive)
            tailing = len(ledger.store.tailing_ids())
            metrics.samples.append((t, label, n_rec - confirmed_live, tailing, n_rec))
        sched.call_later(scenario.sample_interval, sample)

    # prune/archive loop
    def prune():
        for label in honest:
            daemons[label].ledger.prune_and_archive(sched.now)
        sched.call_later(scenario.prune_interval, prune)

    # partitions
    for part in scenario.partitions:
        groups = [{honest[i] for i in g} for g in part.groups]
        net.set_partition(groups, part.from_t, part.to_t)

    # go
    net.start()
    for daemon in daemons.values():
        daemon.start()
    for adv in adv_daemons.values():
        if isinstance(adv, NotifForger):
            adv.start(sched)
        else:
            adv.start()
    for label in honest:
        schedule_publish(label)
    sched.call_later(scenario.sample_interval, sample)
    if scenario.prune_interval:
        sched.call_later(scenario.prune_interval, prune)

    sched.run_until(scenario.duration)

    # epilogue: link totals and liveness
    for link in net.links:
        metrics.link_rows.append(
            (link.id, link.a.id, link.b.id, link.tx_interest, link.tx_data, link.dropped)
        )
    for name in sorted(metrics.publishes, key=lambda n: n.render()):
        peer, _t = metrics.publishes[name]
        if peer in daemons and not daemons[peer].ledger.is_confirmed(name):
            metrics.liveness_violations.append(name.render())

    extras = {"cert_names": cert_names}
    if bad_holder:
        extras["bad_record"] = bad_holder.get("bad")
    if forgers:
        extras["forged_names"] = [n for f in forgers for n in f.forged]
    return SimResult(
        scenario=scenario,
        seed=seed,
        metrics=metrics,
        network=net,
        sched=sched,
        daemons=daemons,
        adversaries=adv_daemons,
        genesis=genesis_records,
        extras=extras,
    )
