"""Shared test fixtures: a small ledger environment with signing helpers."""

from __future__ import annotations

import random

import pytest

from dledger.crypto import make_provider
from dledger.ledger.core import LedgerConfig, LedgerState
from dledger.names import EntityId
from dledger.records import PayloadKind, RecordPayload, build_record


class LedgerEnv:
    """One ledger plus keys for a handful of entities, all trust-rooted.

    Every entity signs with a root-installed key (signer_key=None), which
    keeps admission tests independent from the certificate machinery;
    certificate-path tests build their own cert records explicitly.
    """

    def __init__(self, entities, w_confirm=3, n=2, n_genesis=3, now=0.0, **config_kw):
        self.provider = make_provider("hmac", seed=1)
        self.keys = {e: self.provider.keypair(EntityId(e)) for e in entities}
        trust_roots = {EntityId(e): pub for e, (_priv, pub) in self.keys.items()}
        mgr_priv, mgr_pub = self.provider.keypair(EntityId("mgr"))
        self.keys["mgr"] = (mgr_priv, mgr_pub)
        trust_roots[EntityId("mgr")] = mgr_pub
        self.config = LedgerConfig(n=n, w_confirm=w_confirm, **config_kw)
        self.ledger = LedgerState(self.config, self.provider, trust_roots)
        self.rng = random.Random(42)
        self.now = now
        self.genesis = []
        for i in range(n_genesis):
            payload = RecordPayload(kind=PayloadKind.GENESIS, body=b"g%d" % i)
            rec = build_record(EntityId("mgr"), (), payload, None, self.signer("mgr"))
            self.ledger.inject_genesis(rec, now=now)
            self.genesis.append(rec)

    def signer(self, entity):
        priv = self.keys[entity][0]
        return lambda message: self.provider.sign(priv, message)

    def make(self, entity, approved, body=b"x", kind=PayloadKind.APPLICATION,
             signer_key=None, prev_revocation=None, signing_as=None):
        payload = RecordPayload(kind=kind, body=body, prev_revocation=prev_revocation)
        names = tuple(r.name if hasattr(r, "name") else r for r in approved)
        return build_record(
            EntityId(entity), names, payload, signer_key,
            self.signer(signing_as or entity),
        )

    def admit(self, record, tailing=True, now=None, poa_verified=False):
        if now is not None:
            self.now = now
        return self.ledger.admit_record(
            record, is_tailing_arrival=tailing, now=self.now, poa_verified=poa_verified
        )

    def publish(self, entity, approved, **kw):
        """Build and admit in one step; returns (record, verdict)."""
        record = self.make(entity, approved, **kw)
        return record, self.admit(record)


@pytest.fixture
def env():
    return LedgerEnv(["alice", "bob", "carol", "dave"], w_confirm=3, n=2)
