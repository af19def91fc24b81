import pytest

from dledger.errors import ConfigInvalid, InsufficientCandidates, UnknownRecord
from dledger.ledger.core import (
    AdmissionOutcome,
    LedgerConfig,
    RejectReason,
    RevocationState,
)
from dledger.names import EntityId
from dledger.records import (
    Certificate,
    PayloadKind,
    RecordPayload,
    RevocationNotice,
    build_record,
)

from conftest import LedgerEnv


def confirm(env, target, approvers):
    """Drive target to confirmation with one approving record per entity."""
    for i, entity in enumerate(approvers):
        anchor = env.genesis[i % len(env.genesis)]
        rec, verdict = env.publish(entity, (target, anchor))
        assert verdict.accepted, verdict
    return target.name if hasattr(target, "name") else target


# -- basic admission ---------------------------------------------------------


def test_accept_and_weight(env):
    rec, verdict = env.publish("alice", env.genesis[:2])
    assert verdict.accepted
    assert env.ledger.weight(env.genesis[0].name) == 1
    assert env.ledger.approvers(env.genesis[0].name) == {"alice"}


def test_duplicate_rejected(env):
    rec, verdict = env.publish("alice", env.genesis[:2])
    assert verdict.accepted
    verdict2 = env.admit(rec)
    assert verdict2.reason is RejectReason.DUPLICATE_NAME


def test_self_approval_rejected(env):
    rec, verdict = env.publish("alice", env.genesis[:2])
    assert verdict.accepted
    bad = env.make("alice", (rec, env.genesis[2]))
    assert env.admit(bad).reason is RejectReason.SELF_APPROVAL


def test_poa_invalid_rejected(env):
    forged = env.make("alice", env.genesis[:2], signing_as="bob")
    assert env.admit(forged).reason is RejectReason.POA_INVALID


def test_unknown_generator_rejected(env):
    payload = RecordPayload(kind=PayloadKind.APPLICATION, body=b"x")
    rec = build_record(
        EntityId("mallory"),
        (env.genesis[0].name, env.genesis[1].name),
        payload,
        None,
        lambda m: b"whatever",
    )
    assert env.admit(rec).reason is RejectReason.POA_INVALID


def test_genesis_kind_rejected_via_admission(env):
    payload = RecordPayload(kind=PayloadKind.GENESIS, body=b"gX")
    rec = build_record(EntityId("mgr"), (), payload, None, env.signer("mgr"))
    assert env.admit(rec).reason is RejectReason.MALFORMED


def test_app_validator(env):
    env.ledger.app_validator = lambda r: not r.payload.body.startswith(b"BAD")
    _rec, verdict = env.publish("alice", env.genesis[:2], body=b"BAD stuff")
    assert verdict.reason is RejectReason.APP_REJECTED


# -- pending / missing ancestors ----------------------------------------------


def test_parked_until_ancestors_arrive(env):
    parent = env.make("alice", env.genesis[:2])
    child = env.make("bob", (parent, env.genesis[2]))
    verdict = env.admit(child)
    assert verdict.outcome is AdmissionOutcome.PENDING
    assert verdict.missing == frozenset({parent.name})
    assert env.ledger.pending_missing() == {parent.name}
    assert env.admit(parent).accepted
    assert child.name in env.ledger.records  # retried automatically
    assert not env.ledger.pending


# -- contribution policy ------------------------------------------------------


def test_contribution_rejects_over_threshold_targets(env):
    # w_contribution defaults to 2 for w_confirm=3
    target, _ = env.publish("alice", env.genesis[:2])
    env.publish("bob", (target, env.genesis[0]))
    env.publish("carol", (target, env.genesis[1]))  # weight hits 2 now
    assert env.ledger.weight(target.name) == 2
    env.now += env.config.contribution_grace + 1.0
    late = env.make("dave", (target, env.genesis[2]))
    assert env.admit(late).reason is RejectReason.CONTRIBUTION_VIOLATION


def test_contribution_grace_window(env):
    target, _ = env.publish("alice", env.genesis[:2])
    env.publish("bob", (target, env.genesis[0]))
    env.publish("carol", (target, env.genesis[1]))
    # still inside the grace window: a record already in flight is admitted
    rec = env.make("dave", (target, env.genesis[2]))
    assert env.admit(rec).accepted


def test_contribution_skipped_for_non_tailing_arrivals(env):
    target, _ = env.publish("alice", env.genesis[:2])
    env.publish("bob", (target, env.genesis[0]))
    env.publish("carol", (target, env.genesis[1]))
    env.now += env.config.contribution_grace + 1.0
    late = env.make("dave", (target, env.genesis[2]))
    assert env.admit(late, tailing=False).accepted


def test_genesis_exempt_from_contribution(env):
    # push an anchor's weight past w_contribution, it stays approvable
    g = env.genesis[0]
    env.publish("alice", (g, env.genesis[1]))
    env.publish("bob", (g, env.genesis[1]))
    env.publish("carol", (g, env.genesis[2]))
    env.now += env.config.contribution_grace + 5.0
    rec = env.make("dave", (g, env.genesis[1]))
    assert env.admit(rec).accepted


# -- confirmation -------------------------------------------------------------


def test_confirmation_and_callback(env):
    seen = []
    env.ledger.on_confirmed = lambda names, now: seen.extend(names)
    target, _ = env.publish("alice", env.genesis[:2])
    confirm(env, target, ["bob", "carol", "dave"])
    assert env.ledger.is_confirmed(target.name)
    assert target.name in env.ledger.confirmed
    assert target.name in seen


def test_weight_unknown_record(env):
    from dledger.names import RecordName

    with pytest.raises(UnknownRecord):
        env.ledger.weight(RecordName(EntityId("x"), b"\x01" * 32))


# -- record creation ----------------------------------------------------------


def test_create_record_never_self_approves(env):
    for i in range(6):
        rec = env.ledger.create_record(
            EntityId("alice"),
            RecordPayload(kind=PayloadKind.APPLICATION, body=b"p%d" % i),
            env.rng,
            env.signer("alice"),
            None,
        )
        assert all(a.generator != "alice" for a in rec.approved)
        assert len(rec.approved) == env.config.n
        assert env.admit(rec).accepted


def test_create_record_insufficient_candidates():
    env = LedgerEnv(["alice", "bob"], w_confirm=2, n=2, n_genesis=1)
    with pytest.raises(InsufficientCandidates):
        env.ledger.create_record(
            EntityId("alice"),
            RecordPayload(kind=PayloadKind.APPLICATION),
            env.rng,
            env.signer("alice"),
            None,
        )


def test_fallback_includes_genesis_anchors(env):
    anchors = {g.name for g in env.genesis}
    assert anchors <= set(env.ledger.fallback_candidates(EntityId("alice")))


# -- certificates -------------------------------------------------------------


def fresh_pair(env, tag):
    """Two fresh non-manager records the manager may approve."""
    ra, _ = env.publish("alice", env.genesis[:2], body=b"fp-a|" + tag)
    rb, _ = env.publish("bob", (env.genesis[1], env.genesis[2]), body=b"fp-b|" + tag)
    return ra.name, rb.name


def cert_record(env, subject, not_after=float("inf")):
    _priv, pub = env.provider.keypair(EntityId(subject))
    cert = Certificate(
        subject=EntityId(subject),
        public_key=pub,
        issuer=EntityId("mgr"),
        not_before=0.0,
        not_after=not_after,
    )
    payload = RecordPayload(kind=PayloadKind.CERT_ISSUANCE, body=cert.encode())
    return build_record(
        EntityId("mgr"),
        fresh_pair(env, b"cert|" + subject.encode()),
        payload,
        None,
        env.signer("mgr"),
    )


def erin_record(env, cert_name, body=b"hi"):
    env.keys.setdefault("erin", env.provider.keypair(EntityId("erin")))
    payload = RecordPayload(kind=PayloadKind.APPLICATION, body=body)
    return build_record(
        EntityId("erin"),
        (env.genesis[1].name, env.genesis[2].name),
        payload,
        cert_name,
        env.signer("erin"),
    )


def test_cert_must_be_confirmed(env):
    cert = cert_record(env, "erin")
    assert env.admit(cert).accepted
    rec = erin_record(env, cert.name)
    assert env.admit(rec).reason is RejectReason.CERT_NOT_CONFIRMED
    confirm(env, cert, ["alice", "bob", "carol"])
    rec2 = erin_record(env, cert.name, body=b"hi2")
    assert env.admit(rec2).accepted


def test_revoked_cert_rejected(env):
    cert = cert_record(env, "erin")
    env.admit(cert)
    confirm(env, cert, ["alice", "bob", "carol"])
    notice = RevocationNotice(revoked_cert=cert.name, reason="compromised")
    payload = RecordPayload(kind=PayloadKind.CERT_REVOCATION, body=notice.encode())
    rev = build_record(
        EntityId("mgr"),
        fresh_pair(env, b"rev"),
        payload,
        None,
        env.signer("mgr"),
    )
    assert env.admit(rev).accepted
    confirm(env, rev, ["alice", "bob", "carol"])
    assert env.ledger.revocation_status(cert.name).state is RevocationState.REVOKED
    rec = erin_record(env, cert.name)
    assert env.admit(rec).reason is RejectReason.CERT_REVOKED


def test_expired_cert_rejected(env):
    cert = cert_record(env, "erin", not_after=5.0)
    env.admit(cert)
    confirm(env, cert, ["alice", "bob", "carol"])
    env.now = 10.0
    rec = erin_record(env, cert.name)
    assert env.admit(rec).reason is RejectReason.CERT_EXPIRED


def test_revocation_status_unknown(env):
    from dledger.names import RecordName

    status = env.ledger.revocation_status(RecordName(EntityId("x"), b"\x02" * 32))
    assert status.state is RevocationState.UNKNOWN


# -- pruning and archiving -----------------------------------------------------


def test_prune_stale_unconfirmed():
    env = LedgerEnv(["alice", "bob", "carol", "dave"], w_confirm=3, n=2,
                    unconfirmed_ttl=10.0)
    stale, _ = env.publish("alice", env.genesis[:2])
    child = env.make("bob", (stale, env.genesis[2]))
    assert env.admit(child).accepted
    keep, _ = env.publish("carol", env.genesis[1:3])
    confirm(env, keep, ["alice", "bob", "dave"])
    env.now = 50.0
    report = env.ledger.prune_and_archive(env.now)
    assert stale.name in report.pruned
    assert child.name in report.pruned  # descendants go with their ancestor
    assert keep.name in env.ledger.records
    assert env.ledger.is_confirmed(keep.name)


def test_archive_deep_confirmed():
    env = LedgerEnv(["alice", "bob", "carol", "dave"], w_confirm=3, n=2,
                    archive_depth=2, n_genesis=4)
    entities = ["alice", "bob", "carol", "dave"]
    prev = env.genesis[0]
    chain = []
    for i in range(8):
        rec, verdict = env.publish(
            entities[i % 4], (prev, env.genesis[1 + (i % 3)])
        )
        assert verdict.accepted, verdict
        chain.append(rec)
        prev = rec
    confirmed = [r for r in chain if env.ledger.is_confirmed(r.name)]
    assert confirmed
    report = env.ledger.prune_and_archive(env.now)
    assert report.archived
    oldest = confirmed[0]
    assert oldest.name in env.ledger.archive
    assert env.ledger.is_confirmed(oldest.name)  # archive still counts
    # dumps keep archived records so replays start from genesis
    assert len(env.ledger.dump_lines()) == len(env.ledger.records) + len(
        env.ledger.archive
    )


# -- config validation -----------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        LedgerConfig(n=1)
    with pytest.raises(ConfigInvalid):
        LedgerConfig(w_confirm=0)
    with pytest.raises(ConfigInvalid):
        LedgerConfig(w_confirm=3, w_contribution=3)
    cfg = LedgerConfig(w_confirm=20)
    assert 0 < cfg.w_contribution < cfg.w_confirm
