"""Command-line front end: run scenarios, verify dumps, print oracle values.

Exit codes: 0 success, 1 verification failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .crypto import make_provider
from .errors import ConfigInvalid, DLedgerError, WConfirmExceedsN
from .ledger.core import AdmissionOutcome, LedgerConfig, LedgerState
from .names import EntityId
from .records import PayloadKind
from .sim import export
from .sim.harness import derive_seed, honest_app_validator, run_scenario
from .sim.oracles import oracle_confirmation, oracle_tailing_size
from .sim.scenario import load_scenario

log = logging.getLogger("dledger")


def _setup_logging() -> None:
    level = os.environ.get("DLEDGER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def cmd_run(args) -> int:
    if not os.path.exists(args.scenario):
        print("scenario file not found: %s" % args.scenario, file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(args.scenario)
    except (ConfigInvalid, DLedgerError) as exc:
        print("invalid scenario: %s" % exc, file=sys.stderr)
        return 2
    seed = scenario.seed if args.seed is None else args.seed
    out_dir = args.out_dir or "out/%s-seed%d" % (scenario.name, seed)
    log.info("running scenario %s seed %d", scenario.name, seed)
    result = run_scenario(scenario, seed=seed)
    os.makedirs(out_dir, exist_ok=True)
    formats = set(args.format or ["csv", "dot", "dump"])
    written = []
    if "csv" in formats:
        written.extend(export.write_metrics(result.metrics, out_dir))
    observer = result.honest_labels[0]
    if "dot" in formats:
        path = os.path.join(out_dir, "ledger-%s.dot" % observer)
        export.write_dot(result.ledger(observer), path)
        written.append(path)
    if "dump" in formats:
        path = os.path.join(out_dir, "ledger-%s.dump" % observer)
        export.write_dump(result.ledger(observer), path, seed=seed)
        written.append(path)
    m = result.metrics
    print("scenario=%s seed=%d" % (scenario.name, seed))
    print(
        "records_published=%d confirmed_at_origin=%d publish_failures=%d"
        % (len(m.publishes), len(m.confirmations), m.publish_failures)
    )
    t_vis = m.measured_t_vis()
    print("measured_t_vis=%.4f" % t_vis)
    lat = m.confirmation_latencies()
    if lat:
        print("mean_confirmation_latency=%.4f" % (sum(lat) / len(lat)))
    print("artifacts: %s" % ", ".join(sorted(set(written))))
    return 0


def cmd_verify(args) -> int:
    if not os.path.exists(args.dump):
        print("dump file not found: %s" % args.dump, file=sys.stderr)
        return 2
    try:
        header, records = export.read_dump(args.dump)
    except ValueError as exc:
        print("verification failed: %s" % exc)
        return 1
    try:
        seed = int(header.get("seed", "0"))
        config = LedgerConfig(
            n=int(header["n"]),
            w_confirm=int(header["w_confirm"]),
            w_contribution=int(header["w_contribution"]),
        )
        provider = make_provider(header["scheme"], derive_seed(seed, "keys"))
    except (KeyError, ValueError, ConfigInvalid) as exc:
        print("bad dump header: %s" % exc, file=sys.stderr)
        return 2
    _priv, mgr_pub = provider.keypair(EntityId("mgr"))
    ledger = LedgerState(
        config,
        provider,
        {EntityId("mgr"): mgr_pub},
        app_validator=honest_app_validator,
    )
    for i, record in enumerate(records):
        if record.payload.kind == PayloadKind.GENESIS or not record.approved:
            ledger.inject_genesis(record, now=0.0)
            continue
        # Replay is a bulk import, not a live tailing arrival, so the
        # contribution policy does not apply; everything else does.
        verdict = ledger.admit_record(record, is_tailing_arrival=False, now=0.0)
        if verdict.outcome is AdmissionOutcome.PENDING:
            print(
                "verification failed: record %d %s references missing records: %s"
                % (i, record.name.render(), ", ".join(sorted(n.render() for n in verdict.missing)))
            )
            return 1
        if verdict.outcome is AdmissionOutcome.REJECTED:
            print(
                "verification failed: record %d %s rejected: %s"
                % (i, record.name.render(), verdict.reason.name)
            )
            return 1
    print("valid: %d records replayed cleanly" % len(records))
    return 0


def cmd_oracle(args) -> int:
    try:
        approvals, bound = oracle_confirmation(args.entities, args.w, args.n, args.t)
        c_pred = oracle_tailing_size(args.n, args.rate, args.t)
    except (WConfirmExceedsN, ValueError) as exc:
        print("oracle error: %s" % exc, file=sys.stderr)
        return 2
    print("C_pred=%.6f" % c_pred)
    print("A_pred=%.6f" % approvals)
    print("t_confirm_bound=%.6f" % bound)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dledger", description="DAG-ledger simulator and verifier"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write artifacts")
    p_run.add_argument("scenario", help="path to a scenario file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument(
        "--format", action="append", choices=["csv", "dot", "dump"], default=None
    )
    p_run.set_defaults(fn=cmd_run)

    p_verify = sub.add_parser("verify", help="replay a ledger dump from genesis")
    p_verify.add_argument("dump", help="path to a ledger dump file")
    p_verify.set_defaults(fn=cmd_verify)

    p_oracle = sub.add_parser("oracle", help="print analytic predictions")
    p_oracle.add_argument("--entities", type=int, required=True)
    p_oracle.add_argument("--w", type=int, required=True)
    p_oracle.add_argument("--n", type=int, default=2)
    p_oracle.add_argument("--rate", type=float, required=True,
                          help="system-wide record generation rate (records/s)")
    p_oracle.add_argument("--t", type=float, required=True,
                          help="propagation delay to full visibility (s)")
    p_oracle.set_defaults(fn=cmd_oracle)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except DLedgerError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
