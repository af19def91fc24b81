"""Compare the compiled DAG weight store against its pure-Python twin.

Generates one random record workload, replays it into each available
backend, and reports wall time plus a cross-check that both produced the
same weights and confirmation sets.

Usage: python benchmarks/bench_core.py [--records 50000] [--entities 50]
"""

from __future__ import annotations

import argparse
import random
import time

from dledger.ledger.store import available_backends


def make_workload(n_records: int, n_entities: int, n_approve: int, seed: int):
    rng = random.Random(seed)
    work = []
    for i in range(n_records):
        gen = rng.randrange(n_entities)
        if i == 0:
            approved = ()
        else:
            k = min(n_approve, i)
            lo = max(0, i - 64)  # approve near the frontier, like real runs
            approved = tuple(sorted(rng.sample(range(lo, i), k)))
        work.append((gen, approved))
    return work


def run_backend(cls, work, w_confirm):
    store = cls(w_confirm, w_contribution=max(1, w_confirm // 4))
    t0 = time.perf_counter()
    for gen, approved in work:
        store.add_record(gen, approved)
    elapsed = time.perf_counter() - t0
    weights = [store.approvers_count(r) for r in range(len(work))]
    confirmed = [r for r in range(len(work)) if store.is_confirmed(r)]
    return elapsed, weights, confirmed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--records", type=int, default=50_000)
    parser.add_argument("--entities", type=int, default=50)
    parser.add_argument("--approvals", type=int, default=2)
    parser.add_argument("--w-confirm", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    work = make_workload(args.records, args.entities, args.approvals, args.seed)
    backends = available_backends()
    print(
        "workload: %d records, %d entities, n=%d, w_confirm=%d"
        % (args.records, args.entities, args.approvals, args.w_confirm)
    )
    results = {}
    for name in sorted(backends):
        elapsed, weights, confirmed = run_backend(backends[name], work, args.w_confirm)
        results[name] = (weights, confirmed)
        print(
            "%-8s %8.3f s  (%8.0f records/s, %d confirmed)"
            % (name, elapsed, args.records / elapsed, len(confirmed))
        )
    values = list(results.values())
    if len(values) == 2 and values[0] != values[1]:
        raise SystemExit("backend mismatch: weights or confirmation sets differ")
    if len(values) == 2:
        print("cross-check: backends agree on all weights and confirmations")
    else:
        print("cross-check skipped: only one backend available")


if __name__ == "__main__":
    main()
