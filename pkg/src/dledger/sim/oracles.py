"""Analytic oracles for the steady-state behavior of the ledger.

These are independent of the simulation code paths: closed-form
predictions for tailing-set size and confirmation cost, a Mann-Kendall
trend test for stationarity checks, and a brute-force weight calculator
used to cross-check the incremental DAG store.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from ..errors import WConfirmExceedsN


def oracle_tailing_size(n: int, lam: float, t_vis: float) -> float:
    """Predicted steady-state tailing-record count.

    n approvals per record, lam total record-generation rate, t_vis the
    time for a new record to become visible system-wide.
    """
    if n < 2:
        raise ValueError("need n >= 2 for a stationary tailing set")
    return n * lam * t_vis / (n - 1)


def oracle_confirmation_approvals(n_entities: int, w_confirm: int) -> float:
    """Expected number of fresh approvals before a record reaches w_confirm.

    Coupon-collector style harmonic sum: a new approval bumps the weight
    of a record at weight y with probability (N - y) / N.
    """
    if w_confirm > n_entities:
        raise WConfirmExceedsN(
            "w_confirm=%d exceeds entity count %d" % (w_confirm, n_entities)
        )
    return n_entities * sum(1.0 / (n_entities - i) for i in range(w_confirm))


def oracle_confirmation_bound(
    n_entities: int, w_confirm: int, n: int, t_vis: float
) -> float:
    """Upper bound on mean confirmation time.

    Each tailing record waits about n*t_vis/(n-1) per approval, and needs
    oracle_confirmation_approvals() of them.
    """
    approvals = oracle_confirmation_approvals(n_entities, w_confirm)
    return approvals * n * t_vis / (n - 1)


def oracle_confirmation(
    n_entities: int, w_confirm: int, n: int, t_vis: float
) -> tuple[float, float]:
    """(expected approvals to confirm, upper bound on confirmation time)."""
    approvals = oracle_confirmation_approvals(n_entities, w_confirm)
    return approvals, approvals * n * t_vis / (n - 1)


# -- Mann-Kendall ------------------------------------------------------------


def mann_kendall(values: Sequence[float], alpha: float = 0.05,
                 max_points: int = 100) -> dict:
    """Two-sided Mann-Kendall trend test.

    Returns s, z, p and a 'trend' verdict at the given alpha.  Long series
    are subsampled evenly to max_points to blunt autocorrelation, which
    otherwise makes this test reject stationary-but-correlated series.
    """
    xs = list(values)
    if len(xs) > max_points:
        step = len(xs) / max_points
        xs = [xs[int(i * step)] for i in range(max_points)]
    m = len(xs)
    if m < 4:
        raise ValueError("too few samples for a trend test")
    s = 0
    for i in range(m - 1):
        xi = xs[i]
        for j in range(i + 1, m):
            d = xs[j] - xi
            s += (d > 0) - (d < 0)
    counts: dict[float, int] = {}
    for x in xs:
        counts[x] = counts.get(x, 0) + 1
    tie_term = sum(c * (c - 1) * (2 * c + 5) for c in counts.values() if c > 1)
    var_s = (m * (m - 1) * (2 * m + 5) - tie_term) / 18.0
    if var_s <= 0:
        return {"s": s, "z": 0.0, "p": 1.0, "trend": "none", "n": m}
    if s > 0:
        z = (s - 1) / math.sqrt(var_s)
    elif s < 0:
        z = (s + 1) / math.sqrt(var_s)
    else:
        z = 0.0
    p = math.erfc(abs(z) / math.sqrt(2.0))  # two-sided
    if p < alpha:
        trend = "increasing" if z > 0 else "decreasing"
    else:
        trend = "none"
    return {"s": s, "z": z, "p": p, "trend": trend, "n": m}


# -- brute-force weight ---------------------------------------------------------


def brute_force_weights(
    generators: Sequence[int],
    approved: Sequence[Sequence[int]],
    count_self_indirect: bool = False,
) -> list[int]:
    """Reverse-reachability distinct-entity count for every record.

    Record j approves records approved[j] (indices < j).  The weight of
    record i is the number of distinct entities, other than its own
    generator unless count_self_indirect, that generated some record from
    which i is reachable through approval edges.
    """
    n = len(generators)
    reach: list[set[int]] = [set() for _ in range(n)]
    for j in range(n):
        stack = list(approved[j])
        seen = set(stack)
        while stack:
            i = stack.pop()
            reach[i].add(j)
            for k in approved[i]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
    weights = []
    for i in range(n):
        ents = {generators[j] for j in reach[i]}
        if not count_self_indirect:
            ents.discard(generators[i])
        weights.append(len(ents))
    return weights


def find_bridges(ledger, side_of_entity, publish_time, from_t: float) -> list:
    """Records that approve pure branch tips from two different partition sides.

    A record is a pure branch-X record when it and every ancestor created
    after the split at from_t were generated by side-X entities.  A bridge
    directly approves a pure record of one side and a pure record of another.
    """
    records = ledger.records
    sides: dict = {}  # name -> set of sides in its post-split ancestry
    bridges = []
    for name in ledger.names_by_rid:
        stored = records.get(name)
        if stored is None:
            continue
        acc = set()
        parent_sides = []
        for parent in stored.record.approved:
            ps = sides.get(parent, frozenset())
            acc |= ps
            parent_sides.append(ps)
        own = side_of_entity.get(name.generator)
        t_pub = publish_time.get(name)
        if own is not None and t_pub is not None and t_pub >= from_t:
            acc.add(own)
        sides[name] = frozenset(acc)
        pure = {next(iter(ps)) for ps in parent_sides if len(ps) == 1}
        if len(pure) >= 2:
            bridges.append(name)
    return bridges


def unconfirmed_depth(ledger) -> int:
    """Longest approval chain made entirely of unconfirmed records."""
    store = ledger.store
    records = ledger.records
    depth: dict[int, int] = {}
    best = 0
    # names_by_rid is in admission order, so parents precede children.
    for name in ledger.names_by_rid:
        stored = records.get(name)
        if stored is None:
            continue
        rid = stored.rid
        if store.is_confirmed(rid):
            continue
        d = 1
        for parent in stored.record.approved:
            p = records.get(parent)
            if p is not None and p.rid in depth:
                d = max(d, depth[p.rid] + 1)
        depth[rid] = d
        if d > best:
            best = d
    return best
