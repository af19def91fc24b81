"""Backend selection for the DAG weight store.

The compiled extension is used when importable; set DLEDGER_PURE=1 to force
the pure-Python twin.  `benchmarks/bench_core.py` compares the two.
"""

from __future__ import annotations

import os

from ._store_py import DagStorePy

try:
    from ._store_cy import DagStoreCy
except ImportError:  # extension not built
    DagStoreCy = None

if DagStoreCy is not None and os.environ.get("DLEDGER_PURE", "") != "1":
    DagStore = DagStoreCy
else:
    DagStore = DagStorePy


def available_backends() -> dict[str, type]:
    backends = {"python": DagStorePy}
    if DagStoreCy is not None:
        backends["cython"] = DagStoreCy
    return backends


def make_store(
    w_confirm: int,
    count_self_indirect: bool = False,
    backend: str | None = None,
    w_contribution: int = 0,
):
    cls = DagStore if backend is None else available_backends()[backend]
    return cls(w_confirm, count_self_indirect, w_contribution=w_contribution)
