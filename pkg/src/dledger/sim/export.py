"""Artifact writers: metrics CSV tables, DAG DOT files, replayable dumps.

All output is byte-stable for a fixed (scenario, seed): fixed column
orders, fixed float formatting, sorted keys.
"""

from __future__ import annotations

import os

from ..ledger.core import LedgerState
from ..records import Record, decode_record

DUMP_MAGIC = "#dledger-dump v1"


def _f(x: float) -> str:
    return "%.6f" % x


def samples_csv(metrics) -> str:
    out = ["t,peer,unconfirmed,tailing,records"]
    for t, peer, unconfirmed, tailing, records in metrics.samples:
        out.append("%s,%s,%d,%d,%d" % (_f(t), peer, unconfirmed, tailing, records))
    return "\n".join(out) + "\n"


def confirmations_csv(metrics) -> str:
    out = ["t_confirmed,peer,record,t_published,latency"]
    for t_c, peer, name, t_p in metrics.confirmations:
        out.append("%s,%s,%s,%s,%s" % (_f(t_c), peer, name, _f(t_p), _f(t_c - t_p)))
    return "\n".join(out) + "\n"


def links_csv(metrics) -> str:
    out = ["link,a,b,tx_interest,tx_data,dropped"]
    for row in metrics.link_rows:
        out.append("%d,%s,%s,%d,%d,%d" % row)
    return "\n".join(out) + "\n"


def rejections_csv(metrics) -> str:
    out = ["peer,reason,count"]
    for (peer, reason), count in sorted(metrics.rejections.items()):
        out.append("%s,%s,%d" % (peer, reason, count))
    return "\n".join(out) + "\n"


def security_csv(metrics) -> str:
    out = ["peer,event,count"]
    for (peer, kind), count in sorted(metrics.security.items()):
        out.append("%s,%s,%d" % (peer, kind, count))
    return "\n".join(out) + "\n"


_TABLES = {
    "samples.csv": samples_csv,
    "confirmations.csv": confirmations_csv,
    "links.csv": links_csv,
    "rejections.csv": rejections_csv,
    "security.csv": security_csv,
}


def metrics_bytes(metrics) -> bytes:
    """All tables concatenated; the unit of determinism comparisons."""
    parts = []
    for fname in sorted(_TABLES):
        parts.append(b"== %s ==\n" % fname.encode())
        parts.append(_TABLES[fname](metrics).encode())
    return b"".join(parts)


def write_metrics(metrics, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fname in sorted(_TABLES):
        path = os.path.join(out_dir, fname)
        with open(path, "w") as fh:
            fh.write(_TABLES[fname](metrics))
        written.append(path)
    return written


# -- ledger dumps ---------------------------------------------------------------


def dump_header(scheme: str, seed: int, config) -> str:
    return "%s scheme=%s seed=%d n=%d w_confirm=%d w_contribution=%d" % (
        DUMP_MAGIC,
        scheme,
        seed,
        config.n,
        config.w_confirm,
        config.w_contribution,
    )


def write_dump(ledger: LedgerState, path: str, seed: int = 0) -> None:
    lines = [dump_header(ledger.provider.scheme, seed, ledger.config)]
    lines.extend(ledger.dump_lines())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dump(path: str) -> tuple[dict, list[Record]]:
    """Parse a dump file into its header fields and decoded records.

    Record lines are decoded strictly; a corrupt line raises with the
    index of the offending record.
    """
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(DUMP_MAGIC):
        raise ValueError("not a ledger dump: missing header")
    header: dict[str, str] = {}
    for token in lines[0][len(DUMP_MAGIC):].split():
        if "=" in token:
            k, v = token.split("=", 1)
            header[k] = v
    records = []
    for i, line in enumerate(lines[1:]):
        try:
            records.append(decode_record(bytes.fromhex(line)))
        except Exception as exc:
            raise ValueError("record %d undecodable: %s" % (i, exc)) from exc
    return header, records


def write_dot(ledger: LedgerState, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(ledger.export_dot())
