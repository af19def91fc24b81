"""Scenario configuration: schema, validation, YAML loading, topologies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..errors import ConfigInvalid


@dataclass
class PartitionSpec:
    groups: list[list[int]]  # peer indices per side
    from_t: float
    to_t: float


@dataclass
class AdversarySpec:
    kind: str  # spammer | lazy | colluders | notif_forger
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str = "unnamed"
    seed: int = 0
    entities: int = 10
    duration: float = 100.0
    # publishing stops here so partitioned runs can drain and reconverge
    drain: Optional[float] = None
    lambda_e: float = 0.2
    n: int = 2
    w_confirm: int = 3
    w_contribution: Optional[int] = None
    contribution_grace: Optional[float] = None  # default scales with latency
    topology: str = "full_mesh"  # full_mesh | line | grid | explicit
    edges: list = field(default_factory=list)  # for explicit: [i, j, latency?]
    latency: float = 0.05
    loss_rate: float = 0.0
    partitions: list = field(default_factory=list)
    adversaries: list = field(default_factory=list)
    scheme: str = "hmac"
    genesis_records: int = 4
    sample_interval: float = 5.0
    sync_interval: float = 10.0
    unconfirmed_ttl: float = 1e9
    archive_depth: Optional[int] = None
    prune_interval: Optional[float] = None
    cs_capacity: int = 4096
    # Flood radius; default 1 on a full mesh (every peer is adjacent), else 32.
    hop_budget: Optional[int] = None

    def effective_hop_budget(self) -> int:
        if self.hop_budget is not None:
            return self.hop_budget
        return 1 if self.topology == "full_mesh" else 32

    def validate(self) -> "Scenario":
        if self.entities < self.n + 1:
            raise ConfigInvalid("need at least n+1 entities")
        if self.lambda_e <= 0 and self.drain != 0:
            raise ConfigInvalid("lambda_e must be positive")
        if self.duration <= 0:
            raise ConfigInvalid("duration must be positive")
        if self.n < 2:
            raise ConfigInvalid("n must be at least 2")
        if self.w_confirm < 1:
            raise ConfigInvalid("w_confirm must be at least 1")
        if self.w_confirm > self.entities:
            raise ConfigInvalid("w_confirm cannot exceed entity count")
        if self.latency <= 0:
            raise ConfigInvalid("latency must be positive")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ConfigInvalid("loss_rate must be in [0, 1)")
        if self.topology not in ("full_mesh", "line", "grid", "explicit"):
            raise ConfigInvalid("unknown topology %r" % self.topology)
        if self.topology == "explicit" and not self.edges:
            raise ConfigInvalid("explicit topology needs an edge list")
        if self.scheme not in ("hmac", "ecdsa"):
            raise ConfigInvalid("unknown signature scheme %r" % self.scheme)
        if self.genesis_records < self.n:
            raise ConfigInvalid("need at least n genesis records")
        if self.drain is not None and not 0 <= self.drain <= self.duration:
            raise ConfigInvalid("drain must lie within the run")
        for part in self.partitions:
            if not isinstance(part, PartitionSpec):
                raise ConfigInvalid("bad partition spec")
            for group in part.groups:
                for idx in group:
                    if not 0 <= idx < self.entities:
                        raise ConfigInvalid("partition peer index out of range")
        for adv in self.adversaries:
            if adv.kind not in ("spammer", "lazy", "colluders", "notif_forger"):
                raise ConfigInvalid("unknown adversary kind %r" % adv.kind)
        return self

    # -- topology ----------------------------------------------------------

    def peer_label(self, i: int) -> str:
        return "p%03d" % i

    def iter_edges(self):
        """Yield (i, j, latency) pairs over peer indices."""
        n = self.entities
        if self.topology == "full_mesh":
            for i in range(n):
                for j in range(i + 1, n):
                    yield i, j, self.latency
        elif self.topology == "line":
            for i in range(n - 1):
                yield i, i + 1, self.latency
        elif self.topology == "grid":
            cols = max(1, int(math.isqrt(n)))
            for i in range(n):
                r, c = divmod(i, cols)
                if c + 1 < cols and i + 1 < n:
                    yield i, i + 1, self.latency
                if i + cols < n:
                    yield i, i + cols, self.latency
        else:
            for edge in self.edges:
                i, j = int(edge[0]), int(edge[1])
                lat = float(edge[2]) if len(edge) > 2 else self.latency
                yield i, j, lat


_SCENARIO_FIELDS = {f for f in Scenario.__dataclass_fields__}


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigInvalid("scenario document must be a mapping")
    unknown = set(raw) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigInvalid("unknown scenario fields: %s" % ", ".join(sorted(unknown)))
    data = dict(raw)
    parts = []
    for p in data.get("partitions", []) or []:
        try:
            parts.append(
                PartitionSpec(
                    groups=[list(map(int, g)) for g in p["groups"]],
                    from_t=float(p["from"]),
                    to_t=float(p["to"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid("bad partition entry: %s" % exc) from exc
    data["partitions"] = parts
    advs = []
    for a in data.get("adversaries", []) or []:
        if isinstance(a, str):
            advs.append(AdversarySpec(kind=a))
        elif isinstance(a, dict):
            advs.append(
                AdversarySpec(kind=a.get("kind", ""), params=dict(a.get("params", {})))
            )
        else:
            raise ConfigInvalid("bad adversary entry %r" % (a,))
    data["adversaries"] = advs
    try:
        scenario = Scenario(**data)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc
    return scenario.validate()


def load_scenario(path: str) -> Scenario:
    with open(path, "r") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigInvalid("empty scenario file: %s" % path)
    return scenario_from_dict(raw)
