"""Simulated content-centric network.

Named Interest/Data exchange with a stateful forwarding plane per node:
FIB (static shortest-path routes, rebuilt on every partition change), PIT
(reverse paths plus same-name Interest aggregation), content store (LRU),
and nonce-based duplicate suppression for the multicast flood under the
root prefix.  Fault injection: per-link latency, loss, and partition
schedules.

Everything runs inside one discrete-event scheduler; deliveries on a link
are batched per send to keep large floods cheap.
"""

from __future__ import annotations

import random
from collections import OrderedDict
from typing import Callable, Optional

from .errors import ScheduleConflict
from .sim.scheduler import Scheduler

Name = tuple[str, ...]

MULTICAST_PREFIX: Name = ("DLedger",)

APP = -1  # downstream marker for the local application

# Names under these components are disseminated by controlled flooding;
# everything else under /DLedger routes as unicast toward its generator.
MULTICAST_VERBS = ("NOTIF", "SYNC")


def is_multicast_name(name: Name) -> bool:
    return (
        len(name) >= 2 and name[0] == MULTICAST_PREFIX[0] and name[1] in MULTICAST_VERBS
    )


def parse_name(text: str) -> Name:
    parts = text.split("/")
    if parts and parts[0] == "":
        parts = parts[1:]
    return tuple(parts)


def render_name(name: Name) -> str:
    return "/" + "/".join(name)


class Interest:
    __slots__ = ("name", "parameter", "nonce", "hop_budget")

    def __init__(self, name: Name, parameter: Optional[bytes], nonce: int, hop_budget: int = 32):
        self.name = name
        self.parameter = parameter
        self.nonce = nonce
        self.hop_budget = hop_budget

    def forwarded(self) -> "Interest":
        return Interest(self.name, self.parameter, self.nonce, self.hop_budget - 1)


class DataPacket:
    __slots__ = ("name", "content", "signature")

    def __init__(self, name: Name, content: bytes, signature: bytes = b""):
        self.name = name
        self.content = content
        self.signature = signature


class Link:
    __slots__ = ("id", "a", "b", "latency", "loss_rate", "up",
                 "tx_interest", "tx_data", "dropped")

    def __init__(self, link_id: int, a: "NetNode", b: "NetNode",
                 latency: float, loss_rate: float = 0.0):
        self.id = link_id
        self.a = a
        self.b = b
        self.latency = latency
        self.loss_rate = loss_rate
        self.up = True
        self.tx_interest = 0
        self.tx_data = 0
        self.dropped = 0

    def other(self, node: "NetNode") -> "NetNode":
        return self.b if node is self.a else self.a


class _PitEntry:
    __slots__ = ("downstreams", "expiry")

    def __init__(self, expiry: float):
        self.downstreams: set[int] = set()
        self.expiry = expiry


class NetNode:
    def __init__(self, node_id: str, network: "Network", cs_capacity: int):
        self.id = node_id
        self.network = network
        self.links: dict[int, Link] = {}
        self.fib: dict[Name, tuple[int, ...]] = {}
        self.pit: dict[Name, _PitEntry] = {}
        self.seen_nonces: dict[int, float] = {}
        self.cs: OrderedDict[Name, DataPacket] = OrderedDict()
        self.cs_capacity = cs_capacity
        self.registered_prefixes: set[Name] = set()
        # app hooks: interest handler returns Data content bytes or None
        self.on_app_interest: Optional[Callable[[Interest], Optional[bytes]]] = None
        self.on_app_data: Optional[Callable[[DataPacket], None]] = None

    # -- helpers ---------------------------------------------------------

    def _app_match(self, name: Name) -> Optional[Name]:
        best = None
        for prefix in self.registered_prefixes:
            if name[: len(prefix)] == prefix:
                if best is None or len(prefix) > len(best):
                    best = prefix
        return best

    def _cs_insert(self, data: DataPacket) -> None:
        cs = self.cs
        if data.name in cs:
            cs.move_to_end(data.name)
            return
        cs[data.name] = data
        if len(cs) > self.cs_capacity:
            cs.popitem(last=False)

    def _send_downstream(self, data: DataPacket, downstream: int) -> None:
        if downstream == APP:
            if self.on_app_data is not None:
                self.on_app_data(data)
        else:
            link = self.links.get(downstream)
            if link is not None:
                self.network.transmit_data(self, link, data)

    # -- interest plane -----------------------------------------------------

    def receive_interest(self, interest: Interest, from_link: Optional[int]) -> None:
        net = self.network
        now = net.sched.now
        if interest.nonce in self.seen_nonces:
            net.meter("interest_dup_dropped")
            net.trace_event(self.id, "int-dup", interest.name)
            return
        self.seen_nonces[interest.nonce] = now + net.pit_lifetime

        name = interest.name
        downstream = APP if from_link is None else from_link
        net.trace_event(self.id, "int-recv", name)

        cached = self.cs.get(name)
        if cached is not None:
            self.cs.move_to_end(name)
            net.meter("cs_hit")
            net.trace_event(self.id, "cs-hit", name)
            self._send_downstream(cached, downstream)
            return

        app_prefix = self._app_match(name)
        if app_prefix is not None and self.on_app_interest is not None:
            content = self.on_app_interest(interest)
            if content is not None:
                data = DataPacket(name, content)
                net.meter("producer_hit")
                net.trace_event(self.id, "produce", name)
                self._send_downstream(data, downstream)
                return
            if len(app_prefix) >= 2:
                # We are the named unicast target and have nothing to serve.
                net.trace_event(self.id, "int-unsatisfied", name)
                return

        entry = self.pit.get(name)
        if entry is not None and entry.expiry > now:
            if downstream not in entry.downstreams:
                entry.downstreams.add(downstream)
                net.meter("interest_aggregated")
                net.trace_event(self.id, "int-agg", name)
                return
            # Same downstream again: a retransmission.  Refresh and forward.
            entry.expiry = now + net.pit_lifetime
            if interest.hop_budget <= 0:
                net.meter("hop_budget_exhausted")
                return
        else:
            if interest.hop_budget <= 0:
                net.meter("hop_budget_exhausted")
                return
            entry = _PitEntry(now + net.pit_lifetime)
            entry.downstreams.add(downstream)
            self.pit[name] = entry

        if is_multicast_name(name):
            net.flood(self, interest.forwarded(), exclude=from_link)
            return
        match = self._fib_match(name)
        out = self.fib.get(match, ()) if match is not None else ()
        for link_id in out:
            if link_id == from_link:
                continue
            link = self.links.get(link_id)
            if link is not None:
                net.transmit_interest(self, link, interest.forwarded())
                return
        net.meter("no_route")
        net.trace_event(self.id, "no-route", name)

    def _fib_match(self, name: Name) -> Optional[Name]:
        fib = self.fib
        for ln in range(len(name), 0, -1):
            prefix = name[:ln]
            if prefix in fib:
                return prefix
        return None

    # -- data plane ----------------------------------------------------------

    def receive_data(self, data: DataPacket, from_link: Optional[int]) -> None:
        net = self.network
        entry = self.pit.pop(data.name, None)
        if entry is None:
            net.meter("data_unsolicited")
            return
        net.trace_event(self.id, "data-recv", data.name)
        self._cs_insert(data)
        for downstream in sorted(entry.downstreams):
            if downstream == from_link:
                continue
            self._send_downstream(data, downstream)

    def sweep(self, now: float) -> None:
        """Drop expired PIT entries and stale nonce bookkeeping."""
        self.pit = {k: v for k, v in self.pit.items() if v.expiry > now}
        self.seen_nonces = {k: v for k, v in self.seen_nonces.items() if v > now}


class Network:
    def __init__(
        self,
        sched: Scheduler,
        seed: int = 0,
        pit_lifetime: float = 4.0,
        cs_capacity: int = 1024,
        default_hop_budget: int = 32,
        trace: bool = False,
    ):
        self.sched = sched
        self.pit_lifetime = pit_lifetime
        self.cs_capacity = cs_capacity
        self.default_hop_budget = default_hop_budget
        self.nodes: dict[str, NetNode] = {}
        self.links: list[Link] = []
        self.counters: dict[str, int] = {}
        self._nonce_rng = random.Random((seed << 1) ^ 0x5DEECE66D)
        self._loss_rng = random.Random((seed << 1) ^ 0x2545F4914F6CDD1D)
        self.trace = trace
        self.trace_log: list[tuple[float, str, str, str]] = []
        self._partitions: list[tuple[float, float]] = []
        self.on_links_restored: list[Callable[[list[Link]], None]] = []
        self._sweep_timer_started = False

    # -- topology ----------------------------------------------------------

    def add_node(self, node_id: str) -> NetNode:
        node = NetNode(node_id, self, self.cs_capacity)
        self.nodes[node_id] = node
        return node

    def add_link(self, a: str, b: str, latency: float, loss_rate: float = 0.0) -> Link:
        link = Link(len(self.links), self.nodes[a], self.nodes[b], latency, loss_rate)
        self.links.append(link)
        link.a.links[link.id] = link
        link.b.links[link.id] = link
        return link

    def register_prefix(self, node_id: str, prefix: Name) -> None:
        self.nodes[node_id].registered_prefixes.add(prefix)

    def build_fib(self) -> None:
        """Static shortest-path routes toward every registered unicast prefix."""
        for node in self.nodes.values():
            node.fib = {}
        order = sorted(self.nodes)
        for dest_id in order:
            dest = self.nodes[dest_id]
            prefixes = [p for p in dest.registered_prefixes if p != MULTICAST_PREFIX]
            if not prefixes:
                continue
            # BFS from the destination over up links; deterministic tie-break.
            parent_link: dict[str, int] = {dest_id: -1}
            frontier = [dest_id]
            while frontier:
                nxt = []
                for nid in frontier:
                    node = self.nodes[nid]
                    for link_id in sorted(node.links):
                        link = node.links[link_id]
                        if not link.up:
                            continue
                        other = link.other(node)
                        if other.id not in parent_link:
                            parent_link[other.id] = link_id
                            nxt.append(other.id)
                frontier = sorted(nxt)
            for nid, link_id in parent_link.items():
                if link_id < 0:
                    continue
                node = self.nodes[nid]
                for prefix in prefixes:
                    node.fib[prefix] = (link_id,)

    def start(self) -> None:
        self.build_fib()
        if not self._sweep_timer_started:
            self._sweep_timer_started = True
            self.sched.call_later(self.pit_lifetime, self._sweep)

    def _sweep(self) -> None:
        now = self.sched.now
        for node_id in sorted(self.nodes):
            self.nodes[node_id].sweep(now)
        self.sched.call_later(self.pit_lifetime, self._sweep)

    # -- metering / tracing ---------------------------------------------------

    def meter(self, key: str, inc: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + inc

    def trace_event(self, node: str, event: str, name: Name) -> None:
        if self.trace:
            self.trace_log.append((self.sched.now, node, event, render_name(name)))

    # -- packet injection -------------------------------------------------------

    def new_nonce(self) -> int:
        return self._nonce_rng.getrandbits(64)

    def make_interest(self, name: Name, parameter: Optional[bytes] = None) -> Interest:
        return Interest(name, parameter, self.new_nonce(), self.default_hop_budget)

    def express_interest(self, node_id: str, interest: Interest) -> None:
        """Application-originated Interest.

        Dispatched through the scheduler (at the current instant) so a local
        content-store hit cannot re-enter the application synchronously;
        otherwise fetching a long ancestor chain out of warm caches recurses
        once per ancestor and overflows the stack.
        """
        self.trace_event(node_id, "int-express", interest.name)
        self.sched.call_later(0.0, self.nodes[node_id].receive_interest, interest, None)

    # -- transmission --------------------------------------------------------------

    def _link_delivers(self, link: Link) -> bool:
        if not link.up:
            link.dropped += 1
            self.meter("link_down_drop")
            return False
        if link.loss_rate > 0.0 and self._loss_rng.random() < link.loss_rate:
            link.dropped += 1
            self.meter("loss_drop")
            return False
        return True

    def transmit_interest(self, sender: NetNode, link: Link, interest: Interest) -> None:
        if not self._link_delivers(link):
            return
        link.tx_interest += 1
        self.meter("tx_interest")
        dest = link.other(sender)
        self.sched.call_later(link.latency, dest.receive_interest, interest, link.id)

    def transmit_data(self, sender: NetNode, link: Link, data: DataPacket) -> None:
        if not self._link_delivers(link):
            return
        link.tx_data += 1
        self.meter("tx_data")
        dest = link.other(sender)
        self.sched.call_later(link.latency, dest.receive_data, data, link.id)

    def flood(self, sender: NetNode, interest: Interest, exclude: Optional[int]) -> None:
        """Send on every up link except the arrival one, batched per latency."""
        groups: dict[float, list[tuple[NetNode, int]]] = {}
        n_sent = 0
        for link_id in sorted(sender.links):
            if link_id == exclude:
                continue
            link = sender.links[link_id]
            if not self._link_delivers(link):
                continue
            link.tx_interest += 1
            n_sent += 1
            groups.setdefault(link.latency, []).append((link.other(sender), link_id))
        if n_sent:
            self.meter("tx_interest", n_sent)
        for latency in sorted(groups):
            self.sched.call_later(latency, self._deliver_flood, interest, groups[latency])

    def _deliver_flood(self, interest: Interest, targets: list) -> None:
        for dest, link_id in targets:
            dest.receive_interest(interest, link_id)

    # -- partitions ------------------------------------------------------------------

    def set_partition(self, groups: list[set[str]], from_t: float, to_t: float) -> None:
        if from_t >= to_t:
            raise ScheduleConflict("empty partition window")
        for (a, b) in self._partitions:
            if from_t < b and a < to_t:
                raise ScheduleConflict("overlapping partition schedules")
        self._partitions.append((from_t, to_t))
        group_of = {}
        for i, group in enumerate(groups):
            for node_id in group:
                group_of[node_id] = i
        crossing = [
            link
            for link in self.links
            if group_of.get(link.a.id, -1) != group_of.get(link.b.id, -2)
        ]
        if not crossing:
            return
        self.sched.call_at(from_t, self._links_down, crossing)
        self.sched.call_at(to_t, self._links_up, crossing)

    def _links_down(self, links: list[Link]) -> None:
        for link in links:
            link.up = False
        self.build_fib()

    def _links_up(self, links: list[Link]) -> None:
        for link in links:
            link.up = True
        self.build_fib()
        for callback in self.on_links_restored:
            callback(links)
