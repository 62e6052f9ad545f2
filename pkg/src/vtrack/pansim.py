"""Deterministic discrete-event model of a 2.4 GHz personal-area network.

Radio model: a hard disc of ``max_range_m`` around every node, an
independent Bernoulli loss per hop, and per-node serial transmission
with a bounded FIFO. All randomness comes from one seeded generator, so
a seed plus a call sequence fixes every outcome.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import CapacityError, NoRouteError, RangeError, UsageError

MAX_NODES = 255
CHANNELS = range(11, 27)
QUEUE_LIMIT = 64
DEFAULT_RATE_BPS = 250_000
DEFAULT_RANGE_M = 1500.0

TOPOLOGIES = ("star", "mesh", "tree")
ROLES = ("coordinator", "router", "end-device")

OUT_OF_RANGE = "out-of-range"
LOSS = "loss"
NO_ROUTE = "no-route"
OVERFLOW = "airtime-queue-overflow"


@dataclass(frozen=True)
class PanConfig:
    pan_id: int = 0x3332
    channel: int = 11
    topology: str = "star"
    data_rate_bps: int = DEFAULT_RATE_BPS
    seed: int = 0

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise RangeError(f"channel {self.channel} not in 11..26")
        if self.topology not in TOPOLOGIES:
            raise UsageError(f"unknown topology {self.topology!r}")
        if not 0 <= self.pan_id <= 0xFFFF:
            raise RangeError("pan_id must be 16 bits")
        if self.data_rate_bps <= 0:
            raise RangeError("data rate must be positive")


@dataclass(frozen=True)
class ChannelModel:
    max_range_m: float = DEFAULT_RANGE_M
    per_hop_loss_prob: float = 0.0
    prop_delay_s_per_hop: float = 0.0

    def __post_init__(self):
        if self.max_range_m <= 0:
            raise RangeError("range must be positive")
        if not 0.0 <= self.per_hop_loss_prob <= 1.0:
            raise RangeError("loss probability must be in [0, 1]")
        if self.prop_delay_s_per_hop < 0:
            raise RangeError("propagation delay must be non-negative")


@dataclass
class NodeSim:
    id: int
    pos: Tuple[float, float] = (0.0, 0.0)
    role: str = "router"
    parent: Optional[int] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise UsageError(f"unknown role {self.role!r}")
        if not 0 <= self.id <= 0xFFFFFFFFFFFFFFFF:
            raise RangeError("node id must be a 64-bit value")


@dataclass(frozen=True)
class Outage:
    """Loss override on hops touching ``node`` (or the pair ``node``-``peer``)."""

    start_s: float
    end_s: float
    loss_prob: float = 1.0
    node: Optional[int] = None
    peer: Optional[int] = None

    def covers(self, t: float, a: int, b: int) -> bool:
        if not self.start_s <= t < self.end_s:
            return False
        if self.node is None:
            return True
        if self.peer is None:
            return self.node in (a, b)
        return {a, b} == {self.node, self.peer}


@dataclass(frozen=True)
class DeliveryResult:
    delivered: bool
    arrival_time_s: float
    hops: Tuple[int, ...]
    drop_reason: Optional[str] = None
    src: int = 0
    dst: int = 0
    data: bytes = field(default=b"", repr=False)
    frame_no: int = 0


def airtime_s(frame_bytes: int, data_rate_bps: int = DEFAULT_RATE_BPS) -> float:
    """Channel occupancy of one frame on one hop."""
    if frame_bytes <= 0:
        raise RangeError("frame must have at least one byte")
    return frame_bytes * 8 / data_rate_bps


class PanNetwork:
    """Registered nodes, routing, the virtual clock and in-flight frames."""

    def __init__(self, cfg: PanConfig = PanConfig(), channel: ChannelModel = ChannelModel()):
        self.cfg = cfg
        self.channel = channel
        self.nodes: Dict[int, NodeSim] = {}
        self.coordinator: Optional[int] = None
        self.outages: List[Outage] = []
        self.clock = 0.0
        self.rng = random.Random(cfg.seed)
        self._busy_until: Dict[int, float] = {}
        self._backlog: Dict[int, deque] = {}
        self._in_flight: list = []
        self._frame_no = 0
        self.stats = Counter()
        self.tx_log: List[DeliveryResult] = []
        self.bits_sent: Dict[int, List[Tuple[float, float, int]]] = {}

    # -- membership --------------------------------------------------------

    def add_node(self, node: NodeSim) -> "PanNetwork":
        if node.id in self.nodes:
            raise UsageError(f"node {node.id:016x} already registered")
        if len(self.nodes) >= MAX_NODES:
            raise CapacityError(f"a PAN holds at most {MAX_NODES} nodes")
        if node.role == "coordinator":
            if self.coordinator is not None:
                raise UsageError("a PAN has exactly one coordinator")
            if node.parent is not None:
                raise UsageError("the coordinator has no parent")
        if self.cfg.topology == "tree" and node.role != "coordinator":
            parent = self.nodes.get(node.parent)
            if parent is None:
                raise UsageError("tree nodes need a registered parent")
            if parent.role == "end-device":
                raise UsageError("end-devices cannot be parents")
        self.nodes[node.id] = node
        if node.role == "coordinator":
            self.coordinator = node.id
        return self

    def set_position(self, node_id: int, pos: Tuple[float, float]):
        self.nodes[node_id].pos = (float(pos[0]), float(pos[1]))

    def add_outage(self, outage: Outage):
        self.outages.append(outage)

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.nodes[a].pos, self.nodes[b].pos
        return math.hypot(xa - xb, ya - yb)

    def in_range(self, a: int, b: int) -> bool:
        return self.distance(a, b) <= self.channel.max_range_m

    # -- routing -----------------------------------------------------------

    def route(self, src: int, dst: int) -> List[int]:
        """Hop list from ``src`` to ``dst`` for the configured topology.

        Star and tree paths are fixed by the topology and are not range
        checked here; mesh paths are the fewest-hop chain of in-range
        links through non-end-device relays, ties going to the smallest
        next-hop address.
        """
        for n in (src, dst):
            if n not in self.nodes:
                raise UsageError(f"node {n:016x} is not registered")
        if src == dst:
            return [src]
        topo = self.cfg.topology
        if topo == "star":
            c = self.coordinator
            if c is None:
                raise NoRouteError("star network without a coordinator")
            return [src, dst] if c in (src, dst) else [src, c, dst]
        if topo == "tree":
            return self._tree_route(src, dst)
        return self._mesh_route(src, dst)

    def _ancestors(self, n: int) -> List[int]:
        chain = [n]
        while self.nodes[chain[-1]].parent is not None:
            chain.append(self.nodes[chain[-1]].parent)
        return chain

    def _tree_route(self, src: int, dst: int) -> List[int]:
        up, down = self._ancestors(src), self._ancestors(dst)
        common = next((n for n in up if n in set(down)), None)
        if common is None:
            raise NoRouteError("nodes are in disjoint trees")
        return up[:up.index(common) + 1] + list(reversed(down[:down.index(common)]))

    def _mesh_route(self, src: int, dst: int) -> List[int]:
        ids = sorted(self.nodes)
        # Hop distance to dst, expanding only through nodes allowed to relay.
        dist = {dst: 0}
        frontier = deque([dst])
        while frontier:
            u = frontier.popleft()
            if u != dst and self.nodes[u].role == "end-device":
                continue
            for w in ids:
                if w not in dist and self.in_range(u, w):
                    dist[w] = dist[u] + 1
                    frontier.append(w)
        if src not in dist:
            raise NoRouteError(f"no path {src:016x} -> {dst:016x}")
        path = [src]
        while path[-1] != dst:
            u = path[-1]
            want = dist[u] - 1
            path.append(next(w for w in ids if dist.get(w) == want and self.in_range(u, w)
                             and (w == dst or self.nodes[w].role != "end-device")))
        return path

    # -- transmission ------------------------------------------------------

    def airtime_s(self, frame_bytes: int) -> float:
        return airtime_s(frame_bytes, self.cfg.data_rate_bps)

    def backlog(self, node_id: int, now: float) -> int:
        q = self._backlog.get(node_id)
        if not q:
            return 0
        while q and q[0] <= now:
            q.popleft()
        return len(q)

    def _loss_prob(self, t: float, a: int, b: int) -> float:
        p = self.channel.per_hop_loss_prob
        for o in self.outages:
            if o.covers(t, a, b):
                p = o.loss_prob
        return p

    def transmit(self, src: int, dst: int, data: bytes, now: Optional[float] = None,
                 enqueue: bool = True) -> DeliveryResult:
        """Send ``data`` from ``src`` to ``dst``; failures come back as drop reasons.

        The frame's fate is settled immediately, but a delivered frame is
        only released by :meth:`advance` once the clock reaches its
        arrival time. ``enqueue=False`` settles the fate without queueing
        the delivery (used for link probes).
        """
        if src not in self.nodes:
            raise UsageError(f"node {src:016x} is not registered")
        now = self.clock if now is None else now
        self._frame_no += 1
        self.stats["transmitted"] += 1

        def drop(reason, t, hops=()):
            self.stats["dropped"] += 1
            self.stats[reason] += 1
            r = DeliveryResult(False, t, tuple(hops), reason, src, dst, bytes(data), self._frame_no)
            self.tx_log.append(r)
            return r

        if dst not in self.nodes:
            return drop(NO_ROUTE, now)
        try:
            path = self.route(src, dst)
        except NoRouteError:
            return drop(NO_ROUTE, now)
        if any(not self.in_range(a, b) for a, b in zip(path, path[1:])):
            return drop(OUT_OF_RANGE, now)

        air = self.airtime_s(len(data))
        t = now
        for i, (a, b) in enumerate(zip(path, path[1:])):
            if self.backlog(a, t) >= QUEUE_LIMIT:
                return drop(OVERFLOW, t, path[:i + 1])
            start = max(t, self._busy_until.get(a, 0.0))
            end = start + air
            self._busy_until[a] = end
            self._backlog.setdefault(a, deque()).append(end)
            self.bits_sent.setdefault(a, []).append((start, end, len(data) * 8))
            if self.rng.random() < self._loss_prob(start, a, b):
                return drop(LOSS, end, path[:i + 1])
            t = end + self.channel.prop_delay_s_per_hop
        self.stats["delivered"] += 1
        r = DeliveryResult(True, t, tuple(path), None, src, dst, bytes(data), self._frame_no)
        self.tx_log.append(r)
        if enqueue:
            heapq.heappush(self._in_flight, (t, self._frame_no, r))
        return r

    def advance(self, dt: float) -> List[DeliveryResult]:
        """Move the clock forward and release every frame that has arrived."""
        if dt < 0:
            raise UsageError("cannot advance by a negative interval")
        return self.advance_to(self.clock + dt)

    def advance_to(self, t: float) -> List[DeliveryResult]:
        if t < self.clock:
            raise UsageError("the virtual clock cannot run backwards")
        self.clock = t
        due = []
        while self._in_flight and self._in_flight[0][0] <= t:
            due.append(heapq.heappop(self._in_flight)[2])
        return due

    @property
    def in_flight(self) -> int:
        return len(self._in_flight)
