"""Mobility, per-round communication graphs, and message delivery.

Nodes live in a bounded rectangular arena. Each round starts with a move
part, after which the directed communication graph is induced by radio
range: an edge (j, i) means i can hear j this round. Messages may be lost
independently; everything is driven by seeded random streams so runs
replay exactly.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import ConfigError, TopologyError, TraceError
from .protocol import NodeId, Value
from .trace import Message, Trace

Position = tuple[float, float]


@dataclass(frozen=True)
class Arena:
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"arena sides must be positive, got {self}")

    def contains(self, pos: Position) -> bool:
        return 0.0 <= pos[0] <= self.width and 0.0 <= pos[1] <= self.height

    def clamp(self, pos: Position) -> Position:
        return (
            min(max(pos[0], 0.0), self.width),
            min(max(pos[1], 0.0), self.height),
        )

    def random_point(self, rng: random.Random) -> Position:
        return (rng.uniform(0.0, self.width), rng.uniform(0.0, self.height))


@dataclass(frozen=True)
class RoundGraph:
    round: int
    edges: frozenset[tuple[NodeId, NodeId]]

    def in_neighbors(self, i: NodeId) -> set[NodeId]:
        return {j for j, k in self.edges if k == i}

    def out_neighbors(self, j: NodeId) -> set[NodeId]:
        return {k for s, k in self.edges if s == j}

    def has_edge(self, sender: NodeId, receiver: NodeId) -> bool:
        return (sender, receiver) in self.edges


@dataclass(frozen=True)
class JointGraph:
    window: tuple[int, int]
    edges: frozenset[tuple[NodeId, NodeId]]

    def in_neighbors(self, i: NodeId) -> set[NodeId]:
        return {j for j, k in self.edges if k == i}


class Stationary:
    """Nodes never move."""

    def step(self, r: int, positions: dict[NodeId, Position],
             rng: random.Random) -> dict[NodeId, Position]:
        return dict(positions)


class RandomWaypoint:
    """Classic waypoint roaming: pick a target, walk to it, pick another."""

    def __init__(self, arena: Arena, speed_min: float, speed_max: float):
        if not 0 < speed_min <= speed_max:
            raise ConfigError(
                f"need 0 < speed_min <= speed_max, got {speed_min}, {speed_max}"
            )
        self.arena = arena
        self.speed_min = speed_min
        self.speed_max = speed_max
        self._targets: dict[NodeId, tuple[Position, float]] = {}

    def step(self, r: int, positions: dict[NodeId, Position],
             rng: random.Random) -> dict[NodeId, Position]:
        new_positions = {}
        for i in sorted(positions):
            pos = positions[i]
            target, speed = self._targets.get(i, (None, 0.0))
            if target is None or _distance(pos, target) < 1e-12:
                target = self.arena.random_point(rng)
                speed = rng.uniform(self.speed_min, self.speed_max)
                self._targets[i] = (target, speed)
            dist = _distance(pos, target)
            if dist <= speed:
                new_positions[i] = target
                self._targets[i] = (None, 0.0)
            else:
                frac = speed / dist
                new_positions[i] = self.arena.clamp(
                    (pos[0] + (target[0] - pos[0]) * frac,
                     pos[1] + (target[1] - pos[1]) * frac)
                )
        return new_positions


class Scripted:
    """Replay per-node waypoint lists; a node holds its last waypoint.

    Nodes without a script stay where they are. Waypoints are teleports:
    the node occupies waypoint[r-1] during round r.
    """

    def __init__(self, arena: Arena, waypoints: dict[NodeId, list[Position]]):
        for i, path in waypoints.items():
            for pos in path:
                if not arena.contains(pos):
                    raise ConfigError(
                        f"scripted waypoint {pos} for node {i} outside arena"
                    )
        self.waypoints = {i: list(path) for i, path in waypoints.items()}

    def step(self, r: int, positions: dict[NodeId, Position],
             rng: random.Random) -> dict[NodeId, Position]:
        new_positions = dict(positions)
        for i, path in self.waypoints.items():
            if path:
                new_positions[i] = path[min(r - 1, len(path) - 1)]
        return new_positions


class TeleportRandom:
    """Jump to a fresh uniform position every round."""

    def __init__(self, arena: Arena):
        self.arena = arena

    def step(self, r: int, positions: dict[NodeId, Position],
             rng: random.Random) -> dict[NodeId, Position]:
        return {i: self.arena.random_point(rng) for i in sorted(positions)}


MobilityModel = Stationary | RandomWaypoint | Scripted | TeleportRandom


def _distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def move_step(
    positions: dict[NodeId, Position],
    model: MobilityModel,
    rng: random.Random,
    r: int = 1,
) -> dict[NodeId, Position]:
    """Advance every node through the move part of round r."""
    return model.step(r, positions, rng)


def build_round_graph(
    positions: dict[NodeId, Position], radius: float, r: int
) -> RoundGraph:
    """Disk connectivity: mutual edges between nodes within radio range."""
    if radius <= 0:
        raise ConfigError(f"radius must be > 0, got {radius}")
    edges = set()
    ids = sorted(positions)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            if _distance(positions[i], positions[j]) <= radius:
                edges.add((i, j))
                edges.add((j, i))
    return RoundGraph(round=r, edges=frozenset(edges))


def deliver(
    graph: RoundGraph,
    outbox: list[Message],
    loss_rate: float,
    rng: random.Random,
) -> dict[NodeId, list[Message]]:
    """Route messages, dropping each independently with probability loss_rate.

    Every message must match an edge of the round graph (faulty senders get
    no shortcut past topology) and each (sender, receiver) pair may carry at
    most one message per round. Draws happen in sorted message order so the
    loss pattern replays exactly.
    """
    if not 0.0 <= loss_rate <= 1.0:
        raise ConfigError(f"loss_rate must be in [0,1], got {loss_rate}")
    seen: set[tuple[NodeId, NodeId]] = set()
    inboxes: dict[NodeId, list[Message]] = {}
    for msg in sorted(outbox):
        sender, receiver, _value = msg
        if not graph.has_edge(sender, receiver):
            raise TopologyError(
                f"message {sender}->{receiver} has no edge in round {graph.round}"
            )
        if (sender, receiver) in seen:
            raise TopologyError(
                f"duplicate message {sender}->{receiver} in round {graph.round}"
            )
        seen.add((sender, receiver))
        if loss_rate > 0.0 and rng.random() < loss_rate:
            continue
        inboxes.setdefault(receiver, []).append(msg)
    return inboxes


def joint_graph(graphs: list[RoundGraph]) -> JointGraph:
    """Union of consecutive round graphs over a contiguous window."""
    if not graphs:
        raise TraceError("joint_graph needs at least one round graph")
    rounds = [g.round for g in graphs]
    if rounds != list(range(rounds[0], rounds[0] + len(rounds))):
        raise TraceError(f"joint_graph window is not contiguous: {rounds}")
    edges: set[tuple[NodeId, NodeId]] = set()
    for g in graphs:
        edges |= g.edges
    return JointGraph(window=(rounds[0], rounds[-1]), edges=frozenset(edges))


def joint_neighbor_set(trace: Trace, i: NodeId, r: int) -> set[NodeId]:
    """Senders node i actually heard since its latest retention-window start.

    Only delivered messages count: an edge over which every message was
    lost communicates nothing. The window runs from i's local new starting
    round in effect at round r through round r itself.
    """
    record = trace.record(r)
    if i not in record.local_start:
        raise TraceError(f"node {i} is not a correct node of this trace")
    start = record.local_start[i]
    senders: set[NodeId] = set()
    for rr in range(start, r + 1):
        for sender, receiver, _value in trace.record(rr).delivered:
            if receiver == i:
                senders.add(sender)
    senders.discard(i)
    return senders


def graphs_from_trace(trace: Trace, r_a: int, r_b: int) -> list[RoundGraph]:
    """Reconstruct the per-round graphs for a window of a trace."""
    return [
        RoundGraph(round=r, edges=frozenset(trace.record(r).edges))
        for r in range(r_a, r_b + 1)
    ]


def retained_values(trace: Trace, i: NodeId, r: int) -> dict[NodeId, Value]:
    """Live log content of node i at round r, rebuilt from raw deliveries.

    Most recent value per sender, delivered in i's current retention
    window. Equals the post-merge log the node itself acted on.
    """
    record = trace.record(r)
    start = record.local_start[i]
    latest: dict[NodeId, tuple[int, Value]] = {}
    for rr in range(start, r + 1):
        for sender, receiver, value in trace.record(rr).delivered:
            if receiver == i and math.isfinite(value):
                latest[sender] = (rr, value)
    return {sender: value for sender, (_, value) in latest.items()}
