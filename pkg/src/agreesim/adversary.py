"""Pluggable faulty-node behavior.

A strategy decides, per round and per faulty node, what value (if any) to
send to each reachable neighbor. Different receivers may get different
values in the same round; the delivery layer never deduplicates across
receivers. Strategies see the whole history of the run so far (an
omniscient adversary) but not future random draws, and their messages pass
through the same topology gate as everyone else's.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .dynamics import Position, RoundGraph
from .errors import ConfigError
from .protocol import NodeId, Value
from .trace import Message, Trace


@dataclass
class RoundView:
    """Read-only snapshot a strategy may consult when choosing values."""

    round: int
    values_now: dict[NodeId, Value]
    phase_start_values: dict[NodeId, Value]
    positions: dict[NodeId, Position]
    trace_so_far: Trace


class Silent:
    """Send nothing, ever."""

    def messages(self, b: NodeId, receivers: list[NodeId], view: RoundView,
                 rng: random.Random) -> list[tuple[NodeId, Value]]:
        return []


class FixedValue:
    """Send the same constant to every neighbor every round."""

    def __init__(self, value: Value):
        self.value = value

    def messages(self, b: NodeId, receivers: list[NodeId], view: RoundView,
                 rng: random.Random) -> list[tuple[NodeId, Value]]:
        return [(r, self.value) for r in receivers]


class ExtremeSplit:
    """Pull the extremes apart: high fakes to high nodes, low fakes to low.

    Receivers are split by their value at the current phase start relative
    to the midpoint of the correct range, so nodes holding (or near) the
    maximum hear ``v_hi`` while nodes holding (or near) the minimum hear
    ``v_lo``. Faulty receivers are skipped.
    """

    def __init__(self, v_hi: Value, v_lo: Value):
        self.v_hi = v_hi
        self.v_lo = v_lo

    def messages(self, b: NodeId, receivers: list[NodeId], view: RoundView,
                 rng: random.Random) -> list[tuple[NodeId, Value]]:
        base = view.phase_start_values
        if not base:
            return []
        midpoint = (min(base.values()) + max(base.values())) / 2.0
        out = []
        for r in receivers:
            if r not in base:
                continue
            out.append((r, self.v_hi if base[r] >= midpoint else self.v_lo))
        return out


class RandomLegal:
    """Independent uniform draws from a range, one per receiver per round."""

    def __init__(self, lo: Value, hi: Value):
        if lo > hi:
            raise ConfigError(f"random range reversed: [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    def messages(self, b: NodeId, receivers: list[NodeId], view: RoundView,
                 rng: random.Random) -> list[tuple[NodeId, Value]]:
        return [(r, rng.uniform(self.lo, self.hi)) for r in receivers]


class ScriptedTable:
    """Send values from an explicit {round: {receiver: value}} table.

    The key ``"*"`` provides a default row used for rounds without their
    own entry. Receivers absent from the applicable row get nothing.
    """

    def __init__(self, table: dict[int | str, dict[NodeId, Value]]):
        self.table = {k: dict(v) for k, v in table.items()}

    def messages(self, b: NodeId, receivers: list[NodeId], view: RoundView,
                 rng: random.Random) -> list[tuple[NodeId, Value]]:
        row = self.table.get(view.round, self.table.get("*"))
        if row is None:
            return []
        return [(r, row[r]) for r in receivers if r in row]


Strategy = Silent | FixedValue | ExtremeSplit | RandomLegal | ScriptedTable


@dataclass
class AdversaryStrategy:
    """A behavior plus the set of node ids it controls."""

    behavior: Strategy = field(default_factory=Silent)
    byz_set: set[NodeId] = field(default_factory=set)

    def validate(self, n: int, f: int) -> None:
        if len(self.byz_set) > f:
            raise ConfigError(
                f"{len(self.byz_set)} faulty nodes exceed the bound f={f}"
            )
        bad = [i for i in self.byz_set if not 0 <= i < n]
        if bad:
            raise ConfigError(f"faulty ids {bad} outside 0..{n - 1}")


def byzantine_outbox(
    strategy: AdversaryStrategy,
    b: NodeId,
    graph: RoundGraph,
    r: int,
    view: RoundView,
    rng: random.Random,
) -> list[Message]:
    """Messages node b emits this round: at most one per reachable receiver."""
    if b not in strategy.byz_set:
        raise ConfigError(f"node {b} is not controlled by the adversary")
    receivers = sorted(graph.out_neighbors(b))
    picked = strategy.behavior.messages(b, receivers, view, rng)
    out: list[Message] = []
    seen: set[NodeId] = set()
    for receiver, value in picked:
        if receiver == b or receiver in seen:
            continue
        seen.add(receiver)
        out.append((b, receiver, float(value)))
    return out
