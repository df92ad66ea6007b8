"""Per-node state machine for iterative approximate agreement.

Each correct node repeatedly broadcasts its value, logs values heard from
neighbors (most recent per sender), and, once it has heard enough values on
one side of its own, trims the extremes and averages the survivors. The log
survives across rounds for up to ``r_c`` rounds so that a moving node can
accumulate values from neighborhoods it visits, and is cleared whenever a
new value is computed or the retention window expires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ProtocolError

NodeId = int
Value = float


@dataclass(frozen=True)
class ProtocolParams:
    """Static parameters shared by every node in a run.

    ``f`` bounds the number of faulty nodes, ``r_c`` is the log retention
    window in rounds, ``epsilon`` the agreement precision used by the
    offline checkers (the node logic itself never reads it).
    """

    n: int
    f: int
    r_c: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ProtocolError(f"n must be >= 1, got {self.n}")
        if self.f < 0:
            raise ProtocolError(f"f must be >= 0, got {self.f}")
        if self.r_c < 1:
            raise ProtocolError(f"r_c must be >= 1, got {self.r_c}")
        if not self.epsilon > 0:
            raise ProtocolError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def meets_cardinality_bound(self) -> bool:
        """True when n >= 3f+1, the population needed to out-vote the fakes."""
        return self.n >= 3 * self.f + 1


@dataclass(frozen=True)
class LogEntry:
    sender: NodeId
    value: Value
    recv_round: int


class ValueLog:
    """Retained values, at most one entry per sender (most recent wins)."""

    __slots__ = ("_entries",)

    def __init__(self, entries: dict[NodeId, LogEntry] | None = None):
        self._entries: dict[NodeId, LogEntry] = dict(entries or {})

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, sender: NodeId) -> bool:
        return sender in self._entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValueLog):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        inner = ", ".join(
            f"{e.sender}:{e.value}@{e.recv_round}" for e in self.sorted_entries()
        )
        return f"ValueLog({inner})"

    def get(self, sender: NodeId) -> LogEntry | None:
        return self._entries.get(sender)

    def senders(self) -> set[NodeId]:
        return set(self._entries)

    def values(self) -> list[Value]:
        return [e.value for e in self.sorted_entries()]

    def sorted_entries(self) -> list[LogEntry]:
        """Ascending by (value, sender): the canonical tie-broken sort order."""
        return sorted(self._entries.values(), key=lambda e: (e.value, e.sender))

    def merged(self, incoming: list[LogEntry]) -> "ValueLog":
        """New log with ``incoming`` applied, most recent value per sender."""
        entries = dict(self._entries)
        for entry in incoming:
            prior = entries.get(entry.sender)
            if prior is None or entry.recv_round >= prior.recv_round:
                entries[entry.sender] = entry
        return ValueLog(entries)

    def without(self, removed: list[LogEntry]) -> "ValueLog":
        entries = dict(self._entries)
        for entry in removed:
            entries.pop(entry.sender, None)
        return ValueLog(entries)

    @staticmethod
    def empty() -> "ValueLog":
        return ValueLog()


@dataclass
class NodeState:
    """One correct node's protocol state between rounds."""

    id: NodeId
    value: Value
    log: ValueLog = field(default_factory=ValueLog.empty)
    last_local_start: int = 1


@dataclass(frozen=True)
class StepResult:
    """Outcome of one protocol step.

    ``state`` and ``broadcast`` are the contract outputs; the remaining
    fields expose the intermediate gathering stage for tracing and audits.
    """

    state: NodeState
    broadcast: Value
    merged_log: ValueLog
    x: int
    y: int
    computed: bool


def count_relative(log: ValueLog, v_i: Value) -> tuple[int, int]:
    """Counts of log entries >= v_i and <= v_i; ties count on both sides."""
    values = log.values()
    x = sum(1 for v in values if v >= v_i)
    y = sum(1 for v in values if v <= v_i)
    return x, y


def admission_test(x: int, y: int, f: int) -> bool:
    """True when enough values sit on one side of the node's own value."""
    return x >= f + 1 or y >= f + 1


def reduce_log(log: ValueLog, f: int, x: int, y: int, v_i: Value) -> ValueLog:
    """Trim extreme values before averaging.

    ``B`` is the top-f slice and ``S`` the bottom-f slice of the sorted log
    (slices may overlap when the log is short; removal is per entry). When
    more values sit at or above v_i, all of B goes plus any of S strictly
    below v_i; otherwise all of S goes plus any of B strictly above v_i.
    Between f and 2f entries are removed and at least one survives.
    """
    if not admission_test(x, y, f):
        raise ProtocolError(
            f"reduce_log called without admission (x={x}, y={y}, f={f})"
        )
    entries = log.sorted_entries()
    top = entries[len(entries) - f:] if f > 0 else []
    bottom = entries[:f]
    if x > y:
        removed = list(top) + [e for e in bottom if e.value < v_i]
    else:
        removed = list(bottom) + [e for e in top if e.value > v_i]
    return log.without(removed)


def average(log: ValueLog, v_i: Value) -> Value:
    """Equal-weight mean of the surviving values and the node's own value.

    The exact mean always lies within the range of its inputs, but the
    rounded quotient can escape it by one ulp (e.g. (x+x+x)/3 < x), which
    would break the protocol's range invariants; the result is therefore
    pinned back into that range.
    """
    values = log.values()
    mean = (v_i + math.fsum(values)) / (len(values) + 1)
    lo = min(values + [v_i])
    hi = max(values + [v_i])
    return min(max(mean, lo), hi)


def is_common_new_start(r: int, r_c: int) -> bool:
    """True when round r opens a phase: every node's log is freshly empty."""
    return r >= 1 and (r - 1) % r_c == 0


def step_round(
    state: NodeState,
    inbox: list[tuple[NodeId, Value]],
    r: int,
    params: ProtocolParams,
) -> StepResult:
    """Execute one protocol round for one node.

    The broadcast carries the pre-update value. Non-finite payloads are
    dropped at ingestion so averages stay well-defined. Pure: inputs are
    never mutated, and identical inputs give bit-identical outputs.
    """
    for sender, _ in inbox:
        if sender == state.id:
            raise ProtocolError(f"node {state.id} received its own broadcast")
    broadcast = state.value
    incoming = [
        LogEntry(sender, value, r)
        for sender, value in inbox
        if math.isfinite(value)
    ]
    merged = state.log.merged(incoming)
    x, y = count_relative(merged, state.value)
    if admission_test(x, y, params.f):
        survivors = reduce_log(merged, params.f, x, y, state.value)
        new_state = replace(
            state,
            value=average(survivors, state.value),
            log=ValueLog.empty(),
            last_local_start=r + 1,
        )
        computed = True
    elif r % params.r_c == 0:
        new_state = replace(state, log=ValueLog.empty(), last_local_start=r + 1)
        computed = False
    else:
        new_state = replace(state, log=merged)
        computed = False
    return StepResult(new_state, broadcast, merged, x, y, computed)
