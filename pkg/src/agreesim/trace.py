"""Run traces: the full per-round record a simulation emits.

A trace is line-delimited JSON: one header record, one record per round,
and one trailing record with the final values. Round records capture the
state *at the beginning* of the round (values, retention-window starts)
plus everything that happened during it (positions after the move part,
edges, messages sent by faulty nodes, deliveries, post-merge logs, and
whether each node computed a new value). Serialization is canonical so
that identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import TraceError
from .protocol import NodeId, ProtocolParams, Value

SCHEMA_VERSION = 1

# (sender, receiver, value) for one delivered or attempted message.
Message = tuple[NodeId, NodeId, Value]


@dataclass
class RoundRecord:
    round: int
    positions: dict[NodeId, tuple[float, float]]
    edges: list[tuple[NodeId, NodeId]]
    byz_sent: list[Message]
    delivered: list[Message]
    values_start: dict[NodeId, Value]
    local_start: dict[NodeId, int]
    logs: dict[NodeId, dict[NodeId, tuple[Value, int]]]
    computed: dict[NodeId, bool]


@dataclass
class Trace:
    params: ProtocolParams
    byz_set: set[NodeId]
    initial_values: dict[NodeId, Value]
    rounds: list[RoundRecord] = field(default_factory=list)
    final_values: dict[NodeId, Value] = field(default_factory=dict)
    scenario_name: str = ""
    seed: int = 0

    @property
    def correct_ids(self) -> list[NodeId]:
        return sorted(self.initial_values)

    @property
    def last_round(self) -> int:
        return len(self.rounds)

    def record(self, r: int) -> RoundRecord:
        if not 1 <= r <= self.last_round:
            raise TraceError(f"round {r} outside trace range 1..{self.last_round}")
        return self.rounds[r - 1]

    def values_at(self, r: int) -> dict[NodeId, Value]:
        """Correct values at the beginning of round r (r may be last+1)."""
        if r == self.last_round + 1:
            return self.final_values
        return self.record(r).values_start

    def v_min(self, r: int) -> Value:
        return min(self.values_at(r).values())

    def v_max(self, r: int) -> Value:
        return max(self.values_at(r).values())

    def spread(self, r: int) -> Value:
        values = self.values_at(r).values()
        return max(values) - min(values)

    def common_starts(self) -> list[int]:
        """Phase-opening rounds covered by the trace, including last+1."""
        r_c = self.params.r_c
        return list(range(1, self.last_round + 2, r_c))

    def phase_of(self, r: int) -> int:
        return (r - 1) // self.params.r_c

    def deliveries_to(self, i: NodeId, r: int) -> list[Message]:
        return [m for m in self.record(r).delivered if m[1] == i]


def _round_to_json(rec: RoundRecord) -> dict:
    return {
        "type": "round",
        "round": rec.round,
        "positions": {str(k): list(v) for k, v in sorted(rec.positions.items())},
        "edges": [list(e) for e in sorted(rec.edges)],
        "byz_sent": [list(m) for m in sorted(rec.byz_sent)],
        "delivered": [list(m) for m in sorted(rec.delivered)],
        "values_start": {str(k): v for k, v in sorted(rec.values_start.items())},
        "local_start": {str(k): v for k, v in sorted(rec.local_start.items())},
        "logs": {
            str(i): {str(j): list(entry) for j, entry in sorted(log.items())}
            for i, log in sorted(rec.logs.items())
        },
        "computed": {str(k): v for k, v in sorted(rec.computed.items())},
    }


def _round_from_json(obj: dict) -> RoundRecord:
    return RoundRecord(
        round=obj["round"],
        positions={int(k): (v[0], v[1]) for k, v in obj["positions"].items()},
        edges=[(e[0], e[1]) for e in obj["edges"]],
        byz_sent=[(m[0], m[1], m[2]) for m in obj["byz_sent"]],
        delivered=[(m[0], m[1], m[2]) for m in obj["delivered"]],
        values_start={int(k): v for k, v in obj["values_start"].items()},
        local_start={int(k): v for k, v in obj["local_start"].items()},
        logs={
            int(i): {int(j): (entry[0], entry[1]) for j, entry in log.items()}
            for i, log in obj["logs"].items()
        },
        computed={int(k): v for k, v in obj["computed"].items()},
    )


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def trace_to_lines(trace: Trace) -> list[str]:
    header = {
        "type": "header",
        "schema": SCHEMA_VERSION,
        "scenario": trace.scenario_name,
        "seed": trace.seed,
        "params": {
            "n": trace.params.n,
            "f": trace.params.f,
            "r_c": trace.params.r_c,
            "epsilon": trace.params.epsilon,
        },
        "byz_set": sorted(trace.byz_set),
        "initial_values": {str(k): v for k, v in sorted(trace.initial_values.items())},
    }
    lines = [_dumps(header)]
    lines.extend(_dumps(_round_to_json(rec)) for rec in trace.rounds)
    lines.append(
        _dumps(
            {
                "type": "final",
                "values": {str(k): v for k, v in sorted(trace.final_values.items())},
            }
        )
    )
    return lines


def trace_from_lines(lines: list[str]) -> Trace:
    records = [json.loads(line) for line in lines if line.strip()]
    if not records or records[0].get("type") != "header":
        raise TraceError("trace does not start with a header record")
    header = records[0]
    if header.get("schema") != SCHEMA_VERSION:
        raise TraceError(f"unsupported trace schema {header.get('schema')!r}")
    p = header["params"]
    trace = Trace(
        params=ProtocolParams(n=p["n"], f=p["f"], r_c=p["r_c"], epsilon=p["epsilon"]),
        byz_set=set(header["byz_set"]),
        initial_values={int(k): v for k, v in header["initial_values"].items()},
        scenario_name=header.get("scenario", ""),
        seed=header.get("seed", 0),
    )
    for obj in records[1:]:
        if obj["type"] == "round":
            trace.rounds.append(_round_from_json(obj))
        elif obj["type"] == "final":
            trace.final_values = {int(k): v for k, v in obj["values"].items()}
        else:
            raise TraceError(f"unknown trace record type {obj['type']!r}")
    expected = list(range(1, len(trace.rounds) + 1))
    if [rec.round for rec in trace.rounds] != expected:
        raise TraceError("trace rounds are not contiguous from 1")
    return trace


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text("\n".join(trace_to_lines(trace)) + "\n")


def read_trace(path: str | Path) -> Trace:
    return trace_from_lines(Path(path).read_text().splitlines())
