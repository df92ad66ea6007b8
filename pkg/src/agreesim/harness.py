"""Run orchestration: lock-step execution, reports, seed sweeps.

Each round advances in a fixed order: move, rebuild the communication
graph, broadcast (correct nodes send their value, faulty nodes whatever
their strategy picks), deliver with loss, then step every correct node.
All randomness flows through per-(purpose, round) child streams of the
master seed, so a (scenario, seed) pair always reproduces the same trace
and report, byte for byte.
"""

from __future__ import annotations

import csv
import itertools
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .adversary import (
    AdversaryStrategy,
    ExtremeSplit,
    FixedValue,
    RandomLegal,
    RoundView,
    ScriptedTable,
    Silent,
    byzantine_outbox,
)
from .analysis import (
    check_cardinality,
    check_condition,
    check_convergence,
    check_legality,
    check_phase_progress,
    check_safety,
    check_validity,
    spread_series,
    trace_phases,
)
from .dynamics import (
    Arena,
    RandomWaypoint,
    Scripted,
    Stationary,
    TeleportRandom,
    build_round_graph,
    deliver,
    move_step,
)
from .errors import AgreesimError, ConfigError
from .protocol import NodeState, ProtocolParams, is_common_new_start, step_round
from .scenarios import ScenarioConfig
from .trace import RoundRecord, Trace, trace_to_lines

IO_WINDOW_DEFAULT = 3


def substream(seed: int, *parts) -> random.Random:
    """Independent child stream, stable across runs and platforms."""
    return random.Random(f"{seed}/" + "/".join(str(p) for p in parts))


def build_mobility(config: ScenarioConfig, arena: Arena):
    spec = config.mobility
    model = spec.get("model")
    if model == "stationary":
        return Stationary()
    if model == "random-waypoint":
        speed = spec.get("speed", [0.5, 2.0])
        return RandomWaypoint(arena, float(speed[0]), float(speed[1]))
    if model == "scripted":
        waypoints = {
            int(i): [(float(x), float(y)) for x, y in path]
            for i, path in spec.get("waypoints", {}).items()
        }
        return Scripted(arena, waypoints)
    if model == "teleport-random":
        return TeleportRandom(arena)
    raise ConfigError(f"unknown mobility model {model!r}")


def build_adversary(config: ScenarioConfig) -> AdversaryStrategy:
    spec = config.adversary
    strategy = spec.get("strategy")
    if strategy == "silent":
        behavior = Silent()
    elif strategy == "fixed-value":
        behavior = FixedValue(float(spec["value"]))
    elif strategy == "extreme-split":
        behavior = ExtremeSplit(float(spec["v_hi"]), float(spec["v_lo"]))
    elif strategy == "random-legal":
        lo, hi = spec.get("range", [0.0, 1.0])
        behavior = RandomLegal(float(lo), float(hi))
    elif strategy == "scripted":
        raw = spec.get("table")
        if raw is None and "table_file" in spec:
            try:
                raw = json.loads(Path(spec["table_file"]).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(
                    f"cannot read scripted table {spec['table_file']}: {exc}"
                ) from None
        table = {}
        for key, row in (raw or {}).items():
            round_key = "*" if key == "*" else int(key)
            table[round_key] = {int(r): float(v) for r, v in row.items()}
        behavior = ScriptedTable(table)
    else:
        raise ConfigError(f"unknown adversary strategy {strategy!r}")
    out = AdversaryStrategy(behavior=behavior, byz_set=config.byz_set)
    out.validate(config.n, config.f)
    return out


def _initial_positions(config: ScenarioConfig, arena: Arena, rng: random.Random):
    spec = config.initial_positions
    if spec.get("mode") == "explicit":
        coords = spec.get("coords", {})
        positions = {}
        for i in range(config.n):
            raw = coords.get(str(i), coords.get(i))
            pos = (float(raw[0]), float(raw[1]))
            if not arena.contains(pos):
                raise ConfigError(f"initial position {pos} of node {i} outside arena")
            positions[i] = pos
        return positions
    return {i: arena.random_point(rng) for i in range(config.n)}


def _initial_values(config: ScenarioConfig, rng: random.Random):
    spec = config.initial_values
    correct = config.correct_ids
    if spec.get("mode") == "explicit":
        return {i: float(v) for i, v in zip(correct, spec["values"])}
    lo, hi = spec.get("range", [0.0, 1.0])
    return {i: rng.uniform(float(lo), float(hi)) for i in correct}


def run_scenario(config: ScenarioConfig, seed: int | None = None) -> tuple[Trace, "RunReport"]:
    """Execute a scenario end to end and analyze the resulting trace."""
    trace = simulate(config, seed=seed)
    report = build_report(trace, config.effective_delta)
    return trace, report


def simulate(config: ScenarioConfig, seed: int | None = None) -> Trace:
    """Execute a scenario's lock-step rounds and record the full trace."""
    config.validate()
    run_seed = config.seed if seed is None else seed
    params = ProtocolParams(n=config.n, f=config.f, r_c=config.r_c, epsilon=config.epsilon)
    arena = Arena(*config.arena)
    model = build_mobility(config, arena)
    adversary = build_adversary(config)
    positions = _initial_positions(config, arena, substream(run_seed, "init-pos"))
    values = _initial_values(config, substream(run_seed, "init-values"))
    states = {i: NodeState(id=i, value=values[i]) for i in config.correct_ids}
    byz = config.byz_set
    trace = Trace(
        params=params,
        byz_set=byz,
        initial_values=dict(values),
        scenario_name=config.name,
        seed=run_seed,
    )
    phase_start_values = dict(values)

    for r in range(1, config.effective_max_rounds + 1):
        if is_common_new_start(r, config.r_c):
            phase_start_values = {i: s.value for i, s in states.items()}
        positions = move_step(positions, model, substream(run_seed, "move", r), r)
        graph = build_round_graph(positions, config.radius, r)
        values_start = {i: s.value for i, s in states.items()}
        local_start = {i: s.last_local_start for i, s in states.items()}

        outbox = []
        for i in sorted(states):
            for j in sorted(graph.out_neighbors(i)):
                outbox.append((i, j, states[i].value))
        view = RoundView(
            round=r,
            values_now=values_start,
            phase_start_values=phase_start_values,
            positions=positions,
            trace_so_far=trace,
        )
        byz_sent = []
        for b in sorted(byz):
            byz_sent.extend(
                byzantine_outbox(adversary, b, graph, r, view, substream(run_seed, "adv", r, b))
            )
        inboxes = deliver(graph, outbox + byz_sent, config.loss_rate, substream(run_seed, "loss", r))

        results = {}
        for i in sorted(states):
            inbox = [(sender, value) for sender, _recv, value in inboxes.get(i, [])]
            results[i] = step_round(states[i], inbox, r, params)

        trace.rounds.append(
            RoundRecord(
                round=r,
                positions=dict(positions),
                edges=sorted(graph.edges),
                byz_sent=sorted(byz_sent),
                delivered=sorted(m for msgs in inboxes.values() for m in msgs),
                values_start=values_start,
                local_start=local_start,
                logs={
                    i: {
                        e.sender: (e.value, e.recv_round)
                        for e in res.merged_log.sorted_entries()
                    }
                    for i, res in results.items()
                },
                computed={i: res.computed for i, res in results.items()},
            )
        )
        states = {i: res.state for i, res in results.items()}

    trace.final_values = {i: s.value for i, s in states.items()}
    return trace


@dataclass
class RunReport:
    """Analyzer verdicts for one run, all re-derivable from the trace."""

    scenario: str
    seed: int
    converged: bool
    converged_at: int | None
    validity_ok: bool
    legality_ok: bool
    safety_ok: bool
    cardinality_ok: bool
    condition_per_phase: list[dict]
    condition_ok_all_phases: bool
    condition_ok_io: bool
    io_window: int
    progress_ok: bool
    progress_violations: list[str]
    max_stagnant_streak: int
    phase_starts: list[dict]
    final_spread: float

    @property
    def invariants_ok(self) -> bool:
        return self.validity_ok and self.legality_ok and self.safety_ok

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "converged": self.converged,
            "converged_at": self.converged_at,
            "validity_ok": self.validity_ok,
            "legality_ok": self.legality_ok,
            "safety_ok": self.safety_ok,
            "cardinality_ok": self.cardinality_ok,
            "condition_per_phase": self.condition_per_phase,
            "condition_ok_all_phases": self.condition_ok_all_phases,
            "condition_ok_io": self.condition_ok_io,
            "io_window": self.io_window,
            "progress_ok": self.progress_ok,
            "progress_violations": self.progress_violations,
            "max_stagnant_streak": self.max_stagnant_streak,
            "phase_starts": self.phase_starts,
            "final_spread": self.final_spread,
        }


def build_report(trace: Trace, delta: float, io_window: int = IO_WINDOW_DEFAULT) -> RunReport:
    validity = check_validity(trace)
    legality = check_legality(trace)
    safety = check_safety(trace)
    convergence = check_convergence(trace)
    verdicts = [check_condition(trace, k, delta) for k in trace_phases(trace)]
    per_phase = [
        {
            "phase": v.phase,
            "satisfied": v.satisfied,
            "vacuous": v.vacuous,
            "witness": None
            if v.witness is None
            else {
                "node": v.witness.node,
                "round": v.witness.round,
                "senders": list(v.witness.senders),
            },
        }
        for v in verdicts
    ]
    flags = [v.satisfied for v in verdicts]
    if len(flags) <= io_window:
        io_ok = any(flags) if flags else True
    else:
        io_ok = all(any(flags[i:i + io_window]) for i in range(len(flags) - io_window + 1))
    progress = check_phase_progress(trace, delta, verdicts=verdicts)
    phase_starts = [
        {
            "round": r,
            "v_min": trace.v_min(r),
            "v_max": trace.v_max(r),
            "spread": trace.spread(r),
        }
        for r in trace.common_starts()
    ]
    return RunReport(
        scenario=trace.scenario_name,
        seed=trace.seed,
        converged=convergence.reached,
        converged_at=convergence.at_round,
        validity_ok=validity.ok,
        legality_ok=legality.ok,
        safety_ok=safety.ok,
        cardinality_ok=check_cardinality(trace.params.n, trace.params.f),
        condition_per_phase=per_phase,
        condition_ok_all_phases=all(flags) if flags else True,
        condition_ok_io=io_ok,
        io_window=io_window,
        progress_ok=progress.ok,
        progress_violations=[f"{v.kind}@phase{v.phase}: {v.detail}" for v in progress.violations],
        max_stagnant_streak=progress.max_stagnant_streak,
        phase_starts=phase_starts,
        final_spread=trace.spread(trace.last_round + 1),
    )


def report_to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def write_report(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(report_to_json(report))


def write_series_csv(trace: Trace, delta: float, path: str | Path) -> None:
    rows = spread_series(trace, delta)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def trace_bytes(trace: Trace) -> bytes:
    return ("\n".join(trace_to_lines(trace)) + "\n").encode()


def _set_path(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    target = data
    for part in parts[:-1]:
        if part not in target or not isinstance(target[part], dict):
            raise ConfigError(f"grid path {dotted!r} does not match the scenario")
        target = target[part]
    if parts[-1] not in target and parts[-1] not in ScenarioConfig.__dataclass_fields__:
        raise ConfigError(f"grid path {dotted!r} does not match the scenario")
    target[parts[-1]] = value


@dataclass
class SweepCell:
    assignment: dict
    runs: int
    failures: int
    converged_rate: float
    mean_converged_round: float | None
    condition_rate: float


def sweep(
    template: ScenarioConfig,
    grid: dict[str, list],
    seeds: list[int],
) -> list[SweepCell]:
    """Run the template across a parameter grid and a seed list per cell.

    Produces, per cell: the fraction of runs that converged, the mean
    round of convergence among those, and the fraction of evaluated
    (spread still open) phases in which the progress condition held.
    Individual run failures are counted per cell, not fatal.
    """
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    keys = sorted(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        assignment = dict(zip(keys, combo))
        doc = template.to_dict()
        for dotted, value in assignment.items():
            _set_path(doc, dotted, value)
        config = ScenarioConfig.from_dict(doc)
        config.validate()
        converged = 0
        failures = 0
        rounds = []
        phases_total = 0
        phases_ok = 0
        for seed in seeds:
            try:
                _trace, report = run_scenario(config, seed=seed)
            except AgreesimError:
                failures += 1
                continue
            if report.converged:
                converged += 1
                rounds.append(report.converged_at)
            for entry in report.condition_per_phase:
                if not entry["vacuous"]:
                    phases_total += 1
                    if entry["satisfied"]:
                        phases_ok += 1
        completed = len(seeds) - failures
        cells.append(
            SweepCell(
                assignment=assignment,
                runs=len(seeds),
                failures=failures,
                converged_rate=(converged / completed) if completed else 0.0,
                mean_converged_round=(sum(rounds) / len(rounds)) if rounds else None,
                condition_rate=(phases_ok / phases_total) if phases_total else 1.0,
            )
        )
    return cells


def write_sweep_csv(cells: list[SweepCell], path: str | Path) -> None:
    keys = sorted(cells[0].assignment) if cells else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            keys
            + ["runs", "failures", "converged_rate", "mean_converged_round", "condition_rate"]
        )
        for cell in cells:
            writer.writerow(
                [cell.assignment[k] for k in keys]
                + [
                    cell.runs,
                    cell.failures,
                    cell.converged_rate,
                    "" if cell.mean_converged_round is None else cell.mean_converged_round,
                    cell.condition_rate,
                ]
            )
