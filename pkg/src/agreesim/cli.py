"""Command-line interface.

Exit codes: 0 when every requested check passes, 1 when a protocol
guarantee (validity, legality, safety) is violated, 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import condition_report, check_convergence
from .errors import AgreesimError, ConfigError
from .harness import (
    IO_WINDOW_DEFAULT,
    build_report,
    run_scenario,
    sweep,
    write_report,
    write_series_csv,
    write_sweep_csv,
)
from .scenarios import LIBRARY, ScenarioConfig, builtin_scenario, load_scenario, save_scenario
from .trace import read_trace, write_trace
from .vectors import vectors_from_trace, write_vectors

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _resolve_scenario(ref: str) -> ScenarioConfig:
    if ref in LIBRARY:
        return builtin_scenario(ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"{ref!r} is neither a builtin scenario nor a file")
    return load_scenario(path)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _resolve_scenario(args.scenario)
    trace, report = run_scenario(config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "trace.jsonl")
    write_report(report, out / "report.json")
    write_series_csv(trace, config.effective_delta, out / "series.csv")
    if args.vectors:
        write_vectors(vectors_from_trace(trace), args.vectors)
    print(f"scenario:  {report.scenario}")
    print(f"seed:      {report.seed}")
    print(f"rounds:    {trace.last_round}")
    print(f"converged: {report.converged}"
          + (f" (round {report.converged_at})" if report.converged else ""))
    print(f"validity:  {'ok' if report.validity_ok else 'VIOLATED'}")
    print(f"legality:  {'ok' if report.legality_ok else 'VIOLATED'}")
    print(f"safety:    {'ok' if report.safety_ok else 'VIOLATED'}")
    if not report.cardinality_ok:
        print(f"warning: n={config.n} is below 3f+1={3 * config.f + 1}")
    print(f"outputs in {out}/")
    return EXIT_OK if report.invariants_ok else EXIT_CHECK_FAILED


def _parse_mode(raw: str) -> tuple[str, int]:
    if raw == "per-phase":
        return "per-phase", IO_WINDOW_DEFAULT
    if raw.startswith("io:"):
        try:
            window = int(raw.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad io window in mode {raw!r}") from None
        if window < 1:
            raise ConfigError("io window must be >= 1")
        return "infinitely-often", window
    raise ConfigError(f"mode must be 'per-phase' or 'io:<W>', got {raw!r}")


def _cmd_check(args: argparse.Namespace) -> int:
    trace = read_trace(args.trace)
    eps = trace.params.epsilon
    delta = args.delta if args.delta is not None else eps / 2.0
    if not 0.0 < delta <= eps / 2.0:
        raise ConfigError(f"delta must lie in (0, epsilon/2] = (0, {eps / 2.0}], got {delta}")
    mode, window = _parse_mode(args.mode)
    report = build_report(trace, delta)
    cond = condition_report(trace, delta, mode=mode, window=window)
    convergence = check_convergence(trace)
    print(f"validity:  {'ok' if report.validity_ok else 'VIOLATED'}")
    print(f"legality:  {'ok' if report.legality_ok else 'VIOLATED'}")
    print(f"safety:    {'ok' if report.safety_ok else 'VIOLATED'}")
    print(f"converged: {convergence.reached}"
          + (f" (round {convergence.at_round})" if convergence.reached else ""))
    satisfied = sum(1 for v in cond.per_phase if v.satisfied)
    print(f"condition ({args.mode}): {'holds' if cond.ok else 'does not hold'} "
          f"[{satisfied}/{len(cond.per_phase)} phases satisfied]")
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
        )
    return EXIT_OK if report.invariants_ok else EXIT_CHECK_FAILED


def _cmd_sweep(args: argparse.Namespace) -> int:
    template = _resolve_scenario(args.scenario)
    try:
        grid = json.loads(Path(args.grid).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {args.grid}: {exc}") from None
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ConfigError("grid must map parameter paths to value lists")
    seeds = [template.seed + i for i in range(args.seeds)]
    cells = sweep(template, grid, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(cells, out / "sweep.csv")
    for cell in cells:
        label = ", ".join(f"{k}={v}" for k, v in sorted(cell.assignment.items()))
        mean = (
            f"{cell.mean_converged_round:.1f}"
            if cell.mean_converged_round is not None
            else "-"
        )
        print(
            f"[{label}] converged {cell.converged_rate:.0%}, "
            f"mean round {mean}, condition rate {cell.condition_rate:.0%}"
        )
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def _cmd_scenarios(args: argparse.Namespace) -> int:
    if args.action == "list":
        for name in sorted(LIBRARY):
            print(name)
        return EXIT_OK
    config = builtin_scenario(args.name)
    if args.out:
        save_scenario(config, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agreesim",
        description="Round-based simulator and checker for iterative "
        "approximate agreement in mobile networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and analyze it")
    p_run.add_argument("--scenario", required=True, help="builtin name or JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--vectors", default=None, help="also write step conformance vectors")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="re-run the checkers over a trace file")
    p_check.add_argument("--trace", required=True)
    p_check.add_argument("--delta", type=float, default=None)
    p_check.add_argument("--mode", default="per-phase", help="per-phase or io:<W>")
    p_check.add_argument("--out", default=None, help="write the report JSON here")
    p_check.set_defaults(func=_cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a scenario across a parameter grid")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--grid", required=True, help="JSON file: {param: [values]}")
    p_sweep.add_argument("--seeds", type=int, default=10, help="seeds per cell")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_scen = sub.add_parser("scenarios", help="list or export builtin scenarios")
    scen_sub = p_scen.add_subparsers(dest="action", required=True)
    p_list = scen_sub.add_parser("list")
    p_list.set_defaults(func=_cmd_scenarios, action="list")
    p_export = scen_sub.add_parser("export")
    p_export.add_argument("name")
    p_export.add_argument("--out", default=None)
    p_export.set_defaults(func=_cmd_scenarios, action="export")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AgreesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
