"""End-to-end runs, scenario library verdicts, replay, files, CLI."""

import json

import pytest

from agreesim.cli import main
from agreesim.errors import ConfigError
from agreesim.harness import (
    build_report,
    report_to_json,
    run_scenario,
    simulate,
    sweep,
    trace_bytes,
    write_series_csv,
    write_sweep_csv,
)
from agreesim.scenarios import (
    LIBRARY,
    ScenarioConfig,
    builtin_scenario,
    load_scenario,
    save_scenario,
)
from agreesim.trace import read_trace, trace_from_lines, trace_to_lines, write_trace
from agreesim.vectors import read_vectors, replay_vectors, vectors_from_trace, write_vectors


class TestRunScenario:
    def test_single_node_converges_immediately(self):
        config = ScenarioConfig(
            name="solo", n=1, f=0, r_c=1, epsilon=0.1, max_rounds=3,
            initial_values={"mode": "explicit", "values": [3.0]}, seed=1,
        )
        _trace, report = run_scenario(config)
        assert report.converged and report.converged_at == 1
        assert report.invariants_ok

    def test_invalid_config_rejected_before_simulation(self):
        config = ScenarioConfig(
            name="bad", n=2, f=0, r_c=1, epsilon=0.1,
            initial_values={"mode": "explicit", "values": [1.0]}, seed=1,
        )
        with pytest.raises(ConfigError):
            run_scenario(config)

    def test_values_recorded_at_round_start(self):
        trace = simulate(builtin_scenario("fully_connected_baseline"))
        assert trace.values_at(1) == trace.initial_values


class TestScenarioLibrary:
    def test_baseline_converges_with_shrinking_spread(self):
        trace, report = run_scenario(builtin_scenario("fully_connected_baseline"))
        assert report.converged
        spreads = [row["spread"] for row in report.phase_starts]
        until = trace.phase_of(report.converged_at) + 1
        open_spreads = spreads[:until]
        assert all(b < a for a, b in zip(open_spreads, open_spreads[1:]))
        assert report.final_spread < trace.params.epsilon

    def test_short_population_stays_stuck(self):
        trace, report = run_scenario(builtin_scenario("lemma2_3f_impossible"))
        assert not report.converged
        assert len(report.condition_per_phase) == 50
        assert all(not p["satisfied"] for p in report.condition_per_phase)
        assert not report.cardinality_ok

    @pytest.mark.parametrize("name", ["necessity_f_proper", "necessity_improper_mix"])
    def test_necessity_scenarios_freeze_every_value(self, name):
        trace, report = run_scenario(builtin_scenario(name))
        for r in range(1, trace.last_round + 2):
            assert trace.values_at(r) == trace.initial_values
        assert all(not p["satisfied"] for p in report.condition_per_phase)
        assert not report.converged

    def test_partition_converges_per_clique_only(self):
        trace, report = run_scenario(builtin_scenario("partition_never"))
        eps = trace.params.epsilon
        low, high = trace.correct_ids[:4], trace.correct_ids[4:]
        final = trace.values_at(trace.last_round + 1)
        for clique in (low, high):
            vals = [final[i] for i in clique]
            assert max(vals) - min(vals) < eps
        gap = min(final[i] for i in high) - max(final[i] for i in low)
        assert gap >= eps
        assert not report.converged
        assert all(not p["satisfied"] for p in report.condition_per_phase)

    def test_scripted_walk_composes_log_across_neighborhoods(self):
        trace, _report = run_scenario(builtin_scenario("fig1_scripted_path"))
        stops = [(3.0, 5.0), (3.0, 5.0), (5.0, 5.0), (7.0, 5.0)]
        assert [trace.record(r).positions[0] for r in range(1, 5)] == stops
        assert trace.record(3).computed[0]
        assert set(trace.record(3).logs[0]) == {1, 2}

    def test_overshoot_scenario_breaches_round_envelope_only(self):
        trace, report = run_scenario(builtin_scenario("stale_log_overshoot"))
        assert trace.v_max(4) > trace.v_max(3)
        assert report.safety_ok and report.legality_ok and report.validity_ok
        assert not report.converged

    def test_every_library_entry_validates(self):
        for name in LIBRARY:
            builtin_scenario(name).validate()


class TestReplay:
    @pytest.mark.parametrize(
        "name", ["fully_connected_baseline", "necessity_improper_mix", "stale_log_overshoot"]
    )
    def test_same_seed_gives_identical_bytes(self, name):
        config = builtin_scenario(name)
        t1, r1 = run_scenario(config)
        t2, r2 = run_scenario(config)
        assert trace_bytes(t1) == trace_bytes(t2)
        assert report_to_json(r1) == report_to_json(r2)

    def test_different_seed_changes_random_runs(self):
        config = ScenarioConfig(
            name="jitter", n=6, f=1, r_c=2, epsilon=0.05, max_rounds=10,
            arena=(6.0, 6.0), radius=2.0,
            mobility={"model": "teleport-random"},
            adversary={"strategy": "silent", "byz_set": [5]},
            seed=100,
        )
        t1 = simulate(config, seed=100)
        t2 = simulate(config, seed=101)
        assert trace_bytes(t1) != trace_bytes(t2)


class TestFiles:
    def test_trace_round_trips_losslessly(self, tmp_path):
        trace = simulate(builtin_scenario("stale_log_overshoot"))
        path = tmp_path / "trace.jsonl"
        write_trace(trace, path)
        loaded = read_trace(path)
        assert trace_to_lines(loaded) == trace_to_lines(trace)
        reloaded = trace_from_lines(trace_to_lines(loaded))
        assert trace_bytes(reloaded) == trace_bytes(trace)

    def test_report_round_trips_as_json(self):
        _trace, report = run_scenario(builtin_scenario("fully_connected_baseline"))
        blob = report_to_json(report)
        assert json.loads(blob) == report.to_dict()

    def test_scenario_files_round_trip(self, tmp_path):
        config = builtin_scenario("necessity_f_proper")
        path = tmp_path / "scenario.json"
        save_scenario(config, path)
        loaded = load_scenario(path)
        assert loaded.to_dict() == config.to_dict()

    def test_unknown_scenario_field_rejected(self, tmp_path):
        doc = builtin_scenario("partition_never").to_dict()
        doc["surprise"] = 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_malformed_traces_rejected(self, tmp_path):
        trace = simulate(builtin_scenario("fully_connected_baseline"))
        lines = trace_to_lines(trace)
        from agreesim.errors import TraceError

        with pytest.raises(TraceError):
            trace_from_lines(lines[1:])  # header missing
        bad_schema = json.loads(lines[0])
        bad_schema["schema"] = 99
        with pytest.raises(TraceError):
            trace_from_lines([json.dumps(bad_schema)] + lines[1:])
        with pytest.raises(TraceError):
            trace_from_lines([lines[0]] + lines[2:])  # round 1 missing

    def test_cli_outputs_are_replay_stable(self, tmp_path):
        blobs = []
        for replay in ("a", "b"):
            out = tmp_path / replay
            main(["run", "--scenario", "stale_log_overshoot", "--out", str(out)])
            blobs.append(
                (out / "trace.jsonl").read_bytes()
                + (out / "report.json").read_bytes()
                + (out / "series.csv").read_bytes()
            )
        assert blobs[0] == blobs[1]

    def test_series_csv_has_row_per_round(self, tmp_path):
        trace = simulate(builtin_scenario("fully_connected_baseline"))
        path = tmp_path / "series.csv"
        write_series_csv(trace, 0.05, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == trace.last_round + 2  # header + rounds + final point
        assert lines[0].startswith("round,phase,common_start,v_min,v_max,spread")


class TestSweep:
    def test_single_cell_matches_run_scenario(self):
        config = builtin_scenario("fully_connected_baseline")
        cells = sweep(config, {"r_c": [1]}, seeds=[config.seed])
        _trace, report = run_scenario(config)
        assert len(cells) == 1
        cell = cells[0]
        assert cell.runs == 1
        assert cell.converged_rate == (1.0 if report.converged else 0.0)
        assert cell.mean_converged_round == report.converged_at

    def test_grid_over_retention_window(self, tmp_path):
        template = ScenarioConfig(
            name="sparse", n=6, f=1, r_c=1, epsilon=0.05, max_rounds=16,
            arena=(6.0, 6.0), radius=2.2,
            mobility={"model": "random-waypoint", "speed": [0.5, 1.5]},
            adversary={"strategy": "silent", "byz_set": [5]},
            seed=50,
        )
        cells = sweep(template, {"r_c": [1, 2, 4]}, seeds=[50, 51, 52])
        assert [c.assignment["r_c"] for c in cells] == [1, 2, 4]
        for cell in cells:
            assert 0.0 <= cell.converged_rate <= 1.0
            assert 0.0 <= cell.condition_rate <= 1.0
        out = tmp_path / "sweep.csv"
        write_sweep_csv(cells, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "r_c,runs,failures,converged_rate,mean_converged_round,condition_rate"
        assert len(lines) == 4

    def test_rates_stable_across_seed_resamples(self):
        # Documented stochastic tolerance: with 50-seed lists the convergence
        # rate of a dense scenario may differ by at most 0.2 between samples.
        template = ScenarioConfig(
            name="dense", n=5, f=1, r_c=1, epsilon=0.05, max_rounds=12,
            arena=(6.0, 6.0), radius=3.0,
            mobility={"model": "teleport-random"},
            adversary={"strategy": "silent", "byz_set": [4]},
            seed=0,
        )
        first = sweep(template, {"r_c": [1]}, seeds=list(range(50)))[0]
        second = sweep(template, {"r_c": [1]}, seeds=list(range(100, 150)))[0]
        assert abs(first.converged_rate - second.converged_rate) <= 0.2

    def test_bad_grid_path_rejected(self):
        with pytest.raises(ConfigError):
            sweep(builtin_scenario("partition_never"), {"nonsense": [1]}, seeds=[1])


class TestVectors:
    def test_vectors_replay_cleanly(self, tmp_path):
        trace = simulate(builtin_scenario("fig1_scripted_path"))
        records = vectors_from_trace(trace)
        path = tmp_path / "vectors.jsonl"
        write_vectors(records, path)
        loaded = read_vectors(path)
        assert loaded == records
        assert replay_vectors(loaded) == []

    def test_corrupted_vector_is_detected(self):
        trace = simulate(builtin_scenario("fully_connected_baseline"))
        records = vectors_from_trace(trace)
        records[0]["expect"]["value"] += 1.0
        failures = replay_vectors(records)
        assert failures and failures[0][0] == 0

    def test_vectors_cover_every_step(self):
        trace = simulate(builtin_scenario("fully_connected_baseline"))
        records = vectors_from_trace(trace)
        assert len(records) == trace.last_round * len(trace.correct_ids)


class TestCli:
    def test_run_writes_outputs_and_exits_zero(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main([
            "run", "--scenario", "fully_connected_baseline", "--out", str(out),
            "--vectors", str(tmp_path / "vectors.jsonl"),
        ])
        assert code == 0
        assert (out / "trace.jsonl").exists()
        assert (out / "report.json").exists()
        assert (out / "series.csv").exists()
        assert (tmp_path / "vectors.jsonl").exists()
        assert "converged: True" in capsys.readouterr().out

    def test_run_accepts_scenario_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        save_scenario(builtin_scenario("partition_never"), path)
        code = main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")])
        assert code == 0

    def test_check_reruns_analyzers_on_a_trace(self, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--scenario", "lemma2_3f_impossible", "--out", str(out)])
        capsys.readouterr()
        code = main([
            "check", "--trace", str(out / "trace.jsonl"), "--mode", "io:3",
            "--out", str(tmp_path / "report.json"),
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "does not hold" in printed
        assert json.loads((tmp_path / "report.json").read_text())["converged"] is False

    def test_check_flags_doctored_trace(self, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--scenario", "fully_connected_baseline", "--out", str(out)])
        trace_path = out / "trace.jsonl"
        lines = trace_path.read_text().splitlines()
        doctored = json.loads(lines[-1])
        doctored["values"]["0"] = 999.0
        lines[-1] = json.dumps(doctored, sort_keys=True, separators=(",", ":"))
        trace_path.write_text("\n".join(lines) + "\n")
        code = main(["check", "--trace", str(trace_path)])
        assert code == 1
        assert "VIOLATED" in capsys.readouterr().out

    def test_scenarios_list_and_export(self, tmp_path, capsys):
        assert main(["scenarios", "list"]) == 0
        listed = capsys.readouterr().out.split()
        assert sorted(LIBRARY) == listed
        path = tmp_path / "exported.json"
        assert main(["scenarios", "export", "fig1_scripted_path", "--out", str(path)]) == 0
        assert load_scenario(path).name == "fig1_scripted_path"

    def test_sweep_command(self, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"r_c": [1, 2]}))
        code = main([
            "sweep", "--scenario", "fully_connected_baseline", "--grid", str(grid),
            "--seeds", "2", "--out", str(tmp_path / "sweep"),
        ])
        assert code == 0
        assert (tmp_path / "sweep" / "sweep.csv").exists()
        assert "converged" in capsys.readouterr().out

    def test_usage_errors_exit_two(self, tmp_path, capsys):
        assert main(["run", "--scenario", "no_such_thing", "--out", str(tmp_path)]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
        capsys.readouterr()


def test_scripted_table_loadable_from_separate_file(tmp_path):
    table = {"1": {"0": -5.0}, "2": {"0": 5.0}}
    table_path = tmp_path / "table.json"
    table_path.write_text(json.dumps(table))
    config = ScenarioConfig(
        name="filed", n=3, f=1, r_c=2, epsilon=1.0, max_rounds=2, radius=2.5,
        adversary={"strategy": "scripted", "table_file": "table.json", "byz_set": [2]},
        initial_values={"mode": "explicit", "values": [0.0, 10.0]},
        initial_positions={
            "mode": "explicit",
            "coords": {"0": [4.0, 5.0], "1": [6.0, 5.0], "2": [5.0, 5.0]},
        },
        seed=9,
    )
    scenario_path = tmp_path / "scenario.json"
    save_scenario(config, scenario_path)
    loaded = load_scenario(scenario_path)  # resolves the table path
    trace = simulate(loaded)
    sent = {(r.round, m[1], m[2]) for r in trace.rounds for m in r.byz_sent}
    assert sent == {(1, 0, -5.0), (2, 0, 5.0)}


def baseline_reference_replay(rounds):
    """Independent replay of the fully connected four-node baseline.

    Plain-list arithmetic over the broadcast-everything round structure,
    reusing only the index-slice reference oracle.
    """
    import math

    from reference import reference_counts, reference_reduce

    values = [0.0, 1.0, 2.0, 3.0]
    history = [list(values)]
    for _round in range(rounds):
        new_values = []
        for i, own in enumerate(values):
            heard = sorted(v for j, v in enumerate(values) if j != i)
            x, y = reference_counts(heard, own)
            if x >= 2 or y >= 2:  # f = 1
                survivors, _removed = reference_reduce(heard, 1, own)
                mean = (own + math.fsum(survivors)) / (len(survivors) + 1)
                mean = min(max(mean, min(survivors + [own])), max(survivors + [own]))
                new_values.append(mean)
            else:
                new_values.append(own)
        values = new_values
        history.append(list(values))
    return history


# Spreads produced by baseline_reference_replay, frozen as golden values.
BASELINE_GOLDEN_SPREADS = [
    3.0,
    1.0,
    0.3333333333333335,
    0.11111111111111116,
    0.03703703703703676,
]


def test_baseline_matches_independent_replay_exactly():
    trace = simulate(builtin_scenario("fully_connected_baseline"))
    expected = baseline_reference_replay(rounds=8)
    for r, snapshot in enumerate(expected, start=1):
        assert trace.values_at(r) == dict(enumerate(snapshot))
    assert [trace.spread(r) for r in range(1, 6)] == BASELINE_GOLDEN_SPREADS
    replay_spreads = [max(snap) - min(snap) for snap in expected[:5]]
    assert replay_spreads == BASELINE_GOLDEN_SPREADS


def test_cardinality_warning_surfaces_in_report():
    _trace, report = run_scenario(builtin_scenario("lemma2_3f_impossible"))
    assert not report.cardinality_ok


def test_build_report_is_rederivable_from_trace_file(tmp_path):
    config = builtin_scenario("stale_log_overshoot")
    trace, report = run_scenario(config)
    path = tmp_path / "trace.jsonl"
    write_trace(trace, path)
    again = build_report(read_trace(path), config.effective_delta)
    assert report_to_json(again) == report_to_json(report)
