"""Faulty-node strategies: equivocation, targeting, topology discipline."""

import random

import pytest

from agreesim.adversary import (
    AdversaryStrategy,
    ExtremeSplit,
    FixedValue,
    RandomLegal,
    RoundView,
    ScriptedTable,
    Silent,
    byzantine_outbox,
)
from agreesim.dynamics import RoundGraph, deliver
from agreesim.errors import ConfigError, TopologyError
from agreesim.harness import simulate
from agreesim.protocol import ProtocolParams
from agreesim.scenarios import ScenarioConfig, builtin_scenario
from agreesim.trace import Trace


def make_view(r=1, values=None, phase_values=None):
    values = values or {}
    trace = Trace(
        params=ProtocolParams(n=4, f=1, r_c=1, epsilon=1.0),
        byz_set={9},
        initial_values=dict(values),
    )
    return RoundView(
        round=r,
        values_now=dict(values),
        phase_start_values=dict(phase_values if phase_values is not None else values),
        positions={},
        trace_so_far=trace,
    )


def star_graph(center, leaves, r=1):
    edges = set()
    for leaf in leaves:
        edges.add((center, leaf))
        edges.add((leaf, center))
    return RoundGraph(round=r, edges=frozenset(edges))


STRATEGY_GRAPH = star_graph(9, [0, 1, 2])


class TestStrategies:
    def test_silent_sends_nothing(self):
        strat = AdversaryStrategy(Silent(), {9})
        out = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, make_view(), random.Random(0))
        assert out == []

    def test_fixed_value_reaches_every_neighbor(self):
        strat = AdversaryStrategy(FixedValue(42.0), {9})
        out = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, make_view(), random.Random(0))
        assert sorted(out) == [(9, 0, 42.0), (9, 1, 42.0), (9, 2, 42.0)]

    def test_extreme_split_targets_by_phase_start_value(self):
        view = make_view(values={0: 10.0, 1: 0.0, 2: 5.0})
        strat = AdversaryStrategy(ExtremeSplit(v_hi=11.0, v_lo=-1.0), {9})
        out = dict(
            (receiver, value)
            for _sender, receiver, value in byzantine_outbox(
                strat, 9, STRATEGY_GRAPH, 1, view, random.Random(0)
            )
        )
        assert out[0] == 11.0
        assert out[1] == -1.0
        assert out[2] == 11.0  # midpoint ties go high

    def test_extreme_split_equivocates_within_one_round(self):
        # Different receivers get different values in the same round and the
        # delivery layer keeps both.
        view = make_view(values={0: 10.0, 1: 0.0})
        strat = AdversaryStrategy(ExtremeSplit(11.0, -1.0), {9})
        out = byzantine_outbox(strat, 9, star_graph(9, [0, 1]), 1, view, random.Random(0))
        inboxes = deliver(star_graph(9, [0, 1]), out, 0.0, random.Random(0))
        assert inboxes[0] == [(9, 0, 11.0)]
        assert inboxes[1] == [(9, 1, -1.0)]

    def test_random_legal_draws_stay_in_range_and_replay(self):
        strat = AdversaryStrategy(RandomLegal(0.0, 1.0), {9})
        view = make_view()
        a = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, view, random.Random(5))
        b = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, view, random.Random(5))
        assert a == b
        assert all(0.0 <= value <= 1.0 for _s, _r, value in a)

    def test_random_legal_rejects_reversed_range(self):
        with pytest.raises(ConfigError):
            RandomLegal(1.0, 0.0)

    def test_scripted_table_with_default_row(self):
        table = ScriptedTable({1: {0: 5.0}, "*": {1: 7.0}})
        strat = AdversaryStrategy(table, {9})
        r1 = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, make_view(r=1), random.Random(0))
        r2 = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 2, make_view(r=2), random.Random(0))
        assert r1 == [(9, 0, 5.0)]
        assert r2 == [(9, 1, 7.0)]

    def test_scripted_table_skips_unreachable_receivers(self):
        table = ScriptedTable({"*": {0: 5.0, 7: 6.0}})
        strat = AdversaryStrategy(table, {9})
        out = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, make_view(), random.Random(0))
        assert out == [(9, 0, 5.0)]


class TestOutboxDiscipline:
    def test_only_controlled_nodes_emit(self):
        strat = AdversaryStrategy(FixedValue(1.0), {9})
        with pytest.raises(ConfigError):
            byzantine_outbox(strat, 3, STRATEGY_GRAPH, 1, make_view(), random.Random(0))

    def test_at_most_one_message_per_receiver(self):
        class Doubler:
            def messages(self, b, receivers, view, rng):
                return [(r, 1.0) for r in receivers] + [(r, 2.0) for r in receivers]

        strat = AdversaryStrategy(Doubler(), {9})
        out = byzantine_outbox(strat, 9, STRATEGY_GRAPH, 1, make_view(), random.Random(0))
        assert len(out) == 3
        assert {receiver for _s, receiver, _v in out} == {0, 1, 2}

    def test_forged_off_topology_message_is_rejected_downstream(self):
        graph = RoundGraph(round=1, edges=frozenset({(9, 0), (0, 9)}))
        with pytest.raises(TopologyError):
            deliver(graph, [(9, 2, 99.0)], 0.0, random.Random(0))

    def test_budget_enforced_at_config_level(self):
        strat = AdversaryStrategy(Silent(), {1, 2})
        with pytest.raises(ConfigError):
            strat.validate(n=4, f=1)
        config = builtin_scenario("lemma2_3f_impossible")
        config.adversary = dict(config.adversary, byz_set=[1, 2])
        with pytest.raises(ConfigError):
            config.validate()


class TestCardinalityInRuns:
    @pytest.mark.parametrize(
        "name",
        ["lemma2_3f_impossible", "necessity_improper_mix", "stale_log_overshoot"],
    )
    def test_correct_nodes_never_hear_more_than_f_faulty_senders(self, name):
        trace = simulate(builtin_scenario(name))
        f = trace.params.f
        heard: dict[int, set[int]] = {}
        for rec in trace.rounds:
            for sender, receiver, _value in rec.delivered:
                if sender in trace.byz_set and receiver not in trace.byz_set:
                    heard.setdefault(receiver, set()).add(sender)
        assert all(len(senders) <= f for senders in heard.values())


def test_faulty_nodes_move_with_the_same_mobility_model():
    config = ScenarioConfig(
        name="moving-byz",
        n=3,
        f=1,
        r_c=1,
        epsilon=0.1,
        max_rounds=5,
        arena=(8.0, 8.0),
        radius=2.0,
        mobility={"model": "teleport-random"},
        adversary={"strategy": "silent", "byz_set": [2]},
        initial_values={"mode": "uniform", "range": [0.0, 1.0]},
        seed=11,
    )
    trace = simulate(config)
    positions = [rec.positions[2] for rec in trace.rounds]
    assert len(set(positions)) > 1
