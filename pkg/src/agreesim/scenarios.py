"""Scenario configuration: schema, validation, files, builtin library.

A scenario is a plain JSON document (schema version 1) describing the
population, protocol parameters, arena and radio range, mobility model,
adversary strategy, initial values and positions, and the master seed.
The builtin library bundles the constructions used by the acceptance
suite, from a well-connected converging baseline to adversarial and
partitioned setups that must provably stay stuck.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError

SCENARIO_SCHEMA = 1


@dataclass
class ScenarioConfig:
    name: str
    n: int
    f: int
    r_c: int
    epsilon: float
    max_rounds: int | None = None
    delta: float | None = None
    arena: tuple[float, float] = (10.0, 10.0)
    radius: float = 1.0
    loss_rate: float = 0.0
    mobility: dict = field(default_factory=lambda: {"model": "stationary"})
    adversary: dict = field(default_factory=lambda: {"strategy": "silent", "byz_set": []})
    initial_values: dict = field(default_factory=lambda: {"mode": "uniform", "range": [0.0, 1.0]})
    initial_positions: dict = field(default_factory=lambda: {"mode": "uniform"})
    seed: int = 0

    @property
    def byz_set(self) -> set[int]:
        return set(self.adversary.get("byz_set", []))

    @property
    def correct_ids(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.byz_set]

    @property
    def effective_delta(self) -> float:
        return self.epsilon / 2.0 if self.delta is None else self.delta

    @property
    def effective_max_rounds(self) -> int:
        return 100 * self.r_c * self.n if self.max_rounds is None else self.max_rounds

    def validate(self) -> None:
        errors = []
        if self.n < 1:
            errors.append(f"n must be >= 1, got {self.n}")
        if self.f < 0:
            errors.append(f"f must be >= 0, got {self.f}")
        if self.r_c < 1:
            errors.append(f"r_c must be >= 1, got {self.r_c}")
        if not self.epsilon > 0:
            errors.append(f"epsilon must be > 0, got {self.epsilon}")
        if self.delta is not None and not 0 < self.delta <= self.epsilon / 2.0:
            errors.append(
                f"delta must lie in (0, epsilon/2], got {self.delta}"
            )
        if self.effective_max_rounds < 1:
            errors.append(f"max_rounds must be >= 1, got {self.max_rounds}")
        if len(self.arena) != 2 or self.arena[0] <= 0 or self.arena[1] <= 0:
            errors.append(f"arena must be two positive sides, got {self.arena}")
        if not self.radius > 0:
            errors.append(f"radius must be > 0, got {self.radius}")
        if not 0.0 <= self.loss_rate <= 1.0:
            errors.append(f"loss_rate must be in [0,1], got {self.loss_rate}")
        byz = self.byz_set
        if len(byz) > self.f:
            errors.append(f"{len(byz)} faulty nodes exceed the bound f={self.f}")
        if any(not 0 <= b < self.n for b in byz):
            errors.append(f"faulty ids {sorted(byz)} must lie in 0..{self.n - 1}")
        model = self.mobility.get("model")
        if model not in {"stationary", "random-waypoint", "scripted", "teleport-random"}:
            errors.append(f"unknown mobility model {model!r}")
        strategy = self.adversary.get("strategy")
        if strategy not in {"silent", "fixed-value", "extreme-split", "random-legal", "scripted"}:
            errors.append(f"unknown adversary strategy {strategy!r}")
        values = self.initial_values
        if values.get("mode") == "explicit":
            got = len(values.get("values", []))
            want = len(self.correct_ids)
            if got != want:
                errors.append(
                    f"explicit initial values: got {got}, need one per correct node ({want})"
                )
        elif values.get("mode") != "uniform":
            errors.append(f"unknown initial_values mode {values.get('mode')!r}")
        positions = self.initial_positions
        if positions.get("mode") == "explicit":
            coords = positions.get("coords", {})
            missing = [i for i in range(self.n) if str(i) not in coords and i not in coords]
            if missing:
                errors.append(f"explicit positions missing nodes {missing}")
        elif positions.get("mode") != "uniform":
            errors.append(f"unknown initial_positions mode {positions.get('mode')!r}")
        if errors:
            raise ConfigError("; ".join(errors))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schema"] = SCENARIO_SCHEMA
        out["arena"] = list(self.arena)
        return out

    @staticmethod
    def from_dict(obj: dict) -> "ScenarioConfig":
        data = dict(obj)
        schema = data.pop("schema", SCENARIO_SCHEMA)
        if schema != SCENARIO_SCHEMA:
            raise ConfigError(f"unsupported scenario schema {schema!r}")
        unknown = set(data) - {f.name for f in ScenarioConfig.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"unknown scenario fields {sorted(unknown)}")
        if "arena" in data:
            data["arena"] = tuple(data["arena"])
        try:
            return ScenarioConfig(**data)
        except TypeError as exc:
            raise ConfigError(f"bad scenario document: {exc}") from None


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    config = ScenarioConfig.from_dict(obj)
    table_file = config.adversary.get("table_file")
    if table_file is not None and not Path(table_file).is_absolute():
        config.adversary = dict(
            config.adversary, table_file=str(Path(path).parent / table_file)
        )
    config.validate()
    return config


def _square(cx: float, cy: float, side: float) -> list[tuple[float, float]]:
    return [(cx, cy), (cx + side, cy), (cx, cy + side), (cx + side, cy + side)]


def fully_connected_baseline() -> ScenarioConfig:
    """Everyone hears everyone, no faults active: spread halves and closes."""
    coords = {str(i): list(p) for i, p in enumerate(_square(4.0, 4.0, 1.0))}
    return ScenarioConfig(
        name="fully_connected_baseline",
        n=4,
        f=1,
        r_c=1,
        epsilon=0.1,
        max_rounds=40,
        arena=(10.0, 10.0),
        radius=20.0,
        loss_rate=0.0,
        mobility={"model": "stationary"},
        adversary={"strategy": "silent", "byz_set": []},
        initial_values={"mode": "explicit", "values": [0.0, 1.0, 2.0, 3.0]},
        initial_positions={"mode": "explicit", "coords": coords},
        seed=1,
    )


def lemma2_3f_impossible() -> ScenarioConfig:
    """Population of 3f: the extreme holders can never gather f+1 proper values.

    One max holder, one min holder, one faulty node feeding each extreme
    holder values beyond its own extreme. Each correct node ever sees only
    f proper values, so no admission test passes and values never move.
    """
    return ScenarioConfig(
        name="lemma2_3f_impossible",
        n=3,
        f=1,
        r_c=2,
        epsilon=1.0,
        max_rounds=100,
        arena=(10.0, 10.0),
        radius=2.5,
        loss_rate=0.0,
        mobility={"model": "stationary"},
        adversary={"strategy": "extreme-split", "v_hi": 11.0, "v_lo": -1.0, "byz_set": [2]},
        initial_values={"mode": "explicit", "values": [10.0, 0.0]},
        initial_positions={
            "mode": "explicit",
            "coords": {"0": [4.0, 5.0], "1": [6.0, 5.0], "2": [5.0, 5.0]},
        },
        seed=2,
    )


def necessity_f_proper() -> ScenarioConfig:
    """Each extreme holder hears exactly f proper values: trimming eats them.

    Two nodes at the minimum and two at the maximum, wired in a ring so
    every node hears one same-valued peer and one opposite-valued peer.
    Admission passes, but the single proper value is always removed and
    every average reproduces the node's own value.
    """
    coords = {str(i): list(p) for i, p in enumerate(_square(1.0, 1.0, 1.0))}
    coords["4"] = [8.0, 8.0]
    return ScenarioConfig(
        name="necessity_f_proper",
        n=5,
        f=1,
        r_c=2,
        epsilon=1.0,
        max_rounds=40,
        arena=(10.0, 10.0),
        radius=1.0,
        loss_rate=0.0,
        mobility={"model": "stationary"},
        adversary={"strategy": "silent", "byz_set": [4]},
        initial_values={"mode": "explicit", "values": [0.0, 0.0, 10.0, 10.0]},
        initial_positions={"mode": "explicit", "coords": coords},
        seed=3,
    )


def necessity_improper_mix() -> ScenarioConfig:
    """f+1 values arrive but one is improper; trimming removes the proper ones.

    Same split population, plus a faulty node adjacent to everyone that
    echoes each side's own extreme back at it. The echo makes the
    admission test pass, yet the surviving values all equal the receiver's
    own value, so nothing ever moves.
    """
    coords = {str(i): list(p) for i, p in enumerate(_square(1.0, 1.0, 1.0))}
    coords["4"] = [1.5, 1.5]
    return ScenarioConfig(
        name="necessity_improper_mix",
        n=5,
        f=1,
        r_c=2,
        epsilon=1.0,
        max_rounds=40,
        arena=(10.0, 10.0),
        radius=1.0,
        loss_rate=0.0,
        mobility={"model": "stationary"},
        adversary={"strategy": "extreme-split", "v_hi": 10.0, "v_lo": 0.0, "byz_set": [4]},
        initial_values={"mode": "explicit", "values": [0.0, 0.0, 10.0, 10.0]},
        initial_positions={"mode": "explicit", "coords": coords},
        seed=4,
    )


def partition_never() -> ScenarioConfig:
    """Two cliques that never hear each other keep their distinct values."""
    coords = {str(i): list(p) for i, p in enumerate(_square(1.0, 1.0, 1.0))}
    for i, p in enumerate(_square(8.0, 8.0, 1.0)):
        coords[str(i + 4)] = list(p)
    return ScenarioConfig(
        name="partition_never",
        n=8,
        f=0,
        r_c=1,
        epsilon=1.0,
        max_rounds=30,
        arena=(12.0, 12.0),
        radius=1.5,
        loss_rate=0.0,
        mobility={"model": "stationary"},
        adversary={"strategy": "silent", "byz_set": []},
        initial_values={
            "mode": "explicit",
            "values": [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0],
        },
        initial_positions={"mode": "explicit", "coords": coords},
        seed=5,
    )


def fig1_scripted_path() -> ScenarioConfig:
    """A wanderer visits stations over four rounds, pooling one value per stop.

    Node 0 starts apart, then occupies the first station for two rounds
    and two further stations on the following rounds. With a retention
    window spanning the walk, the values collected at different stops
    combine into one admission-passing log.
    """
    return ScenarioConfig(
        name="fig1_scripted_path",
        n=4,
        f=1,
        r_c=4,
        epsilon=0.1,
        max_rounds=8,
        arena=(10.0, 10.0),
        radius=1.0,
        loss_rate=0.0,
        mobility={
            "model": "scripted",
            "waypoints": {
                "0": [[3.0, 5.0], [3.0, 5.0], [5.0, 5.0], [7.0, 5.0]],
            },
        },
        adversary={"strategy": "silent", "byz_set": []},
        initial_values={"mode": "explicit", "values": [0.0, 1.0, 2.0, 3.0]},
        initial_positions={
            "mode": "explicit",
            "coords": {
                "0": [1.0, 5.0],
                "1": [3.0, 5.0],
                "2": [5.0, 5.0],
                "3": [7.0, 5.0],
            },
        },
        seed=6,
    )


def stale_log_overshoot() -> ScenarioConfig:
    """Retained old values push one node above the current maximum mid-phase.

    A high-valued visitor deposits its value with an isolated node and then
    averages itself down elsewhere; a faulty node later tops up the stale
    entry to f+1 on the high side. The isolated node then averages up past
    every current value, breaching the per-round envelope mid-phase while
    the phase-start envelope still holds.
    """
    return ScenarioConfig(
        name="stale_log_overshoot",
        n=5,
        f=1,
        r_c=4,
        epsilon=5.5,
        max_rounds=8,
        arena=(12.0, 12.0),
        radius=1.0,
        loss_rate=0.0,
        mobility={
            "model": "scripted",
            "waypoints": {
                "1": [[1.5, 2.0], [5.5, 2.0]],
                "4": [[10.0, 10.0], [10.0, 10.0], [1.5, 2.0], [10.0, 10.0]],
            },
        },
        adversary={"strategy": "fixed-value", "value": 10.0, "byz_set": [4]},
        initial_values={"mode": "explicit", "values": [2.0, 10.0, 0.0, 0.0]},
        initial_positions={
            "mode": "explicit",
            "coords": {
                "0": [1.0, 2.0],
                "1": [1.5, 2.0],
                "2": [5.0, 2.0],
                "3": [6.0, 2.0],
                "4": [10.0, 10.0],
            },
        },
        seed=7,
    )


LIBRARY = {
    "fully_connected_baseline": fully_connected_baseline,
    "lemma2_3f_impossible": lemma2_3f_impossible,
    "necessity_f_proper": necessity_f_proper,
    "necessity_improper_mix": necessity_improper_mix,
    "partition_never": partition_never,
    "fig1_scripted_path": fig1_scripted_path,
    "stale_log_overshoot": stale_log_overshoot,
}


def builtin_scenario(name: str) -> ScenarioConfig:
    if name not in LIBRARY:
        raise ConfigError(
            f"unknown builtin scenario {name!r}; available: {', '.join(sorted(LIBRARY))}"
        )
    config = LIBRARY[name]()
    config.validate()
    return config
