"""Offline trace checkers.

Everything here re-derives its answers from raw trace data (deliveries,
round-start values, retention-window markers) rather than trusting any
simulator-internal state, so a checker can audit traces produced by other
implementations too. The checks come in three families: range guarantees
that must hold in every run (validity, legality, safety), descriptive
classification of nodes into value groups per phase, and the progress
condition whose presence or absence separates converging runs from stuck
ones.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .dynamics import joint_neighbor_set, retained_values
from .errors import AnalysisError
from .protocol import NodeId, Value, is_common_new_start
from .trace import Trace


def check_cardinality(n: int, f: int) -> bool:
    """True when the population can out-vote the fakes: n >= 3f+1."""
    return n >= 3 * f + 1


def legal_reference_round(r: int, r_c: int) -> int:
    """Phase-start round whose extrema bound values at round r.

    Values computed mid-phase may use retained values from earlier in the
    phase, so the binding envelope is the previous phase start: rounds
    inside a phase answer to their own phase start, while a phase-opening
    round (computed during the last round of the previous phase) answers
    to the start of that previous phase.
    """
    if r < 1:
        raise AnalysisError(f"round must be >= 1, got {r}")
    k = (r - 1) // r_c
    m = r - k * r_c
    if k == 0 and m == 1:
        return 1
    if m != 1:
        return k * r_c + 1
    return (k - 1) * r_c + 1


@dataclass(frozen=True)
class Violation:
    node: NodeId
    round: int
    value: Value
    lo: Value
    hi: Value


@dataclass
class RangeCheck:
    ok: bool
    violations: list[Violation] = field(default_factory=list)

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None


def _value_rounds(trace: Trace) -> range:
    # Round-start values exist for rounds 1..T and for the post-run point T+1.
    return range(1, trace.last_round + 2)


def check_validity(trace: Trace) -> RangeCheck:
    """Every correct value stays inside the initial correct range forever."""
    lo = min(trace.initial_values.values())
    hi = max(trace.initial_values.values())
    violations = []
    for r in _value_rounds(trace):
        for i, v in sorted(trace.values_at(r).items()):
            if not lo <= v <= hi:
                violations.append(Violation(i, r, v, lo, hi))
    return RangeCheck(ok=not violations, violations=violations)


def check_legality(trace: Trace) -> RangeCheck:
    """Every correct value is bounded by its reference phase-start extrema."""
    violations = []
    for r in _value_rounds(trace):
        d = legal_reference_round(r, trace.params.r_c)
        lo, hi = trace.v_min(d), trace.v_max(d)
        for i, v in sorted(trace.values_at(r).items()):
            if not lo <= v <= hi:
                violations.append(Violation(i, r, v, lo, hi))
    return RangeCheck(ok=not violations, violations=violations)


def check_safety(trace: Trace) -> RangeCheck:
    """From each phase start on, values never leave that start's envelope."""
    violations = []
    last = trace.last_round + 1
    for r in trace.common_starts():
        lo, hi = trace.v_min(r), trace.v_max(r)
        for rr in range(r, last + 1):
            for i, v in sorted(trace.values_at(rr).items()):
                if not lo <= v <= hi:
                    violations.append(Violation(i, rr, v, lo, hi))
    return RangeCheck(ok=not violations, violations=violations)


class Group(enum.Enum):
    MIN = "Min"
    NIN = "Nin"
    MID = "Mid"
    NAX = "Nax"
    MAX = "Max"


@dataclass(frozen=True)
class PhaseBounds:
    """Value intervals frozen at a phase start.

    Correct nodes fall into: {v_min}, (v_min, v_min+delta),
    [v_min+delta, v_max-delta], (v_max-delta, v_max), {v_max}. For values
    sent by faulty nodes the two extreme intervals extend to infinity.
    """

    phase: int
    start_round: int
    v_min: Value
    v_max: Value
    delta: float

    @property
    def collapsed(self) -> bool:
        return self.v_min == self.v_max


def _check_delta(delta: float, epsilon: float) -> None:
    if not 0.0 < delta <= epsilon / 2.0:
        raise AnalysisError(
            f"delta must lie in (0, epsilon/2] = (0, {epsilon / 2.0}], got {delta}"
        )


def phase_bounds(trace: Trace, k: int, delta: float) -> PhaseBounds:
    _check_delta(delta, trace.params.epsilon)
    start = k * trace.params.r_c + 1
    if not 1 <= start <= trace.last_round + 1:
        raise AnalysisError(f"phase {k} starts beyond the trace")
    return PhaseBounds(
        phase=k,
        start_round=start,
        v_min=trace.v_min(start),
        v_max=trace.v_max(start),
        delta=delta,
    )


def classify_value(v: Value, bounds: PhaseBounds, byzantine: bool = False) -> Group:
    """Single group tag for one value.

    Correct values equal to an extremum take the extremum tag; faulty
    values beyond the range fold into the enlarged extreme intervals. If
    the near-min and near-max intervals overlap (only possible once the
    spread has dropped below 2*delta) the near-min tag wins.
    """
    if bounds.collapsed and not byzantine:
        return Group.MIN
    if byzantine:
        if v <= bounds.v_min:
            return Group.MIN
        if v >= bounds.v_max:
            return Group.MAX
    else:
        if v == bounds.v_min:
            return Group.MIN
        if v == bounds.v_max:
            return Group.MAX
    if bounds.v_min + bounds.delta <= v <= bounds.v_max - bounds.delta:
        return Group.MID
    if v < bounds.v_min + bounds.delta:
        return Group.NIN
    return Group.NAX


@dataclass
class GroupClassification:
    round: int
    bounds: PhaseBounds
    tags: dict[NodeId, Group]
    byz_tags: dict[NodeId, frozenset[Group]]
    collapsed: bool

    def members(self, group: Group) -> set[NodeId]:
        return {i for i, g in self.tags.items() if g is group}

    def counts(self) -> dict[Group, int]:
        out = {g: 0 for g in Group}
        for g in self.tags.values():
            out[g] += 1
        return out


def classify_groups(
    trace: Trace, k: int, r_prime: int, delta: float
) -> GroupClassification:
    """Tag every correct node (and every faulty sender) for one round.

    Correct nodes are tagged by their round-start value against the phase
    intervals; a faulty node gets one tag per distinct value it sent that
    round and so may carry several.
    """
    bounds = phase_bounds(trace, k, delta)
    start = bounds.start_round
    if not start <= r_prime < start + trace.params.r_c:
        raise AnalysisError(
            f"round {r_prime} is not inside phase {k} "
            f"(rounds {start}..{start + trace.params.r_c - 1})"
        )
    tags = {
        i: classify_value(v, bounds)
        for i, v in trace.values_at(r_prime).items()
    }
    byz_tags: dict[NodeId, set[Group]] = {}
    if r_prime <= trace.last_round:
        for sender, _receiver, value in trace.record(r_prime).byz_sent:
            byz_tags.setdefault(sender, set()).add(
                classify_value(value, bounds, byzantine=True)
            )
    return GroupClassification(
        round=r_prime,
        bounds=bounds,
        tags=tags,
        byz_tags={i: frozenset(gs) for i, gs in byz_tags.items()},
        collapsed=bounds.collapsed,
    )


def is_proper(value: Value, observer_group: Group, bounds: PhaseBounds) -> bool:
    """Whether a value can pull an extreme-valued observer off its extreme.

    For a minimum holder anything at least delta above the phase minimum
    qualifies; for a maximum holder anything at least delta below the
    phase maximum. Origin does not matter: a fake value can qualify.
    """
    if observer_group is Group.MIN:
        return value >= bounds.v_min + bounds.delta
    if observer_group is Group.MAX:
        return value <= bounds.v_max - bounds.delta
    raise AnalysisError(f"observer must hold an extreme value, got {observer_group}")


def groups_converged(values: dict[NodeId, Value], delta: float) -> bool:
    """Group-based agreement detector for one phase-start value vector.

    Agreement has been reached exactly when the minimum and maximum
    holders coincide (all values equal) or the near-min and near-max
    intervals overlap, i.e. v_max - delta < v_min + delta. With
    delta = epsilon/2 this matches the spread test spread < epsilon.
    """
    lo = min(values.values())
    hi = max(values.values())
    return lo == hi or hi - delta < lo + delta


@dataclass
class ConvergenceResult:
    reached: bool
    at_round: int | None


def check_convergence(trace: Trace, epsilon: float | None = None) -> ConvergenceResult:
    """First phase start whose correct spread is below epsilon.

    Mid-phase dips do not count: retained old values can push the spread
    back up before the next phase start, so only phase starts are tested.
    Each spread test is cross-validated against the group-based detector
    (evaluated at delta = epsilon/2, where the two are provably the same
    test); any disagreement is an internal error.
    """
    eps = trace.params.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise AnalysisError(f"epsilon must be > 0, got {eps}")
    for r in trace.common_starts():
        by_spread = trace.spread(r) < eps
        by_groups = groups_converged(trace.values_at(r), eps / 2.0)
        if by_spread != by_groups:
            raise AnalysisError(
                f"convergence detectors disagree at round {r}: "
                f"spread={trace.spread(r)}, eps={eps}"
            )
        if by_spread:
            return ConvergenceResult(reached=True, at_round=r)
    return ConvergenceResult(reached=False, at_round=None)


@dataclass(frozen=True)
class ConditionWitness:
    node: NodeId
    round: int
    senders: tuple[NodeId, ...]


@dataclass
class ConditionVerdict:
    phase: int
    satisfied: bool
    vacuous: bool = False
    witness: ConditionWitness | None = None


def _proper_senders(
    trace: Trace, i: NodeId, r_prime: int, group: Group,
    bounds: PhaseBounds, strict: bool,
) -> list[NodeId]:
    """Senders whose contribution to node i's log at r_prime is proper.

    Default mode judges the value actually retained (the most recent one);
    strict mode additionally requires every value the sender delivered in
    the window to have been proper at its delivery round.
    """
    retained = retained_values(trace, i, r_prime)
    senders = []
    for j in sorted(retained):
        if not is_proper(retained[j], group, bounds):
            continue
        if strict:
            start = trace.record(r_prime).local_start[i]
            all_proper = True
            for rr in range(start, r_prime + 1):
                for sender, receiver, value in trace.record(rr).delivered:
                    if sender == j and receiver == i:
                        if not is_proper(value, group, bounds):
                            all_proper = False
            if not all_proper:
                continue
        senders.append(j)
    return senders


def check_condition(
    trace: Trace, k: int, delta: float, strict: bool = False
) -> ConditionVerdict:
    """Quantity-and-quality test for one phase.

    Satisfied when some correct node holding an extreme value at the phase
    start gathers, at some round of the phase, proper values from at least
    f+1 distinct senders of its joint neighbor set. Phases that begin
    already inside the agreement band are vacuously satisfied.
    """
    bounds = phase_bounds(trace, k, delta)
    start = bounds.start_round
    if trace.spread(start) < trace.params.epsilon:
        return ConditionVerdict(phase=k, satisfied=True, vacuous=True)
    values = trace.values_at(start)
    extremes = [
        (i, Group.MIN if values[i] == bounds.v_min else Group.MAX)
        for i in sorted(values)
        if values[i] in (bounds.v_min, bounds.v_max)
    ]
    f = trace.params.f
    last_phase_round = min(start + trace.params.r_c - 1, trace.last_round)
    for r_prime in range(start, last_phase_round + 1):
        for i, group in extremes:
            joint = joint_neighbor_set(trace, i, r_prime)
            proper = [
                j for j in _proper_senders(trace, i, r_prime, group, bounds, strict)
                if j in joint
            ]
            if len(proper) >= f + 1:
                return ConditionVerdict(
                    phase=k,
                    satisfied=True,
                    witness=ConditionWitness(i, r_prime, tuple(sorted(proper))),
                )
    return ConditionVerdict(phase=k, satisfied=False)


def validate_witness(trace: Trace, verdict: ConditionVerdict, delta: float) -> bool:
    """Re-check a satisfied verdict's witness against raw deliveries."""
    if not verdict.satisfied or verdict.vacuous:
        return True
    w = verdict.witness
    if w is None or len(w.senders) < trace.params.f + 1:
        return False
    bounds = phase_bounds(trace, verdict.phase, delta)
    values = trace.values_at(bounds.start_round)
    if values[w.node] == bounds.v_min:
        group = Group.MIN
    elif values[w.node] == bounds.v_max:
        group = Group.MAX
    else:
        return False
    joint = joint_neighbor_set(trace, w.node, w.round)
    retained = retained_values(trace, w.node, w.round)
    for j in w.senders:
        if j not in joint or j not in retained:
            return False
        if not is_proper(retained[j], group, bounds):
            return False
    return True


def trace_phases(trace: Trace) -> list[int]:
    """Phases whose rounds are (at least partly) covered by the trace."""
    return [trace.phase_of(r) for r in trace.common_starts() if r <= trace.last_round]


@dataclass
class ConditionReport:
    per_phase: list[ConditionVerdict]
    mode: str
    window: int | None
    ok: bool


def condition_report(
    trace: Trace,
    delta: float,
    mode: str = "per-phase",
    window: int = 3,
    strict: bool = False,
) -> ConditionReport:
    """Aggregate condition verdicts over every phase of a trace.

    In ``per-phase`` mode all phases must be satisfied. In
    ``infinitely-often`` mode it suffices that every window of ``window``
    consecutive phases contains a satisfied one (a finite-horizon proxy
    for "satisfied infinitely often").
    """
    verdicts = [check_condition(trace, k, delta, strict) for k in trace_phases(trace)]
    flags = [v.satisfied for v in verdicts]
    if mode == "per-phase":
        ok = all(flags)
    elif mode == "infinitely-often":
        if window < 1:
            raise AnalysisError(f"window must be >= 1, got {window}")
        if len(flags) <= window:
            ok = any(flags) if flags else True
        else:
            ok = all(
                any(flags[i:i + window]) for i in range(len(flags) - window + 1)
            )
    else:
        raise AnalysisError(f"unknown condition mode {mode!r}")
    return ConditionReport(
        per_phase=verdicts,
        mode=mode,
        window=window if mode == "infinitely-often" else None,
        ok=ok,
    )


@dataclass(frozen=True)
class ProgressViolation:
    phase: int
    kind: str
    detail: str


@dataclass
class ProgressReport:
    ok: bool
    violations: list[ProgressViolation]
    max_stagnant_streak: int
    examined_phases: int


def check_phase_progress(
    trace: Trace, delta: float, verdicts: list[ConditionVerdict] | None = None
) -> ProgressReport:
    """Extremum-holder attrition across stagnant phases.

    For consecutive phase starts where the condition held, agreement was
    not yet reached, and neither extremum moved, the combined number of
    minimum and maximum holders must shrink; and no stagnant stretch may
    last n phases. Precomputed condition verdicts may be passed in.
    """
    eps = trace.params.epsilon
    n = trace.params.n
    starts = trace.common_starts()
    by_phase = {} if verdicts is None else {v.phase: v for v in verdicts}
    violations: list[ProgressViolation] = []
    streak = 0
    max_streak = 0
    examined = 0
    for idx in range(len(starts) - 1):
        r, r_next = starts[idx], starts[idx + 1]
        k = trace.phase_of(r)
        if trace.spread(r) < eps:
            streak = 0
            continue
        verdict = by_phase.get(k) or check_condition(trace, k, delta)
        if not verdict.satisfied:
            streak = 0
            continue
        examined += 1
        lo, hi = trace.v_min(r), trace.v_max(r)
        lo2, hi2 = trace.v_min(r_next), trace.v_max(r_next)
        if lo2 != lo or hi2 != hi:
            streak = 0
            continue
        streak += 1
        max_streak = max(max_streak, streak)
        before = _extreme_holder_count(trace, r)
        after = _extreme_holder_count(trace, r_next)
        if after >= before:
            violations.append(
                ProgressViolation(
                    phase=k,
                    kind="no-attrition",
                    detail=(
                        f"extrema unchanged over phase {k} but extreme holders "
                        f"went {before} -> {after}"
                    ),
                )
            )
        if streak >= n:
            violations.append(
                ProgressViolation(
                    phase=k,
                    kind="stagnation",
                    detail=f"extrema unchanged for {streak} phases (n={n})",
                )
            )
    return ProgressReport(
        ok=not violations,
        violations=violations,
        max_stagnant_streak=max_streak,
        examined_phases=examined,
    )


def _extreme_holder_count(trace: Trace, r: int) -> int:
    values = trace.values_at(r)
    lo = min(values.values())
    hi = max(values.values())
    return sum(1 for v in values.values() if v == lo) + sum(
        1 for v in values.values() if v == hi
    )


def spread_series(trace: Trace, delta: float) -> list[dict]:
    """Per-round extrema, spread, and group cardinalities for plotting."""
    rows = []
    r_c = trace.params.r_c
    for r in range(1, trace.last_round + 2):
        k = trace.phase_of(r)
        classification = classify_groups(trace, k, r, delta)
        counts = classification.counts()
        rows.append(
            {
                "round": r,
                "phase": k,
                "common_start": is_common_new_start(r, r_c),
                "v_min": trace.v_min(r),
                "v_max": trace.v_max(r),
                "spread": trace.spread(r),
                "c_min": counts[Group.MIN],
                "c_nin": counts[Group.NIN],
                "c_mid": counts[Group.MID],
                "c_nax": counts[Group.NAX],
                "c_max": counts[Group.MAX],
            }
        )
    return rows
