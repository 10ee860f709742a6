"""Activation-count drift and message-window properties of two timed nodes.

Both questions reduce to a finite disjunction of linear feasibility queries
over the symbolic period, start and jitter variables of a generic pair of
nodes ``i`` (under study) and ``j`` (any other node). Every node draws from
the same parameter intervals, so one generic pair covers all pairs.

Drift is observed in one of two ways:

``"activation"`` (default)
    at the instants where node ``i`` fires, counting that firing. Node ``j``
    may fire at the same instant in either order, so its window is closed on
    both sides.
``"any"``
    at an arbitrary time ``t``, with half-open windows
    ``A(k) <= t < A(k+1)``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .simulator import MaxTime, NodeConfig, SimConfig, simulate
from .timebase import (
    START_M,
    START_T,
    ConstraintSystem,
    LinExpr,
    ResourceLimitExceeded,
    SymVar,
    TimePoint,
    TimingConstants,
    TABLE1,
    Period,
    Start,
    activation_time_expr,
    find_witness,
    format_rat,
    standard_bounds,
)

PROVED = "proved"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"

NODE_I = 0
NODE_J = 1
OBSERVE_ACTIVATION = "activation"
OBSERVE_ANY = "any"


@dataclass(frozen=True)
class DriftSpec:
    constants: TimingConstants = TABLE1
    max_activations: int = 13
    lower: int = -2
    upper: int = 1
    start_convention: str = START_T
    observe: str = OBSERVE_ACTIVATION
    start_shift: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if not self.lower <= 0 <= self.upper:
            raise ValueError("drift bounds must satisfy lower <= 0 <= upper")
        if self.max_activations < 1:
            raise ValueError("max_activations must be >= 1")
        if self.observe not in (OBSERVE_ACTIVATION, OBSERVE_ANY):
            raise ValueError(f"unknown observation mode {self.observe!r}")
        if self.start_convention not in (START_M, START_T):
            raise ValueError(f"unknown start convention {self.start_convention!r}")


@dataclass(frozen=True)
class DriftCounterexample:
    """Latest activation indices of ``i`` and ``j`` at ``violation_time``
    (``-1``: not fired yet) plus the full schedule."""

    k_i: int
    k_j: int
    witness: dict[SymVar, Fraction]
    violation_time: Fraction

    def to_json(self) -> dict:
        return {
            "k_i": self.k_i,
            "k_j": self.k_j,
            "violation_time": format_rat(self.violation_time),
            "witness": {str(v): format_rat(q) for v, q in sorted(self.witness.items())},
        }


@dataclass
class DriftVerdict:
    property: str
    status: str
    queries: int = 0
    counterexample: DriftCounterexample | None = None
    reason: str = ""
    pairs: list[tuple[int, int]] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        out = {"property": self.property, "verdict": self.status, "queries": self.queries}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample.to_json()
        if self.reason:
            out["reason"] = self.reason
        return out


# ---------------------------------------------------------------------------
# encodings


def _t() -> LinExpr:
    return LinExpr.of(TimePoint("t"))


def encode_count_window(
    node: int,
    k: int,
    t: LinExpr | SymVar | None = None,
    constants: TimingConstants = TABLE1,
    convention: str = START_T,
    closed: bool = False,
    start_shift: Fraction = Fraction(0),
) -> ConstraintSystem:
    """Activation ``k`` of ``node`` is the latest one at time ``t``.

    ``A(k) <= t < A(k+1)`` where ``A`` is :func:`activation_time_expr`; the
    right edge becomes ``<=`` when ``closed``. ``k = -1`` means the node has
    not fired yet (``t < Start``). The node's standard bounds are included.
    """
    if k < -1:
        raise ValueError("activation index must be >= -1")
    t = _t() if t is None else LinExpr.of(t)
    cons = []
    if k >= 0:
        cons.append(activation_time_expr(node, k).le(t))
    upper = activation_time_expr(node, k + 1)
    cons.append(t.le(upper) if closed else t.lt(upper))
    return standard_bounds(node, k + 1, constants, convention, start_shift) + cons


def violating_pairs(spec: DriftSpec) -> list[tuple[int, int]]:
    """``(k_i, k_j)`` activation-index pairs that would break the drift window.

    In ``any`` mode both indices range over ``[0, max]``. In ``activation``
    mode ``k_j`` may also be ``-1`` (j not fired yet) and ``k_i`` extends to
    ``max - lower`` so every too-slow ``j`` with ``k_j <= max`` is covered.
    """
    if spec.observe == OBSERVE_ANY:
        range_i = range(0, spec.max_activations + 1)
        range_j = range(0, spec.max_activations + 1)
    else:
        range_i = range(0, spec.max_activations - spec.lower + 1)
        range_j = range(-1, spec.max_activations + 1)
    return [
        (ki, kj)
        for ki in range_i
        for kj in range_j
        if not spec.lower <= kj - ki <= spec.upper
    ]


def drift_system(spec: DriftSpec, k_i: int, k_j: int) -> ConstraintSystem:
    tc, conv, shift = spec.constants, spec.start_convention, spec.start_shift
    t = _t()
    if spec.observe == OBSERVE_ANY:
        return encode_count_window(NODE_I, k_i, t, tc, conv, False, shift) + encode_count_window(
            NODE_J, k_j, t, tc, conv, False, shift
        )
    at_i = standard_bounds(NODE_I, k_i, tc, conv, shift) + [t.eq(activation_time_expr(NODE_I, k_i))]
    return at_i + encode_count_window(NODE_J, k_j, t, tc, conv, True, shift)


def _solve(system: ConstraintSystem):
    try:
        return find_witness(system)
    except ResourceLimitExceeded as exc:
        return exc


def _run_queries(systems: list[ConstraintSystem], jobs: int):
    """Yield solver results in order; stops consuming once a witness is seen."""
    if jobs <= 1 or len(systems) < 8:
        for s in systems:
            yield _solve(s)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(_solve, systems, chunksize=4)


def verify_p3(spec: DriftSpec = DriftSpec(), jobs: int = 1) -> DriftVerdict:
    pairs = violating_pairs(spec)
    systems = [drift_system(spec, ci, cj) for ci, cj in pairs]
    verdict = DriftVerdict("P3", PROVED, pairs=pairs)
    for (ki, kj), result in zip(pairs, _run_queries(systems, jobs)):
        verdict.queries += 1
        if isinstance(result, ResourceLimitExceeded):
            verdict.status = INCONCLUSIVE
            verdict.reason = str(result)
            return verdict
        if result is not None:
            t = result[TimePoint("t")]
            verdict.status = REFUTED
            verdict.counterexample = DriftCounterexample(ki, kj, result, t)
            return verdict
    return verdict


# ---------------------------------------------------------------------------
# message window (every other node fires between two code executions)


def lemma2_systems(
    constants: TimingConstants, reads_every: int, probe_depth: int, convention: str = START_M
) -> list[tuple[tuple[int, int], ConstraintSystem]]:
    """One query per ``(k, m)``: node j fires at index ``m`` no later than
    ``t_i^k`` and next no earlier than ``t_i^(k+r)``. ``m = -1`` stands for
    "j has not fired yet"."""
    out = []
    r = reads_every
    for k in range(0, probe_depth - r + 1):
        left = activation_time_expr(NODE_I, k)
        right = activation_time_expr(NODE_I, k + r)
        base = standard_bounds(NODE_I, k + r, constants, convention)
        for m in range(-1, probe_depth + 1):
            sys = base + standard_bounds(NODE_J, m + 1, constants, convention)
            cons = [activation_time_expr(NODE_J, m + 1).ge(right)]
            if m >= 0:
                cons.append(activation_time_expr(NODE_J, m).le(left))
            out.append(((k, m), sys + cons))
    return out


def verify_lemma2(
    constants: TimingConstants = TABLE1,
    reads_every: int = 2,
    probe_depth: int = 13,
    convention: str = START_M,
    jobs: int = 1,
) -> DriftVerdict:
    """Decide whether every node fires strictly inside each window of
    ``reads_every`` activations of another node."""
    if reads_every < 1:
        raise ValueError("reads_every must be >= 1")
    if probe_depth < reads_every:
        raise ValueError("probe_depth must be >= reads_every")
    queries = lemma2_systems(constants, reads_every, probe_depth, convention)
    verdict = DriftVerdict(f"lemma2(reads_every={reads_every})", PROVED)
    for ((k, m), _), result in zip(queries, _run_queries([s for _, s in queries], jobs)):
        verdict.queries += 1
        if isinstance(result, ResourceLimitExceeded):
            verdict.status = INCONCLUSIVE
            verdict.reason = str(result)
            return verdict
        if result is not None:
            t = activation_time_expr(NODE_I, k + reads_every).evaluate(result)
            verdict.status = REFUTED
            verdict.counterexample = DriftCounterexample(k, m, result, t)
            return verdict
    return verdict


def lemma2_closed_form(constants: TimingConstants, reads_every: int = 2) -> bool:
    """True iff ``reads_every`` shortest spacings exceed the longest one."""
    return reads_every * constants.min_spacing > constants.max_spacing


# ---------------------------------------------------------------------------
# witness replay


def _jitters(witness: dict[SymVar, Fraction], node: int) -> list[Fraction]:
    found = sorted((v.index, q) for v, q in witness.items() if v.kind == "jitter" and v.node == node)
    return [q for _, q in found]


def replay_config(
    witness: dict[SymVar, Fraction],
    constants: TimingConstants,
    horizon: Fraction,
    j_first: bool,
) -> tuple[SimConfig, dict[int, list[Fraction]]]:
    """Two-node simulator configuration realising ``witness``.

    Node i gets id 1 and node j id 2. ``j_first`` puts j at index 0 so that it
    wins ties.
    """
    nodes = {
        NODE_I: NodeConfig(1, witness[Period(NODE_I)], witness[Start(NODE_I)]),
        NODE_J: NodeConfig(2, witness[Period(NODE_J)], witness[Start(NODE_J)]),
    }
    order = (NODE_J, NODE_I) if j_first else (NODE_I, NODE_J)
    cfg = SimConfig(
        constants=constants,
        nodes=tuple(nodes[n] for n in order),
        horizon=MaxTime(horizon),
        start_convention=START_T,
    )
    table = {1: _jitters(witness, NODE_I), 2: _jitters(witness, NODE_J)}
    return cfg, table


def replay_drift(cex: DriftCounterexample, spec: DriftSpec) -> tuple[int, int]:
    """Simulate the witness schedule and return the observed ``(k_i, k_j)``."""
    t = cex.violation_time
    w = cex.witness
    if spec.observe == OBSERVE_ANY:
        cfg, table = replay_config(w, spec.constants, t, j_first=False)
        trace = simulate(cfg, table)
        return len(trace.times(1)) - 1, len(trace.times(2)) - 1
    # j's firing at exactly t counts only if it precedes i's
    j_first = cex.k_j >= 0 and activation_time_expr(NODE_J, cex.k_j).evaluate(w) == t
    cfg, table = replay_config(w, spec.constants, t, j_first)
    trace = simulate(cfg, table)
    seen_i = seen_j = 0
    for ev in trace.events:
        if ev.node_id == 1:
            seen_i += 1
            if seen_i == cex.k_i + 1:
                break
        else:
            seen_j += 1
    return seen_i - 1, seen_j - 1


def replay_lemma2(cex: DriftCounterexample, constants: TimingConstants, reads_every: int) -> int:
    """Number of firings of j strictly between t_i^k and t_i^(k+r) in the replay."""
    w = cex.witness
    left = activation_time_expr(NODE_I, cex.k_i).evaluate(w)
    right = activation_time_expr(NODE_I, cex.k_i + reads_every).evaluate(w)
    cfg, table = replay_config(w, constants, right, j_first=False)
    trace = simulate(cfg, table)
    return sum(1 for t in trace.times(2) if left < t < right)
