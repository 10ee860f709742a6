"""Node-versus-environment abstraction of the election network.

One node ``i`` is tracked exactly; everything the rest of the network can put
in its mailbox is collapsed to the single predicate the update rule reads,
"some sender has a larger id". Assumptions restrict which environments are
possible; guarantees are checked by exhaustive breadth-first exploration.

:func:`concrete_scaling_run` explores the same space but materialises all
``p`` messages per step and runs the real :func:`update_node`, which both
cross-checks the collapse and exhibits the linear cost in ``p``.
"""

from __future__ import annotations

import math
import statistics
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .protocol import ElectionState, Message, NodeCore, update_node

F, C, L = ElectionState.FOLLOWER, ElectionState.CANDIDATE, ElectionState.LEADER

PROVED = "proved"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"
NOT_ESTABLISHED = "not-established"


class Role(str, Enum):
    MAX_ID = "max-id"
    NOT_MAX_ID = "not-max-id"

    def __str__(self) -> str:
        return self.value


class Assumption(str, Enum):
    CLEAN = "clean"
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"

    def __str__(self) -> str:
        return self.value


class Guarantee(str, Enum):
    P1 = "p1"
    P2 = "p2"
    P4 = "p4"

    def __str__(self) -> str:
        return self.value


ALL_ASSUMPTIONS = frozenset(Assumption)
FULL_STACK = frozenset({Assumption.CLEAN, Assumption.P1, Assumption.P2, Assumption.P3})


@dataclass(frozen=True, order=True)
class AbstractNodeState:
    role: Role
    state: ElectionState
    even: bool
    activation_count: int = 0

    def __str__(self) -> str:
        parity = "even" if self.even else "odd"
        return f"{self.role}:{self.state}/{parity}@{self.activation_count}"


@dataclass(frozen=True, order=True)
class EnvClass:
    higher_id_present: bool
    consistent: bool = True

    def __str__(self) -> str:
        return "higher" if self.higher_id_present else "no-higher"


def holds(g: Guarantee, s: AbstractNodeState) -> bool:
    if g is Guarantee.P1:
        return not (s.activation_count >= 2 and s.role is Role.NOT_MAX_ID) or s.state is F
    if g is Guarantee.P2:
        return not (s.activation_count >= 2 and s.role is Role.MAX_ID) or s.state in (C, L)
    return not (s.activation_count >= 4 and s.role is Role.MAX_ID) or s.state is L


def initial_states() -> list[AbstractNodeState]:
    return [
        AbstractNodeState(role, state, even, 0)
        for role in Role
        for state in ElectionState
        for even in (True, False)
    ]


def sender_states(
    sender_is_max: bool,
    count_i: int,
    assumptions: frozenset[Assumption],
    p3_bounds: tuple[int, int] = (-2, 1),
) -> tuple[ElectionState, ...]:
    """States a message from one environment node may carry.

    P1/P2 only constrain senders with at least two activations. Without P3 the
    sender's count is unknown, so nothing is discharged; with P3 it is at
    least ``count_i + lower``.
    """
    known_mature = Assumption.P3 in assumptions and count_i + p3_bounds[0] >= 2
    if known_mature and sender_is_max and Assumption.P2 in assumptions:
        return (C, L)
    if known_mature and not sender_is_max and Assumption.P1 in assumptions:
        return (F,)
    return (F, C, L)


def feasible_env_classes(
    s: AbstractNodeState,
    assumptions: Iterable[Assumption],
    p: int,
    p3_bounds: tuple[int, int] = (-2, 1),
) -> set[EnvClass]:
    if p < 1:
        raise ValueError("p must be >= 1")
    assumptions = frozenset(assumptions)
    if s.role is Role.MAX_ID or p == 1:
        return {EnvClass(False)}
    if Assumption.CLEAN in assumptions:
        return {EnvClass(True)}
    return {EnvClass(True), EnvClass(False)}


_DOMINATING = Message(2, F)


def abstract_step(s: AbstractNodeState, env: EnvClass) -> AbstractNodeState:
    """One activation of node i, run through the real update rule.

    Node i is given id 1 and, if a higher id is present, one message from id 2.
    """
    mailbox = (_DOMINATING,) if env.higher_id_present else ()
    core, _ = update_node(NodeCore(1, s.state, s.even, mailbox))
    return AbstractNodeState(s.role, core.state, core.even_activation, s.activation_count + 1)


@dataclass(frozen=True)
class TraceStep:
    count: int
    even_before: bool
    env: EnvClass | None
    state: ElectionState

    def __str__(self) -> str:
        parity = "even" if self.even_before else "odd"
        env = "-" if self.env is None else str(self.env)
        return f"{self.count}\t{parity}\t{env}\t{self.state}"


@dataclass
class AbstractResult:
    guarantee: Guarantee
    assumptions: frozenset[Assumption]
    status: str
    states: int
    depth: int
    trace: list[TraceStep] = field(default_factory=list)
    role: Role | None = None
    wall_clock_s: float = 0.0
    p: int | None = None

    def to_json(self) -> dict:
        out = {
            "guarantee": str(self.guarantee),
            "assumptions": sorted(str(a) for a in self.assumptions),
            "verdict": self.status,
            "states": self.states,
            "depth": self.depth,
        }
        if self.p is not None:
            out["p"] = self.p
        if self.trace:
            out["role"] = str(self.role)
            out["trace"] = [str(st) for st in self.trace]
        return out


Successors = Callable[[AbstractNodeState], Iterable[tuple[EnvClass, AbstractNodeState]]]


def _explore(
    g: Guarantee,
    roots: Sequence[AbstractNodeState],
    successors: Successors,
    depth: int,
) -> tuple[int, list[TraceStep] | None, Role | None]:
    parent: dict[AbstractNodeState, tuple[AbstractNodeState, EnvClass] | None] = {r: None for r in roots}
    queue = deque(roots)
    bad = None
    while queue:
        s = queue.popleft()
        if not holds(g, s):
            bad = s
            break
        if s.activation_count >= depth:
            continue
        for env, nxt in successors(s):
            if nxt not in parent:
                parent[nxt] = (s, env)
                queue.append(nxt)
    if bad is None:
        return len(parent), None, None
    chain = []
    cur = bad
    while parent[cur] is not None:
        prev, env = parent[cur]
        chain.append(TraceStep(cur.activation_count, prev.even, env, cur.state))
        cur = prev
    chain.append(TraceStep(0, cur.even, None, cur.state))
    chain.reverse()
    return len(parent), chain, bad.role


def prove_guarantee(
    g: Guarantee,
    assumptions: Iterable[Assumption],
    p: int = 3,
    depth: int = 8,
    p3_bounds: tuple[int, int] = (-2, 1),
) -> AbstractResult:
    """Breadth-first search from every initial abstract state up to ``depth``
    activations; a violation yields a shortest trace."""
    if depth < 4:
        raise ValueError("depth must be >= 4")
    assumptions = frozenset(assumptions)
    t0 = time.perf_counter()

    def successors(s):
        for env in sorted(feasible_env_classes(s, assumptions, p, p3_bounds)):
            yield env, abstract_step(s, env)

    n, trace, role = _explore(g, initial_states(), successors, depth)
    status = PROVED if trace is None else REFUTED
    return AbstractResult(g, assumptions, status, n, depth, trace or [], role, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# concrete engine


def _mailboxes(
    node_id: int,
    count: int,
    p: int,
    assumptions: frozenset[Assumption],
    p3_bounds: tuple[int, int],
) -> list[tuple[Message, ...]]:
    """Extreme concrete mailboxes allowed by the assumptions.

    Senders are either everyone (a full round) or, without the clean-round
    assumption, only ids up to ``node_id``. Each sender's state is the first or
    the last value it may carry.
    """
    senders = [list(range(1, p + 1))]
    if Assumption.CLEAN not in assumptions:
        senders.append(list(range(1, node_id + 1)))
    boxes = []
    for ids in senders:
        for pick in (0, -1):
            boxes.append(
                tuple(Message(j, sender_states(j == p, count, assumptions, p3_bounds)[pick]) for j in ids)
            )
    return boxes


def concrete_scaling_run(
    p: int,
    assumptions: Iterable[Assumption],
    depth: int = 8,
    guarantees: Sequence[Guarantee] = (Guarantee.P1, Guarantee.P2, Guarantee.P4),
    p3_bounds: tuple[int, int] = (-2, 1),
) -> list[AbstractResult]:
    """Explore with every environment message materialised.

    Node i runs with id ``p`` (max id) or ``1`` or ``p - 1`` (non-max ids).
    Each step builds full mailboxes of up to ``p`` messages, runs the real
    update rule and only then collapses the result to an abstract state.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    assumptions = frozenset(assumptions)
    out = []
    for g in guarantees:
        t0 = time.perf_counter()
        out.append(_concrete_guarantee(g, p, assumptions, depth, p3_bounds))
        out[-1].wall_clock_s = time.perf_counter() - t0
    return out


def _concrete_guarantee(g, p, assumptions, depth, p3_bounds) -> AbstractResult:
    ids = [(Role.MAX_ID, p)] + [(Role.NOT_MAX_ID, k) for k in sorted({1, p - 1})]
    total = 0
    for role, node_id in ids:

        def successors(s, node_id=node_id):
            seen = set()
            for box in _mailboxes(node_id, s.activation_count, p, assumptions, p3_bounds):
                core, _ = update_node(NodeCore(node_id, s.state, s.even, box))
                env = EnvClass(any(m.sender_id > node_id for m in box))
                nxt = AbstractNodeState(s.role, core.state, core.even_activation, s.activation_count + 1)
                if (env, nxt) not in seen:
                    seen.add((env, nxt))
                    yield env, nxt

        roots = [s for s in initial_states() if s.role is role]
        try:
            n, trace, bad_role = _explore(g, roots, successors, depth)
        except MemoryError:
            return AbstractResult(g, assumptions, INCONCLUSIVE, total, depth, p=p)
        total += n
        if trace is not None:
            return AbstractResult(g, assumptions, REFUTED, total, depth, trace, bad_role, p=p)
    return AbstractResult(g, assumptions, PROVED, total, depth, p=p)


def scaling_exponent(samples: Sequence[tuple[int, float]]) -> float:
    """Slope of log(time) against log(p)."""
    xs = [math.log(p) for p, _ in samples]
    ys = [math.log(t) for _, t in samples]
    return statistics.linear_regression(xs, ys).slope


# ---------------------------------------------------------------------------
# composition


COMPOSITION_ARGUMENT = (
    "P1: every non-max On node is a follower from its 2nd activation on. "
    "P4: the max-id On node is leader from its 4th activation on. "
    "After a preliminary clean round and 4 further clean rounds every On node "
    "has at least 4 activations, so both consequents hold together, which is P."
)

DISCHARGE_CHAIN = (
    "P1/P2 constrain senders with >= 2 activations; with the drift window "
    "[lower, upper] a sender has at least count_i + lower activations, so "
    "they apply once count_i >= 2 - lower (4 for lower = -2)."
)


@dataclass(frozen=True)
class Composition:
    status: str
    argument: str

    def to_json(self) -> dict:
        return {"verdict": self.status, "argument": self.argument}


def compose_correctness(p1: str, p4: str) -> Composition:
    if p1 == PROVED and p4 == PROVED:
        return Composition(PROVED, COMPOSITION_ARGUMENT)
    missing = [name for name, v in (("P1", p1), ("P4", p4)) if v != PROVED]
    return Composition(NOT_ESTABLISHED, f"{' and '.join(missing)} not proved")
