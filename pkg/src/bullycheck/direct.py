"""Exhaustive verification of property P for small networks.

Two timing engines decide which firing interleavings are possible:

``dbm`` (default)
    A zone graph over the pending activation times, one difference-bound
    matrix per node of the graph. Each node's spacing is only constrained to
    ``[min_spacing, max_spacing]`` per activation, which forgets that a
    period is constant. This admits every real interleaving and possibly
    more, so Proved is sound. A violation found on the graph is re-checked
    with the exact parametric system and replayed in the simulator; if either
    step fails the result is Inconclusive.
``parametric``
    Depth-first search over interleavings, each extension checked with one
    exact feasibility query on period/start/jitter variables. Exact but
    exponential; meant for cross-checking on tiny instances.

The zone graph does not depend on the protocol, so one search per number of
On nodes serves every On set; protocol configurations are pushed through it
as boolean vectors. A node's local configuration is (state, parity, "a higher id
is waiting in the mailbox"), which is all the update rule can observe.
"""

from __future__ import annotations

import itertools
import math
import os
import resource
import time
from array import array
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .protocol import ElectionState, Message, Mode, NodeCore, update_node
from .simulator import (
    VIOLATED,
    MinActivations,
    NodeConfig,
    SimConfig,
    check_property_p,
    simulate,
)
from .timebase import (
    START_M,
    TABLE1,
    ConstraintSystem,
    LinConstraint,
    TimingConstants,
    activation_time_expr,
    find_witness,
    format_rat,
    is_satisfiable,
    standard_bounds,
    Period,
    Start,
)

PROVED = "proved"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"

STATES = (ElectionState.FOLLOWER, ElectionState.CANDIDATE, ElectionState.LEADER)
LOCAL = 12  # 3 states x parity x higher-pending
THRESHOLD = 4

Deliver = Callable[[int, int], bool]


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ExploreConfig:
    p: int
    constants: TimingConstants = TABLE1
    max_activations_per_node: int = 10
    mode_sets: str | tuple[tuple[int, ...], ...] = "all"
    ids: tuple[int, ...] | None = None
    timing: str = "dbm"
    time_budget_s: float | None = 3600.0
    max_states: int | None = None
    memory_limit: int | None = None
    deliver: Deliver | None = None

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.max_activations_per_node < THRESHOLD:
            raise ValueError(f"max_activations_per_node must be >= {THRESHOLD}")
        if self.timing not in ("dbm", "parametric"):
            raise ValueError(f"unknown timing engine {self.timing!r}")
        ids = self.ids or tuple(range(1, self.p + 1))
        if len(ids) != self.p or len(set(ids)) != self.p or min(ids) < 1:
            raise ValueError("ids must be p distinct positive integers")
        object.__setattr__(self, "ids", tuple(ids))

    def on_sets(self) -> list[tuple[int, ...]]:
        if self.mode_sets == "all":
            return [
                s
                for q in range(1, self.p + 1)
                for s in itertools.combinations(range(self.p), q)
            ]
        out = [tuple(sorted(s)) for s in self.mode_sets]
        for s in out:
            if not s or any(not 0 <= k < self.p for k in s):
                raise ValueError(f"bad On set {s}")
        return out


# ---------------------------------------------------------------------------
# protocol configurations


def encode_local(state: ElectionState, even: bool, pending: bool) -> int:
    return STATES.index(state) * 4 + even * 2 + pending


def decode_local(x: int) -> tuple[ElectionState, bool, bool]:
    return STATES[x // 4], bool(x & 2), bool(x & 1)


def decode_config(c: int, q: int) -> list[tuple[ElectionState, bool, bool]]:
    out = []
    for _ in range(q):
        out.append(decode_local(c % LOCAL))
        c //= LOCAL
    return out


def encode_config(locals_: Sequence[tuple[ElectionState, bool, bool]]) -> int:
    c = 0
    for x in reversed(locals_):
        c = c * LOCAL + encode_local(*x)
    return c


def transition_table(ids: Sequence[int], deliver: Deliver | None = None) -> np.ndarray:
    """``trans[i, c]``: configuration after On node ``i`` fires in ``c``."""
    q = len(ids)
    n = LOCAL**q
    trans = np.empty((q, n), dtype=np.int64)
    for c in range(n):
        cfg = decode_config(c, q)
        for i in range(q):
            state, even, pending = cfg[i]
            higher = max(ids) + 1
            mailbox = (Message(higher, ElectionState.FOLLOWER),) if pending else ()
            core, msg = update_node(NodeCore(ids[i], state, even, mailbox))
            nxt = list(cfg)
            nxt[i] = (core.state, core.even_activation, bool(core.mailbox))
            for r in range(q):
                if deliver is not None and not deliver(i, r):
                    continue
                st, ev, pend = nxt[r]
                nxt[r] = (st, ev, pend or msg.sender_id > ids[r])
            trans[i, c] = encode_config(nxt)
    return trans


def initial_configs(ids: Sequence[int]) -> list[int]:
    """Every state/parity choice; the prefilled mailbox holds one message
    from each On node, so all but the max id see a higher id."""
    top = max(ids)
    per_node = [
        [(s, e, ids[k] < top) for s in STATES for e in (True, False)] for k in range(len(ids))
    ]
    return [encode_config(combo) for combo in itertools.product(*per_node)]


def good_configs(ids: Sequence[int]) -> np.ndarray:
    q = len(ids)
    top = ids.index(max(ids))
    good = np.zeros(LOCAL**q, dtype=bool)
    for c in range(LOCAL**q):
        cfg = decode_config(c, q)
        good[c] = all(
            st is (ElectionState.LEADER if k == top else ElectionState.FOLLOWER)
            for k, (st, _, _) in enumerate(cfg)
        )
    return good


# ---------------------------------------------------------------------------
# zone graph


INF = 1 << 60


def _scale(tc: TimingConstants) -> int:
    vals = (tc.period_min, tc.period_max, tc.jitter_min, tc.jitter_max)
    return math.lcm(*(v.denominator for v in vals))


@dataclass(frozen=True)
class ProtocolTrack:
    """Protocol configurations pushed along the zone graph for one id order."""

    trans: np.ndarray
    good: np.ndarray
    inits: list[int]

    @classmethod
    def for_ids(cls, ids: Sequence[int], deliver: Deliver | None = None) -> ProtocolTrack:
        return cls(transition_table(ids, deliver), good_configs(ids), initial_configs(ids))

    def start(self) -> np.ndarray:
        r = np.zeros(self.good.size, dtype=bool)
        r[self.inits] = True
        return r


@dataclass
class ZoneSearch:
    """Outcome of one layered zone-graph search."""

    q: int
    depth: int
    zones: int = 0
    edges: int = 0
    max_drift: int = 0
    count_vectors: set[tuple[int, ...]] = field(default_factory=set)
    violation: tuple[int, int, int] | None = None  # (track, zone, configuration)
    edge_src: array = field(default_factory=lambda: array("i"))
    edge_dst: array = field(default_factory=lambda: array("i"))
    edge_node: array = field(default_factory=lambda: array("b"))


def _memory_ceiling() -> int:
    try:
        total = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):  # pragma: no cover
        return 1 << 62
    return int(total * 0.7)


def _peak_rss() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _fire(m: list[list[int]], i: int, n: int, lo: int, hi: int) -> list[list[int]] | None:
    m = [row[:] for row in m]
    # x_i - x_j <= 0 for every other pending activation j
    for j in range(1, n):
        if j == i or m[i][j] <= 0:
            continue
        for x in range(n):
            mxi = m[x][i]
            if mxi >= INF:
                continue
            row_x = m[x]
            for y in range(n):
                v = mxi + m[j][y]
                if v < row_x[y]:
                    row_x[y] = v
        if m[i][i] < 0:
            return None
    if any(m[k][k] < 0 for k in range(n)):
        return None
    # now := x_i, then x_i := now + [lo, hi]
    for j in range(n):
        m[0][j] = m[i][j]
        m[j][0] = m[j][i]
    m[0][0] = 0
    for j in range(n):
        m[i][j] = min(INF, hi + m[0][j])
        m[j][i] = min(INF, m[j][0] - lo)
    m[i][i] = 0
    return m


def search_zones(
    q: int,
    depth: int,
    tc: TimingConstants = TABLE1,
    tracks: Sequence[ProtocolTrack] = (),
    deadline: float | None = None,
    max_states: int | None = None,
    memory_limit: int | None = None,
) -> ZoneSearch:
    """Breadth-first zone graph of ``q`` On nodes, ``depth`` firings each.

    Every edge adds one firing, so zones are built layer by layer on the
    total firing count and only two layers are ever held in memory. Each
    protocol track is propagated alongside; the search stops at the first
    layer holding a configuration that violates P.
    """
    s = _scale(tc)
    lo, hi = int(tc.min_spacing * s), int(tc.max_spacing * s)
    first = int(tc.period_max * s)
    n = q + 1
    init = [[0] * n for _ in range(n)]
    for k in range(1, n):
        for j in range(n):
            if j != k:
                init[k][j] = first
    limit = memory_limit if memory_limit is not None else _memory_ceiling()
    res = ZoneSearch(q, depth, zones=1, count_vectors={(0,) * q})
    layer = [(0, init, (0,) * q)]
    reach = {0: [np.packbits(t.start()) for t in tracks]}
    while layer:
        index: dict[tuple, int] = {}
        nxt = []
        preds: dict[int, list[tuple[int, int]]] = {}
        for z, m, cnt in layer:
            if z % 1024 == 0:
                if deadline is not None and time.perf_counter() > deadline:
                    raise BudgetExceeded(f"time budget exhausted after {res.zones} zones")
                if _peak_rss() > limit:
                    raise BudgetExceeded(f"memory ceiling reached after {res.zones} zones")
            for i in range(q):
                if cnt[i] >= depth:
                    continue
                m2 = _fire(m, i + 1, n, lo, hi)
                if m2 is None:
                    continue
                c2 = cnt[:i] + (cnt[i] + 1,) + cnt[i + 1 :]
                key = (c2, array("q", itertools.chain.from_iterable(m2)).tobytes())
                w = index.get(key)
                if w is None:
                    w = res.zones
                    if max_states is not None and w >= max_states:
                        raise BudgetExceeded(f"zone ceiling {max_states} reached")
                    res.zones += 1
                    index[key] = w
                    nxt.append((w, m2, c2))
                    preds[w] = []
                    res.count_vectors.add(c2)
                    res.max_drift = max(res.max_drift, max(c2) - min(c2))
                preds[w].append((z, i))
                res.edge_src.append(z)
                res.edge_dst.append(w)
                res.edge_node.append(i)
                res.edges += 1
        del index
        new_reach = {}
        for w, _, c2 in nxt:
            packed = []
            for t, track in enumerate(tracks):
                r = np.zeros(track.good.size, dtype=bool)
                for y, i in preds[w]:
                    prev = np.unpackbits(reach[y][t], count=track.good.size).view(bool)
                    r[track.trans[i][prev]] = True
                if min(c2) >= THRESHOLD and res.violation is None:
                    bad = r & ~track.good
                    if bad.any():
                        res.violation = (t, w, int(np.flatnonzero(bad)[0]))
                packed.append(np.packbits(r))
            new_reach[w] = packed
        if res.violation is not None:
            return res
        layer, reach = nxt, new_reach
    return res


def build_zone_graph(q: int, depth: int, tc: TimingConstants = TABLE1, **limits) -> ZoneSearch:
    """Zone graph statistics without any protocol attached."""
    return search_zones(q, depth, tc, (), **limits)


def _backtrack(res: ZoneSearch, track: ProtocolTrack, zone: int, config: int) -> tuple[int, list[int]]:
    """Initial configuration and firing sequence reaching ``config`` at ``zone``."""
    preds: dict[int, list[tuple[int, int]]] = {}
    for y, w, i in zip(res.edge_src, res.edge_dst, res.edge_node):
        preds.setdefault(w, []).append((y, i))
    ancestors = {zone}
    stack = [zone]
    while stack:
        for y, _ in preds.get(stack.pop(), ()):
            if y not in ancestors:
                ancestors.add(y)
                stack.append(y)
    reach = {0: track.start()}
    for w in sorted(ancestors - {0}):
        r = np.zeros(track.good.size, dtype=bool)
        for y, i in preds[w]:
            r[track.trans[i][reach[y]]] = True
        reach[w] = r
    fired = []
    c, cur = config, zone
    while cur != 0:
        for y, i in preds[cur]:
            hits = np.flatnonzero(reach[y] & (track.trans[i] == c))
            if hits.size:
                fired.append(i)
                c, cur = int(hits[0]), y
                break
    fired.reverse()
    return c, fired


# ---------------------------------------------------------------------------
# exact interleaving feasibility


@dataclass(frozen=True)
class InterleavingPrefix:
    order: tuple[int, ...] = ()
    p: int = 0

    @property
    def counts(self) -> tuple[int, ...]:
        c = [0] * self.p
        for i in self.order:
            c[i] += 1
        return tuple(c)

    def extend(self, i: int) -> InterleavingPrefix:
        return InterleavingPrefix(self.order + (i,), self.p)


def interleaving_system(
    order: Sequence[int],
    nodes: Sequence[int],
    tc: TimingConstants,
    strict: bool = False,
) -> ConstraintSystem:
    """Timing constraints for ``nodes`` firing in exactly ``order``.

    Consecutive events are ordered (strictly if asked), and every node's
    pending activation is not earlier than the last event, otherwise it would
    have fired first.
    """
    counts = {k: 0 for k in nodes}
    times = []
    for i in order:
        times.append(activation_time_expr(i, counts[i]))
        counts[i] += 1
    system = ConstraintSystem.of(*(standard_bounds(k, counts[k], tc, START_M) for k in nodes))
    chain: list[LinConstraint] = []
    for a, b in zip(times, times[1:]):
        chain.append(a.lt(b) if strict else a.le(b))
    if times:
        last = times[-1]
        for k in nodes:
            pending = activation_time_expr(k, counts[k])
            chain.append(pending.gt(last) if strict else pending.ge(last))
    return system + chain


def feasible_extension(prefix: InterleavingPrefix, nxt: int, cfg: ExploreConfig) -> bool:
    """Whether ``prefix`` followed by a firing of ``nxt`` admits a schedule."""
    order = prefix.order + (nxt,)
    return is_satisfiable(interleaving_system(order, range(cfg.p), cfg.constants))


# ---------------------------------------------------------------------------
# results


@dataclass
class DirectCounterexample:
    ids: tuple[int, ...]
    modes: tuple[Mode, ...]
    initial: tuple[tuple[ElectionState, bool], ...]
    order: tuple[int, ...]
    periods: tuple[Fraction, ...]
    starts: tuple[Fraction, ...]
    jitters: dict[int, list[Fraction]]
    offenders: tuple[int, ...]

    def sim_config(self, constants: TimingConstants) -> SimConfig:
        nodes = tuple(
            NodeConfig(
                self.ids[k], self.periods[k], self.starts[k], self.modes[k], self.initial[k][0], self.initial[k][1]
            )
            for k in range(len(self.ids))
        )
        return SimConfig(constants, nodes, horizon=MinActivations(THRESHOLD))

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "id": self.ids[k],
                    "mode": self.modes[k].value,
                    "initial_state": self.initial[k][0].value,
                    "initial_even": self.initial[k][1],
                    "period": format_rat(self.periods[k]),
                    "start": format_rat(self.starts[k]),
                    "jitters": [format_rat(j) for j in self.jitters.get(self.ids[k], [])],
                }
                for k in range(len(self.ids))
            ],
            "order": [self.ids[k] for k in self.order],
            "offenders": list(self.offenders),
        }


@dataclass
class DirectResult:
    status: str
    p: int
    depth: int
    engine: str
    on_sets: int = 0
    initial_assignments: int = 0
    zones: int = 0
    edges: int = 0
    max_drift: int = 0
    counterexample: DirectCounterexample | None = None
    reason: str = ""
    wall_clock_s: float = 0.0
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "verdict": self.status,
            "p": self.p,
            "depth": self.depth,
            "engine": self.engine,
            "on_sets": self.on_sets,
            "initial_assignments": self.initial_assignments,
            "zones": self.zones,
            "edges": self.edges,
            "max_drift": self.max_drift,
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample.to_json()
        if self.reason:
            out["reason"] = self.reason
        return out


# ---------------------------------------------------------------------------
# counterexample confirmation


def _confirm(
    cfg: ExploreConfig,
    on: Sequence[int],
    init_cfg: int,
    local_order: Sequence[int],
) -> DirectCounterexample | str:
    """Exact timing + simulator replay of an abstract violating run."""
    q = len(on)
    order = tuple(on[i] for i in local_order)
    witness = None
    for strict in (True, False):
        witness = find_witness(interleaving_system(order, on, cfg.constants, strict))
        if witness is not None:
            break
    if witness is None:
        return "violating interleaving has no exact timing (zone over-approximation)"
    init = decode_config(init_cfg, q)
    initial = [(ElectionState.FOLLOWER, True)] * cfg.p
    modes = [Mode.OFF] * cfg.p
    periods = [cfg.constants.period_min] * cfg.p
    starts = [Fraction(0)] * cfg.p
    jitters: dict[int, list[Fraction]] = {}
    for local, k in enumerate(on):
        initial[k] = (init[local][0], init[local][1])
        modes[k] = Mode.ON
        periods[k] = witness[Period(k)]
        starts[k] = witness[Start(k)]
        found = sorted((v.index, x) for v, x in witness.items() if v.kind == "jitter" and v.node == k)
        jitters[cfg.ids[k]] = [x for _, x in found]
    cex = DirectCounterexample(
        cfg.ids, tuple(modes), tuple(initial), order, tuple(periods), tuple(starts), jitters, ()
    )
    sim_cfg = cex.sim_config(cfg.constants)
    deliver = None
    if cfg.deliver is not None:
        # the hook speaks in On-local indices
        pos = {k: local for local, k in enumerate(on)}
        deliver = lambda s, r: r not in pos or cfg.deliver(pos[s], pos[r])  # noqa: E731
    try:
        trace = simulate(sim_cfg, jitters, deliver=deliver, order=order)
    except ValueError as exc:
        return f"replay diverged: {exc}"
    check = check_property_p(trace.final, THRESHOLD)
    if check.status != VIOLATED:
        return "replay does not violate P"
    cex.offenders = check.offenders
    return cex


# ---------------------------------------------------------------------------
# engines


def _rank_signature(ids: Sequence[int]) -> tuple[int, ...]:
    order = sorted(range(len(ids)), key=lambda k: ids[k])
    return tuple(order.index(k) for k in range(len(ids)))


def _verify_dbm(cfg: ExploreConfig, result: DirectResult, deadline) -> DirectResult:
    """Only the relative order of the On ids reaches the protocol, so On sets
    with the same order type share one track."""
    on_sets = cfg.on_sets()
    for q in sorted({len(s) for s in on_sets}):
        group = [s for s in on_sets if len(s) == q]
        reps: dict[tuple[int, ...], tuple[int, ...]] = {}
        for on in group:
            reps.setdefault(_rank_signature([cfg.ids[k] for k in on]), on)
        chosen = list(reps.values())
        tracks = [ProtocolTrack.for_ids([cfg.ids[k] for k in on], cfg.deliver) for on in chosen]
        res = search_zones(
            q, cfg.max_activations_per_node, cfg.constants, tracks, deadline, cfg.max_states, cfg.memory_limit
        )
        result.zones += res.zones
        result.edges += res.edges
        result.max_drift = max(result.max_drift, res.max_drift)
        result.on_sets += len(group)
        result.initial_assignments += len(group) * 6**q
        if res.violation is not None:
            t, zone, config = res.violation
            init_cfg, fired = _backtrack(res, tracks[t], zone, config)
            confirmed = _confirm(cfg, chosen[t], init_cfg, fired)
            if isinstance(confirmed, str):
                result.status = INCONCLUSIVE
                result.reason = confirmed
            else:
                result.status = REFUTED
                result.counterexample = confirmed
            return result
    result.status = PROVED
    return result


def _verify_parametric(cfg: ExploreConfig, result: DirectResult, deadline) -> DirectResult:
    depth = cfg.max_activations_per_node
    for on in cfg.on_sets():
        q = len(on)
        ids = [cfg.ids[k] for k in on]
        trans = transition_table(ids, cfg.deliver)
        good = good_configs(ids)
        inits = initial_configs(ids)
        result.on_sets += 1
        result.initial_assignments += len(inits)
        feasible: dict[tuple[int, ...], bool] = {}

        def extend_ok(order):
            ok = feasible.get(order)
            if ok is None:
                global_order = tuple(on[i] for i in order)
                ok = is_satisfiable(interleaving_system(global_order, on, cfg.constants))
                feasible[order] = ok
                result.zones += 1
            return ok

        # each stack entry: (order, counts, config set as bool vector)
        start = np.zeros(LOCAL**q, dtype=bool)
        start[inits] = True
        stack = [((), (0,) * q, start)]
        while stack:
            if deadline is not None and time.perf_counter() > deadline:
                raise BudgetExceeded("time budget exhausted")
            order, counts, reach = stack.pop()
            result.max_drift = max(result.max_drift, max(counts) - min(counts))
            if min(counts) >= THRESHOLD:
                bad = reach & ~good
                if bad.any():
                    target = int(np.flatnonzero(bad)[0])
                    init_cfg = _pull_back(trans, inits, order, target, q)
                    confirmed = _confirm(cfg, on, init_cfg, order)
                    if isinstance(confirmed, str):
                        result.status = INCONCLUSIVE
                        result.reason = confirmed
                    else:
                        result.status = REFUTED
                        result.counterexample = confirmed
                    return result
            for i in range(q):
                if counts[i] >= depth:
                    continue
                nxt = order + (i,)
                if not extend_ok(nxt):
                    continue
                result.edges += 1
                r = np.zeros_like(reach)
                r[trans[i][reach]] = True
                stack.append((nxt, counts[:i] + (counts[i] + 1,) + counts[i + 1 :], r))
    result.status = PROVED
    return result


def _pull_back(trans: np.ndarray, inits: list[int], order: Sequence[int], target: int, q: int) -> int:
    for c0 in inits:
        c = c0
        for i in order:
            c = int(trans[i][c])
        if c == target:
            return c0
    raise AssertionError("no initial configuration reaches the violating one")


def verify_direct(cfg: ExploreConfig) -> DirectResult:
    t0 = time.perf_counter()
    deadline = None if cfg.time_budget_s is None else t0 + cfg.time_budget_s
    result = DirectResult(INCONCLUSIVE, cfg.p, cfg.max_activations_per_node, cfg.timing)
    try:
        if cfg.timing == "dbm":
            _verify_dbm(cfg, result, deadline)
        else:
            _verify_parametric(cfg, result, deadline)
    except BudgetExceeded as exc:
        result.status = INCONCLUSIVE
        result.reason = str(exc)
    except MemoryError:
        result.status = INCONCLUSIVE
        result.reason = "out of memory"
    result.wall_clock_s = time.perf_counter() - t0
    return result
