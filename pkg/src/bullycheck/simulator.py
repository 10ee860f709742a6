"""Exact-time discrete-event simulation of a network of periodic election nodes.

Each On node fires at ``start``, then every ``period + jitter`` with a fresh
jitter per activation. The node with the earliest pending activation fires
next (ties go to the lowest node index), runs :func:`update_node`, and its
message is delivered instantly to every node, itself included.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

from .protocol import ElectionState, Message, Mode, NodeCore, enqueue_message, update_node
from .timebase import START_M, START_T, TimingConstants, format_rat, parse_rat

JITTER_DENOMINATOR = 2**20

Deliver = Callable[[int, int], bool]
"""``deliver(sender_index, receiver_index)``; test hook to drop deliveries."""


class ConfigError(ValueError):
    """Invalid network configuration; the message names the offending field."""


class NetworkSilent(RuntimeError):
    """No node is On, so nothing can ever fire."""


@dataclass(frozen=True)
class MaxTime:
    time: Fraction


@dataclass(frozen=True)
class MinActivations:
    count: int


Horizon = Union[MaxTime, MinActivations]


@dataclass(frozen=True)
class NodeConfig:
    id: int
    period: Fraction
    start: Fraction
    mode: Mode = Mode.ON
    initial_state: ElectionState = ElectionState.FOLLOWER
    initial_even: bool = True


@dataclass(frozen=True)
class SimConfig:
    constants: TimingConstants
    nodes: tuple[NodeConfig, ...]
    seed: int = 0
    horizon: Horizon = MinActivations(4)
    start_convention: str = START_M

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        validate(self)

    @property
    def on_indices(self) -> list[int]:
        return [k for k, n in enumerate(self.nodes) if n.mode is Mode.ON]

    def to_json(self) -> dict:
        if isinstance(self.horizon, MaxTime):
            horizon = {"type": "time", "value": format_rat(self.horizon.time)}
        else:
            horizon = {"type": "min_activations", "value": self.horizon.count}
        out = {
            "constants": self.constants.to_json(),
            "nodes": [
                {
                    "id": n.id,
                    "period": format_rat(n.period),
                    "start": format_rat(n.start),
                    "mode": n.mode.value,
                    "initial_state": n.initial_state.value,
                    "initial_even": n.initial_even,
                }
                for n in self.nodes
            ],
            "seed": self.seed,
            "horizon": horizon,
        }
        if self.start_convention != START_M:
            out["start_convention"] = self.start_convention
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> SimConfig:
        return parse_config(data)


def validate(cfg: SimConfig) -> None:
    tc = cfg.constants
    ids = [n.id for n in cfg.nodes]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"nodes: duplicate ids {sorted(i for i in set(ids) if ids.count(i) > 1)}")
    if not any(n.mode is Mode.ON for n in cfg.nodes):
        raise ConfigError("nodes: at least one node must be on")
    if cfg.start_convention not in (START_M, START_T):
        raise ConfigError(f"start_convention: unknown value {cfg.start_convention!r}")
    slack = tc.jitter_max if cfg.start_convention == START_T else 0
    for k, n in enumerate(cfg.nodes):
        if n.id < 1:
            raise ConfigError(f"nodes[{k}].id: must be >= 1")
        if not tc.period_min <= n.period <= tc.period_max:
            raise ConfigError(f"nodes[{k}].period: {format_rat(n.period)} outside [period_min, period_max]")
        if not 0 <= n.start <= n.period + slack:
            raise ConfigError(f"nodes[{k}].start: {format_rat(n.start)} outside [0, period]")
    if isinstance(cfg.horizon, MinActivations) and cfg.horizon.count < 0:
        raise ConfigError("horizon.value: must be >= 0")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")


def _field(data: Mapping, key: str, where: str):
    if key not in data:
        raise ConfigError(f"{where}{key}: missing")
    return data[key]


def _rat_field(data: Mapping, key: str, where: str) -> Fraction:
    try:
        return parse_rat(_field(data, key, where))
    except ValueError as exc:
        raise ConfigError(f"{where}{key}: {exc}") from None


def parse_config(data: Mapping) -> SimConfig:
    """Build a :class:`SimConfig` from the JSON document layout."""
    if not isinstance(data, Mapping):
        raise ConfigError("config: top level must be an object")
    try:
        constants = TimingConstants.from_json(_field(data, "constants", ""))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"constants: {exc}") from None
    raw_nodes = _field(data, "nodes", "")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ConfigError("nodes: must be a non-empty list")
    nodes = []
    for k, raw in enumerate(raw_nodes):
        where = f"nodes[{k}]."
        node_id = _field(raw, "id", where)
        if not isinstance(node_id, int) or isinstance(node_id, bool):
            raise ConfigError(f"{where}id: must be an integer")
        try:
            mode = Mode(raw.get("mode", "on"))
        except ValueError:
            raise ConfigError(f"{where}mode: expected 'on' or 'off'") from None
        try:
            state = ElectionState(raw.get("initial_state", "follower"))
        except ValueError:
            raise ConfigError(f"{where}initial_state: expected follower/candidate/leader") from None
        even = raw.get("initial_even", True)
        if not isinstance(even, bool):
            raise ConfigError(f"{where}initial_even: must be a boolean")
        nodes.append(
            NodeConfig(
                id=node_id,
                period=_rat_field(raw, "period", where),
                start=_rat_field(raw, "start", where),
                mode=mode,
                initial_state=state,
                initial_even=even,
            )
        )
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed: must be an integer")
    horizon_raw = data.get("horizon", {"type": "min_activations", "value": 4})
    kind = horizon_raw.get("type")
    if kind == "time":
        horizon: Horizon = MaxTime(_rat_field(horizon_raw, "value", "horizon."))
    elif kind == "min_activations":
        value = _field(horizon_raw, "value", "horizon.")
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError("horizon.value: must be an integer")
        horizon = MinActivations(value)
    else:
        raise ConfigError("horizon.type: expected 'time' or 'min_activations'")
    return SimConfig(
        constants=constants,
        nodes=tuple(nodes),
        seed=seed,
        horizon=horizon,
        start_convention=data.get("start_convention", START_M),
    )


def load_config(path: str | Path) -> SimConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from None
    return parse_config(data)


JitterTable = Mapping[int, Sequence[Fraction]]
"""node id -> jitters for activations 1, 2, ... (activation 0 is the start)."""


def parse_jitter_table(data: Mapping) -> dict[int, list[Fraction]]:
    try:
        return {int(k): [parse_rat(v) for v in vs] for k, vs in data.items()}
    except (ValueError, TypeError, AttributeError) as exc:
        raise ConfigError(f"jitter table: {exc}") from None


def load_jitter_table(path: str | Path) -> dict[int, list[Fraction]]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"jitter table: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"jitter table: invalid JSON: {exc}") from None
    return parse_jitter_table(data)


# ---------------------------------------------------------------------------
# state and events


@dataclass(frozen=True)
class SimState:
    cores: tuple[NodeCore, ...]
    on: tuple[bool, ...]
    next_activation_time: tuple[Fraction, ...]
    activation_count: tuple[int, ...]
    now: Fraction = Fraction(0)


@dataclass(frozen=True)
class TraceEvent:
    time: Fraction
    node_id: int
    activation_index: int
    executed_code: bool
    post_state: ElectionState
    sent: Message
    jitter_drawn: Fraction

    FIELDS = (
        "time", "node_id", "activation_index", "executed_code",
        "post_state", "sent_id", "sent_state", "jitter",
    )

    def row(self) -> list[str]:
        return [
            format_rat(self.time),
            str(self.node_id),
            str(self.activation_index),
            str(self.executed_code).lower(),
            self.post_state.value,
            str(self.sent.sender_id),
            self.sent.state.value,
            format_rat(self.jitter_drawn),
        ]


@dataclass
class Trace:
    events: list[TraceEvent]
    final: SimState
    states: list[SimState] = field(default_factory=list, repr=False)

    def times(self, node_id: int) -> list[Fraction]:
        return [e.time for e in self.events if e.node_id == node_id]

    def to_tsv(self) -> str:
        lines = ["\t".join(TraceEvent.FIELDS)]
        lines += ["\t".join(e.row()) for e in self.events]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def init_network(cfg: SimConfig) -> SimState:
    """Initial state right after a clean round.

    Every mailbox holds ``(own id, Follower)`` followed by one message from
    each On node, the node itself included.
    """
    validate(cfg)
    on_msgs = tuple(Message(n.id, n.initial_state) for n in cfg.nodes if n.mode is Mode.ON)
    cores = tuple(
        NodeCore(n.id, n.initial_state, n.initial_even, (Message(n.id, ElectionState.FOLLOWER),) + on_msgs)
        for n in cfg.nodes
    )
    return SimState(
        cores=cores,
        on=tuple(n.mode is Mode.ON for n in cfg.nodes),
        next_activation_time=tuple(n.start for n in cfg.nodes),
        activation_count=(0,) * len(cfg.nodes),
    )


def draw_jitter(rng: random.Random, tc: TimingConstants) -> Fraction:
    """Uniform over the dyadic grid of [jitter_min, jitter_max] with 2**20 steps."""
    u = rng.randint(0, JITTER_DENOMINATOR)
    return tc.jitter_min + (tc.jitter_max - tc.jitter_min) * Fraction(u, JITTER_DENOMINATOR)


def due_nodes(state: SimState) -> list[int]:
    """Indices of the On nodes whose pending activation is the earliest."""
    on = [k for k, flag in enumerate(state.on) if flag]
    if not on:
        raise NetworkSilent("no node is on")
    t = min(state.next_activation_time[k] for k in on)
    return [k for k in on if state.next_activation_time[k] == t]


def step(
    state: SimState,
    cfg: SimConfig,
    rng: random.Random,
    jitter_table: JitterTable | None = None,
    deliver: Deliver | None = None,
    choose: int | None = None,
) -> tuple[SimState, TraceEvent]:
    """Fire the earliest On node and broadcast its message.

    ``choose`` forces which of several simultaneously due nodes fires; by
    default the lowest index wins.
    """
    due = due_nodes(state)
    if choose is None:
        i = due[0]
    elif choose in due:
        i = choose
    else:
        raise ValueError(f"node index {choose} is not due at time {format_rat(min(state.next_activation_time[k] for k in due))}")
    node_cfg = cfg.nodes[i]
    t = state.next_activation_time[i]
    executed = state.cores[i].even_activation
    core, msg = update_node(state.cores[i])

    cores = list(state.cores)
    cores[i] = core
    for r in range(len(cores)):
        if deliver is None or deliver(i, r):
            cores[r] = enqueue_message(cores[r], msg)

    index = state.activation_count[i]
    table = (jitter_table or {}).get(node_cfg.id, ())
    jitter = table[index] if index < len(table) else draw_jitter(rng, cfg.constants)

    next_times = list(state.next_activation_time)
    next_times[i] = t + node_cfg.period + jitter
    counts = list(state.activation_count)
    counts[i] += 1
    new_state = SimState(tuple(cores), state.on, tuple(next_times), tuple(counts), t)
    event = TraceEvent(t, node_cfg.id, index, executed, core.state, msg, jitter)
    return new_state, event


def _done(state: SimState, horizon: Horizon) -> bool:
    on = [k for k, flag in enumerate(state.on) if flag]
    if isinstance(horizon, MaxTime):
        return min(state.next_activation_time[k] for k in on) > horizon.time
    return all(state.activation_count[k] >= horizon.count for k in on)


def simulate(
    cfg: SimConfig,
    jitter_table: JitterTable | None = None,
    deliver: Deliver | None = None,
    order: Sequence[int] | None = None,
    keep_states: bool = False,
) -> Trace:
    """Run until the configured horizon.

    ``order`` (node indices) replays a fixed firing sequence; each entry must
    be due when its turn comes, and the run stops when it is exhausted.
    """
    rng = random.Random(cfg.seed)
    state = init_network(cfg)
    events: list[TraceEvent] = []
    states = [state] if keep_states else []
    if order is not None:
        for i in order:
            state, ev = step(state, cfg, rng, jitter_table, deliver, choose=i)
            events.append(ev)
            if keep_states:
                states.append(state)
        return Trace(events, state, states)
    while not _done(state, cfg.horizon):
        state, ev = step(state, cfg, rng, jitter_table, deliver)
        events.append(ev)
        if keep_states:
            states.append(state)
    return Trace(events, state, states)


# ---------------------------------------------------------------------------
# property P at runtime


HOLDS = "holds"
VIOLATED = "violated"
NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class PropertyCheck:
    status: str
    offenders: tuple[int, ...] = ()
    max_id: int | None = None

    def __bool__(self) -> bool:
        return self.status != VIOLATED


def check_property_p(state: SimState, threshold: int = 4) -> PropertyCheck:
    """Max-id On node is Leader and every other On node a Follower, once every
    On node has at least ``threshold`` activations."""
    on = [k for k, flag in enumerate(state.on) if flag]
    if any(state.activation_count[k] < threshold for k in on):
        return PropertyCheck(NOT_APPLICABLE)
    max_k = max(on, key=lambda k: state.cores[k].id)
    offenders = []
    for k in on:
        want = ElectionState.LEADER if k == max_k else ElectionState.FOLLOWER
        if state.cores[k].state is not want:
            offenders.append(state.cores[k].id)
    max_id = state.cores[max_k].id
    if offenders:
        return PropertyCheck(VIOLATED, tuple(offenders), max_id)
    return PropertyCheck(HOLDS, (), max_id)


def first_violation(trace: Trace, threshold: int = 4) -> tuple[int, PropertyCheck] | None:
    """Index into ``trace.states`` of the first violating state, if any."""
    for k, st in enumerate(trace.states):
        check = check_property_p(st, threshold)
        if check.status == VIOLATED:
            return k, check
    return None
