from __future__ import annotations

import random
from fractions import Fraction

import pytest

from bullycheck.abstract import FULL_STACK, AbstractNodeState, Role, abstract_step, feasible_env_classes
from bullycheck.direct import (
    INCONCLUSIVE,
    PROVED,
    REFUTED,
    ExploreConfig,
    InterleavingPrefix,
    build_zone_graph,
    decode_config,
    encode_config,
    feasible_extension,
    interleaving_system,
    transition_table,
    verify_direct,
)
from bullycheck.protocol import ElectionState, Message, NodeCore, update_node
from bullycheck.simulator import VIOLATED, MinActivations, NodeConfig, SimConfig, check_property_p, simulate
from bullycheck.timebase import TABLE1, TimingConstants, is_satisfiable

Q = Fraction
SYNC = TimingConstants(Q(50), Q(50), Q(0), Q(0))


def skip_first_receiver(sender: int, receiver: int) -> bool:
    return not (sender == 1 and receiver == 0)


def test_feasible_extension_examples():
    cfg = ExploreConfig(2)
    empty = InterleavingPrefix((), 2)
    assert feasible_extension(empty, 0, cfg) and feasible_extension(empty, 1, cfg)
    two = InterleavingPrefix((0, 0), 2)
    assert feasible_extension(two.extend(0).extend(1), 1, cfg) is False
    assert not is_satisfiable(interleaving_system((0, 0, 0), range(2), TABLE1))
    assert feasible_extension(two, 0, cfg) is False
    sync = ExploreConfig(2, constants=SYNC)
    prefix = InterleavingPrefix((), 2)
    for i in [0, 1] * 5:
        assert feasible_extension(prefix, i, sync)
        prefix = prefix.extend(i)


def test_prefix_pruning_is_monotone():
    rng = random.Random(4)
    for _ in range(40):
        order = tuple(rng.randrange(3) for _ in range(rng.randint(1, 7)))
        if not is_satisfiable(interleaving_system(order, range(3), TABLE1)):
            for k in range(3):
                assert not is_satisfiable(interleaving_system(order + (k,), range(3), TABLE1))


def test_config_encoding_roundtrip():
    for c in (0, 5, 143, 1727):
        assert encode_config(decode_config(c, 3)) == c


def test_transition_table_matches_kernel():
    ids = (2, 5, 9)
    trans = transition_table(ids)
    rng = random.Random(1)
    for _ in range(200):
        c = rng.randrange(12**3)
        i = rng.randrange(3)
        local = decode_config(c, 3)
        state, even, pending = local[i]
        box = (Message(10, ElectionState.FOLLOWER),) if pending else ()
        core, msg = update_node(NodeCore(ids[i], state, even, box))
        after = decode_config(int(trans[i, c]), 3)
        assert after[i][:2] == (core.state, core.even_activation)
        for r in range(3):
            if r != i:
                assert after[r][2] == (local[r][2] or ids[i] > ids[r])


def test_p2_proved_both_engines():
    assert verify_direct(ExploreConfig(2)).status == PROVED
    assert verify_direct(ExploreConfig(2, max_activations_per_node=6, timing="parametric")).status == PROVED


def test_p3_with_one_node_off():
    r = verify_direct(ExploreConfig(3, mode_sets=((0, 2),)))
    assert r.status == PROVED and r.on_sets == 1


@pytest.mark.parametrize("timing, depth", [("dbm", 10), ("parametric", 5)])
def test_sabotaged_broadcast_is_refuted(timing, depth):
    cfg = ExploreConfig(2, mode_sets=((0, 1),), deliver=skip_first_receiver, timing=timing,
                        max_activations_per_node=depth)
    r = verify_direct(cfg)
    assert r.status == REFUTED
    cex = r.counterexample
    assert cex.offenders == (1,)
    sim = cex.sim_config(TABLE1)
    trace = simulate(sim, cex.jitters, deliver=skip_first_receiver, order=cex.order)
    assert check_property_p(trace.final).status == VIOLATED


def test_id_relabelling_is_invisible():
    base = verify_direct(ExploreConfig(3, max_activations_per_node=6))
    moved = verify_direct(ExploreConfig(3, max_activations_per_node=6, ids=(4, 17, 30)))
    assert base.status == moved.status == PROVED
    assert base.zones == moved.zones
    a = verify_direct(ExploreConfig(2, deliver=skip_first_receiver, mode_sets=((0, 1),)))
    b = verify_direct(ExploreConfig(2, deliver=skip_first_receiver, mode_sets=((0, 1),), ids=(8, 20)))
    assert a.status == b.status == REFUTED


def test_zone_counts_never_drift_more_than_two():
    g = build_zone_graph(3, 10)
    assert g.max_drift == 2
    assert all(max(c) - min(c) <= 2 for c in g.count_vectors)


def test_parametric_prefixes_respect_drift():
    r = verify_direct(ExploreConfig(2, max_activations_per_node=6, timing="parametric"))
    assert r.max_drift <= 2


def test_budget_gives_inconclusive():
    r = verify_direct(ExploreConfig(3, max_states=100))
    assert r.status == INCONCLUSIVE and "ceiling" in r.reason
    r = verify_direct(ExploreConfig(3, time_budget_s=0.0))
    assert r.status == INCONCLUSIVE


def test_simulated_node_histories_are_abstract_traces():
    rng = random.Random(8)
    for seed in range(30):
        p = rng.randint(2, 3)
        nodes = []
        for k in range(p):
            per = Q(rng.randint(490, 510), 10)
            nodes.append(NodeConfig(k + 1, per, per * Q(rng.randint(0, 10), 10),
                                    initial_state=rng.choice(list(ElectionState)),
                                    initial_even=rng.random() < 0.5))
        cfg = SimConfig(TABLE1, tuple(nodes), seed=seed, horizon=MinActivations(8))
        trace = simulate(cfg, keep_states=True)
        for k, node in enumerate(cfg.nodes):
            role = Role.MAX_ID if node.id == p else Role.NOT_MAX_ID
            s = AbstractNodeState(role, node.initial_state, node.initial_even, 0)
            for st in trace.states[1:]:
                if st.activation_count[k] == s.activation_count:
                    continue
                core = st.cores[k]
                options = {abstract_step(s, env) for env in feasible_env_classes(s, FULL_STACK, p)}
                s = AbstractNodeState(role, core.state, core.even_activation, s.activation_count + 1)
                assert s in options


def test_explore_config_validation():
    with pytest.raises(ValueError):
        ExploreConfig(2, max_activations_per_node=3)
    with pytest.raises(ValueError):
        ExploreConfig(2, ids=(1, 1))
    with pytest.raises(ValueError):
        ExploreConfig(2, timing="smt")
