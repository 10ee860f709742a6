from __future__ import annotations

from fractions import Fraction

import pytest

from bullycheck.drift import (
    OBSERVE_ANY,
    PROVED,
    REFUTED,
    DriftSpec,
    drift_system,
    encode_count_window,
    lemma2_closed_form,
    replay_drift,
    replay_lemma2,
    verify_lemma2,
    verify_p3,
    violating_pairs,
)
from bullycheck.timebase import (
    START_M,
    TABLE1,
    LinExpr,
    Start,
    TimePoint,
    TimingConstants,
    find_witness,
    is_satisfiable,
)

Q = Fraction
WIDE = TimingConstants(Q(49), Q(51), Q(-25), Q(25))
T = LinExpr.of(TimePoint("t"))


def test_window_zero_unrolled():
    sys0 = encode_count_window(0, 0)
    texts = {str(c) for c in sys0}
    assert any("Start(0)" in c and "t" in c and "Period" not in c for c in texts)
    assert any("Period(0)" in c and "Jitter(0,1)" in c and "t" in c for c in texts)


def test_window_zero_width_constants():
    tc = TimingConstants(Q(50), Q(50), Q(0), Q(0))
    pinned = [LinExpr.of(Start(0)).eq(0), T.eq(125)]
    found = [k for k in range(6) if is_satisfiable(encode_count_window(0, k, T, tc, START_M) + pinned)]
    assert found == [2]


def test_window_left_edge_minimum():
    sys13 = encode_count_window(0, 13, T) + [LinExpr.of(Start(0)).eq(0), T.le(Q(1261, 2))]
    w = find_witness(sys13)
    assert w is not None and w[TimePoint("t")] == Q(1261, 2)
    assert not is_satisfiable(encode_count_window(0, 13, T) + [LinExpr.of(Start(0)).eq(0), T.lt(Q(1261, 2))])


@pytest.mark.parametrize("observe", ["activation", "any"])
@pytest.mark.parametrize("bounds", [(-2, 1), (-1, 0), (0, 3)])
def test_window_exhaustiveness(observe, bounds):
    spec = DriftSpec(max_activations=6, lower=bounds[0], upper=bounds[1], observe=observe)
    lo_i, lo_j = (0, 0) if observe == OBSERVE_ANY else (0, -1)
    hi_i = 6 if observe == OBSERVE_ANY else 6 - bounds[0]
    expected = set()
    for ki in range(lo_i, hi_i + 1):
        for kj in range(lo_j, 7):
            d = kj - ki
            if d > bounds[1] or d < bounds[0]:
                expected.add((ki, kj))
    assert set(violating_pairs(spec)) == expected


def test_p3_proved_at_baseline():
    v = verify_p3(DriftSpec())
    assert v.status == PROVED and v.queries == len(violating_pairs(DriftSpec()))


@pytest.mark.parametrize("bounds", [(-1, 0), (-2, 0), (-1, 1)])
def test_tighter_windows_refuted_and_replay(bounds):
    spec = DriftSpec(lower=bounds[0], upper=bounds[1])
    v = verify_p3(spec)
    assert v.status == REFUTED
    cex = v.counterexample
    assert drift_system(spec, cex.k_i, cex.k_j).holds(cex.witness)
    assert replay_drift(cex, spec) == (cex.k_i, cex.k_j)


def test_any_time_observation():
    literal = verify_p3(DriftSpec(observe=OBSERVE_ANY))
    assert literal.status == REFUTED
    assert replay_drift(literal.counterexample, DriftSpec(observe=OBSERVE_ANY)) == (
        literal.counterexample.k_i,
        literal.counterexample.k_j,
    )
    assert verify_p3(DriftSpec(observe=OBSERVE_ANY, upper=2)).status == PROVED


def test_wide_jitter_breaks_p3():
    spec = DriftSpec(constants=WIDE)
    v = verify_p3(spec)
    assert v.status == REFUTED
    assert replay_drift(v.counterexample, spec) == (v.counterexample.k_i, v.counterexample.k_j)


@pytest.mark.parametrize("shift", [Q(7), Q(1, 3)])
def test_shift_invariance(shift):
    for bounds in [(-2, 1), (-1, 0)]:
        base = DriftSpec(max_activations=6, lower=bounds[0], upper=bounds[1])
        moved = DriftSpec(max_activations=6, lower=bounds[0], upper=bounds[1], start_shift=shift)
        assert verify_p3(base).status == verify_p3(moved).status


def test_read_window_baseline():
    assert verify_lemma2(TABLE1, 2, 13).status == PROVED


def test_read_window_wide_jitter_refuted_with_replay():
    v = verify_lemma2(WIDE, 2, 13)
    assert v.status == REFUTED
    assert replay_lemma2(v.counterexample, WIDE, 2) == 0


def test_read_window_needs_four_reads_at_wide_jitter():
    three = verify_lemma2(WIDE, 3, 13)
    assert three.status == REFUTED
    assert replay_lemma2(three.counterexample, WIDE, 3) == 0
    assert verify_lemma2(WIDE, 4, 13).status == PROVED


@pytest.mark.parametrize(
    "tc",
    [TABLE1, WIDE, TimingConstants(Q(49), Q(51), Q(-1), Q(1)), TimingConstants(Q(40), Q(60), Q(-5), Q(5))],
)
@pytest.mark.parametrize("r", [1, 2, 3])
def test_read_window_matches_closed_form(tc, r):
    v = verify_lemma2(tc, r, 8)
    assert (v.status == PROVED) == lemma2_closed_form(tc, r)


def test_bad_arguments():
    with pytest.raises(ValueError):
        DriftSpec(lower=1)
    with pytest.raises(ValueError):
        verify_lemma2(TABLE1, 0, 5)
    with pytest.raises(ValueError):
        verify_lemma2(TABLE1, 3, 2)
