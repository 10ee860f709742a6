from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from bullycheck.timebase import (
    START_T,
    TABLE1,
    ConstraintSystem,
    Jitter,
    LinExpr,
    Period,
    ResourceLimitExceeded,
    Start,
    SymVar,
    TimingConstants,
    activation_time_expr,
    drop_redundant,
    eliminate,
    find_witness,
    format_rat,
    implies,
    is_satisfiable,
    parse_rat,
    project,
    standard_bounds,
)

X, Y, Z = (LinExpr.of(SymVar("time", label=n)) for n in "xyz")


@pytest.mark.parametrize(
    "text, value",
    [("49", Fraction(49)), ("-0.5", Fraction(-1, 2)), ("103/2", Fraction(103, 2)), ("0.1", Fraction(1, 10))],
)
def test_parse_rat(text, value):
    assert parse_rat(text) == value


@pytest.mark.parametrize("bad", ["", "1/0", "abc", 0.5, True, "1e3"])
def test_parse_rat_rejects(bad):
    with pytest.raises(ValueError):
        parse_rat(bad)


def test_format_is_lowest_terms():
    assert format_rat(Fraction(206, 4)) == "103/2"
    assert format_rat(Fraction(49)) == "49"


@given(st.fractions(), st.fractions())
def test_rational_addition_is_exact(a, b):
    s = a + b
    assert s.numerator * a.denominator * b.denominator == (
        a.numerator * b.denominator + b.numerator * a.denominator
    ) * s.denominator


def test_activation_time_expr():
    assert activation_time_expr(0, 0) == LinExpr.of(Start(0))
    assert activation_time_expr(0, 2) == Start(0) + Period(0) * 2 + Jitter(0, 1) + Jitter(0, 2)
    values = {Start(0): Fraction(0), Period(0): Fraction(49)}
    values.update({Jitter(0, m): j for m, j in enumerate([Fraction(1, 2), Fraction(-1, 2), Fraction(1, 2)], 1)})
    assert activation_time_expr(0, 3).evaluate(values) == Fraction(295, 2)


def test_standard_bounds_shapes():
    assert len(standard_bounds(0, 0, TABLE1)) == 4
    sys1 = standard_bounds(0, 1, TABLE1)
    assert len(sys1) == 6
    assert not is_satisfiable(sys1 + [LinExpr.of(Jitter(0, 1)).gt(Fraction(1, 2))])
    assert not is_satisfiable(standard_bounds(0, 0, TABLE1) + [LinExpr.of(Start(0)).gt(51)])
    with pytest.raises(ValueError):
        standard_bounds(0, -1, TABLE1)


def test_model_t_start_convention():
    sys_t = standard_bounds(0, 0, TABLE1, START_T) + [
        LinExpr.of(Start(0)).eq(Fraction(103, 2)),
        LinExpr.of(Period(0)).eq(51),
    ]
    w = find_witness(sys_t)
    assert w is not None and w[Start(0)] == Fraction(103, 2)
    assert not is_satisfiable(standard_bounds(0, 0, TABLE1) + [LinExpr.of(Start(0)).eq(Fraction(103, 2))])


def test_trivial_systems():
    assert find_witness([X.ge(1), X.le(0)]) is None
    assert find_witness([X.ge(1), X.le(1)]) == {SymVar("time", label="x"): 1}
    assert find_witness([X.gt(1), X.lt(1)]) is None
    assert find_witness([X.gt(1), X.le(1)]) is None
    w = find_witness([X.gt(1), X.lt(2)])
    assert 1 < w[SymVar("time", label="x")] < 2


def test_resource_ceiling_is_distinct_from_unsat():
    big = [LinExpr.of(SymVar("time", label=f"v{k}")).ge(0) for k in range(70)]
    with pytest.raises(ResourceLimitExceeded):
        find_witness(big)
    with pytest.raises(ResourceLimitExceeded):
        find_witness([X.ge(k) for k in range(10)], max_constraints=5)


def test_timing_constants_json_roundtrip():
    assert TimingConstants.from_json(TABLE1.to_json()) == TABLE1
    with pytest.raises(ValueError, match="jitter_max"):
        TimingConstants.from_json({"period_min": "49", "period_max": "51", "jitter_min": "-0.5"})


# ---------------------------------------------------------------------------
# brute-force oracle: vertices of the closure inside a bounding box


def _solve3(rows, rhs):
    """Exact 3x3 solve; None if singular."""
    m = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(3):
        piv = next((r for r in range(col, 3) if m[r][col] != 0), None)
        if piv is None:
            return None
        m[col], m[piv] = m[piv], m[col]
        for r in range(3):
            if r != col and m[r][col] != 0:
                f = m[r][col] / m[col][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return [m[k][3] / m[k][k] for k in range(3)]


def oracle_sat(cons):
    """cons: list of (coeffs, rel, bound) with rel in <=, <, =. Box |v| <= 10.

    The closed polytope is non-empty iff it has a vertex. The open constraints
    are satisfiable iff they hold strictly at the vertex centroid, which lies
    in the relative interior.
    """
    rows = []
    for a, rel, b in cons:
        rows.append((a, b))
        if rel == "=":
            rows.append(([-x for x in a], -b))
    for k in range(3):
        e = [0, 0, 0]
        e[k] = 1
        rows.append((list(e), 10))
        rows.append(([-x for x in e], 10))
    closed = lambda p: all(sum(x * y for x, y in zip(a, p)) <= b for a, b in rows)  # noqa: E731
    verts = []
    for trio in itertools.combinations(rows, 3):
        p = _solve3([list(map(Fraction, a)) for a, _ in trio], [Fraction(b) for _, b in trio])
        if p is not None and closed(p) and p not in verts:
            verts.append(p)
    if not verts:
        return False
    c = [sum(v[k] for v in verts) / len(verts) for k in range(3)]
    return all(sum(x * y for x, y in zip(a, c)) < b for a, rel, b in cons if rel == "<")


def to_system(cons):
    out = []
    for a, rel, b in cons:
        expr = X * a[0] + Y * a[1] + Z * a[2]
        out.append({"<=": expr.le, "<": expr.lt, "=": expr.eq}[rel](b))
    box = [v.le(10) for v in (X, Y, Z)] + [v.ge(-10) for v in (X, Y, Z)]
    return ConstraintSystem.of(out + box)


def random_systems(n, seed=1234):
    rng = random.Random(seed)
    for _ in range(n):
        cons = []
        for _ in range(rng.randint(1, 6)):
            a = [rng.randint(-3, 3) for _ in range(3)]
            rel = rng.choice(["<=", "<=", "<", "="])
            cons.append((a, rel, rng.randint(-5, 5)))
        yield cons


def test_simplex_agrees_with_vertex_oracle():
    sat_count = 0
    for cons in random_systems(200):
        expected = oracle_sat(cons)
        sat_count += expected
        assert is_satisfiable(to_system(cons)) == expected, cons
    assert 20 < sat_count < 180  # both answers exercised


def test_elimination_agrees_with_simplex():
    for cons in random_systems(120, seed=99):
        system = to_system(cons)
        projected = project(system, [])
        assert all(not c.terms for c in projected)
        assert projected.holds({}) == is_satisfiable(system), cons


def test_eliminate_tracks_strictness():
    x, y = X, Y
    out = eliminate(ConstraintSystem.of(x.gt(1), (x + y).lt(2)), SymVar("time", label="x"))
    assert [str(c) for c in out] == ["y < 1"]


def test_monotonicity():
    for cons in random_systems(60, seed=5):
        base = to_system(cons[:-1])
        if not is_satisfiable(base):
            assert not is_satisfiable(to_system(cons))


def test_implies_and_redundancy():
    system = ConstraintSystem.of(X.ge(1), X.ge(0), X.le(3))
    assert implies(system, X.gt(Fraction(1, 2)))
    assert not implies(system, X.gt(1))
    assert len(drop_redundant(system)) == 2
