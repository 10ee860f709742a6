"""Exact rational timing arithmetic and linear feasibility over the rationals.

Activation times are linear in the per-node period, start offset and the
per-activation jitters, so every timing question the verifiers ask is a
conjunction of linear (in)equalities. This module provides:

* :class:`SymVar` / :class:`LinExpr` / :class:`LinConstraint` /
  :class:`ConstraintSystem` to build such conjunctions,
* :func:`find_witness`, an exact general simplex over ``Q`` extended with an
  infinitesimal (so strict inequalities are first class),
* :func:`eliminate` / :func:`project`, Fourier-Motzkin projection with
  open/closed bound tracking, and :func:`drop_redundant`.

No floating point is used anywhere.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

Rat = Fraction

Number = Union[int, Fraction]

DEFAULT_MAX_VARS = 64
DEFAULT_MAX_CONSTRAINTS = 4096

_RAT_RE = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)(\s*/\s*\d+)?\s*$")


class ResourceLimitExceeded(RuntimeError):
    """A satisfiability query exceeded the configured variable/constraint ceiling."""


def parse_rat(value: object) -> Fraction:
    """Parse ``"49"``, ``"-0.5"``, ``"103/2"`` (or an int/Fraction) exactly.

    Floats are rejected: they cannot be trusted to carry the intended decimal.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str) and _RAT_RE.match(value):
        try:
            return Fraction(value.replace(" ", ""))
        except ZeroDivisionError:
            raise ValueError(f"zero denominator: {value!r}") from None
    raise ValueError(f"not a rational: {value!r}")


def format_rat(q: Fraction) -> str:
    """Canonical ``p/q`` form in lowest terms (integers print without ``/1``)."""
    return str(Fraction(q))


# ---------------------------------------------------------------------------
# timing constants


@dataclass(frozen=True)
class TimingConstants:
    period_min: Fraction
    period_max: Fraction
    jitter_min: Fraction
    jitter_max: Fraction

    def __post_init__(self) -> None:
        for name in ("period_min", "period_max", "jitter_min", "jitter_max"):
            object.__setattr__(self, name, parse_rat(getattr(self, name)))
        if not 0 < self.period_min <= self.period_max:
            raise ValueError("need 0 < period_min <= period_max")
        if self.jitter_min > self.jitter_max:
            raise ValueError("need jitter_min <= jitter_max")
        if self.period_min + self.jitter_min <= 0:
            raise ValueError("need period_min + jitter_min > 0")

    @property
    def min_spacing(self) -> Fraction:
        return self.period_min + self.jitter_min

    @property
    def max_spacing(self) -> Fraction:
        return self.period_max + self.jitter_max

    def to_json(self) -> dict[str, str]:
        return {
            "period_min": format_rat(self.period_min),
            "period_max": format_rat(self.period_max),
            "jitter_min": format_rat(self.jitter_min),
            "jitter_max": format_rat(self.jitter_max),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> TimingConstants:
        missing = [k for k in ("period_min", "period_max", "jitter_min", "jitter_max") if k not in data]
        if missing:
            raise ValueError(f"constants: missing field(s) {', '.join(missing)}")
        return cls(**{k: parse_rat(data[k]) for k in ("period_min", "period_max", "jitter_min", "jitter_max")})


TABLE1 = TimingConstants(Fraction(49), Fraction(51), Fraction(-1, 2), Fraction(1, 2))


# ---------------------------------------------------------------------------
# symbolic variables and linear expressions


@dataclass(frozen=True, order=True)
class SymVar:
    kind: str
    node: int = -1
    index: int = -1
    label: str = ""

    def __str__(self) -> str:
        if self.kind == "period":
            return f"Period({self.node})"
        if self.kind == "start":
            return f"Start({self.node})"
        if self.kind == "jitter":
            return f"Jitter({self.node},{self.index})"
        return self.label

    # arithmetic sugar: SymVar behaves like the expression 1*var
    def __add__(self, other):
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr.of(self) - other

    def __rsub__(self, other):
        return LinExpr.of(other) - LinExpr.of(self)

    def __neg__(self):
        return -LinExpr.of(self)

    def __mul__(self, k):
        return LinExpr.of(self) * k

    __rmul__ = __mul__


def Period(node: int) -> SymVar:
    return SymVar("period", node)


def Start(node: int) -> SymVar:
    return SymVar("start", node)


def Jitter(node: int, m: int) -> SymVar:
    if m < 1:
        raise ValueError("jitter activation index starts at 1")
    return SymVar("jitter", node, m)


def TimePoint(label: str) -> SymVar:
    return SymVar("time", label=label)


class LinExpr:
    """Immutable-by-convention linear form ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[SymVar, Number] | None = None, const: Number = 0):
        self.terms: dict[SymVar, Fraction] = {
            v: Fraction(c) for v, c in (terms or {}).items() if c != 0
        }
        self.const = Fraction(const)

    @classmethod
    def of(cls, x: LinExpr | SymVar | Number) -> LinExpr:
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, SymVar):
            return cls({x: 1})
        return cls(const=parse_rat(x))

    def __add__(self, other) -> LinExpr:
        o = LinExpr.of(other)
        terms = dict(self.terms)
        for v, c in o.terms.items():
            terms[v] = terms.get(v, 0) + c
        return LinExpr(terms, self.const + o.const)

    __radd__ = __add__

    def __neg__(self) -> LinExpr:
        return LinExpr({v: -c for v, c in self.terms.items()}, -self.const)

    def __sub__(self, other) -> LinExpr:
        return self + (-LinExpr.of(other))

    def __rsub__(self, other) -> LinExpr:
        return LinExpr.of(other) - self

    def __mul__(self, k: Number) -> LinExpr:
        k = parse_rat(k)
        return LinExpr({v: c * k for v, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, (LinExpr, SymVar, int, Fraction)):
            return NotImplemented
        o = LinExpr.of(other)
        return self.terms == o.terms and self.const == o.const

    def __hash__(self) -> int:
        return hash((frozenset(self.terms.items()), self.const))

    def __repr__(self) -> str:
        return f"LinExpr({_format_terms(sorted(self.terms.items()))} + {self.const})"

    def evaluate(self, assignment: Mapping[SymVar, Fraction]) -> Fraction:
        return self.const + sum((c * assignment[v] for v, c in self.terms.items()), Fraction(0))

    def substitute(self, assignment: Mapping[SymVar, LinExpr | SymVar | Number]) -> LinExpr:
        out = LinExpr(const=self.const)
        for v, c in self.terms.items():
            out = out + (LinExpr.of(assignment[v]) * c if v in assignment else LinExpr({v: c}))
        return out

    def _rel(self, other, rel: str) -> LinConstraint:
        diff = self - LinExpr.of(other)
        return LinConstraint(tuple(sorted(diff.terms.items())), rel, -diff.const)

    def le(self, other) -> LinConstraint:
        return self._rel(other, "<=")

    def lt(self, other) -> LinConstraint:
        return self._rel(other, "<")

    def ge(self, other) -> LinConstraint:
        return self._rel(other, ">=")

    def gt(self, other) -> LinConstraint:
        return self._rel(other, ">")

    def eq(self, other) -> LinConstraint:
        return self._rel(other, "=")


def _format_terms(terms) -> str:
    parts = []
    for v, c in terms:
        if c == 1:
            parts.append(f"+ {v}")
        elif c == -1:
            parts.append(f"- {v}")
        elif c < 0:
            parts.append(f"- {format_rat(-c)}*{v}")
        else:
            parts.append(f"+ {format_rat(c)}*{v}")
    s = " ".join(parts) or "0"
    return s[2:] if s.startswith("+ ") else s


_RELATIONS = ("<=", "<", "=", ">=", ">")
_FLIP = {"<=": ">=", "<": ">", "=": "=", ">=": "<=", ">": "<"}


@dataclass(frozen=True)
class LinConstraint:
    """``sum(coef * var)  relation  bound``."""

    terms: tuple[tuple[SymVar, Fraction], ...]
    relation: str
    bound: Fraction

    def __post_init__(self) -> None:
        if self.relation not in _RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")

    @property
    def lhs(self) -> LinExpr:
        return LinExpr(dict(self.terms))

    def variables(self) -> set[SymVar]:
        return {v for v, _ in self.terms}

    def holds(self, assignment: Mapping[SymVar, Fraction]) -> bool:
        return _compare(self.lhs.evaluate(assignment), self.relation, self.bound)

    def negated(self) -> LinConstraint:
        if self.relation == "=":
            raise ValueError("cannot negate an equality into one constraint")
        neg = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}[self.relation]
        return LinConstraint(self.terms, neg, self.bound)

    def __str__(self) -> str:
        return f"{_format_terms(self.terms)} {self.relation} {format_rat(self.bound)}"


def _compare(a: Fraction, rel: str, b: Fraction) -> bool:
    if rel == "<=":
        return a <= b
    if rel == "<":
        return a < b
    if rel == "=":
        return a == b
    if rel == ">=":
        return a >= b
    return a > b


@dataclass(frozen=True)
class ConstraintSystem:
    constraints: tuple[LinConstraint, ...] = ()

    @classmethod
    def of(cls, *items: LinConstraint | ConstraintSystem | Iterable[LinConstraint]) -> ConstraintSystem:
        out: list[LinConstraint] = []
        for item in items:
            if isinstance(item, LinConstraint):
                out.append(item)
            elif isinstance(item, ConstraintSystem):
                out.extend(item.constraints)
            else:
                out.extend(item)
        return cls(tuple(dict.fromkeys(out)))

    def __add__(self, other: LinConstraint | ConstraintSystem | Iterable[LinConstraint]) -> ConstraintSystem:
        return ConstraintSystem.of(self, other)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def variables(self) -> list[SymVar]:
        return sorted({v for c in self.constraints for v, _ in c.terms})

    def holds(self, assignment: Mapping[SymVar, Fraction]) -> bool:
        return all(c.holds(assignment) for c in self.constraints)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.constraints)


# ---------------------------------------------------------------------------
# activation-time recurrence


def activation_time_expr(node: int, k: int, start_shift: Number = 0) -> LinExpr:
    """Symbolic time of activation ``k`` (0-based) of ``node``.

    ``Start + k*Period + Jitter(1) + ... + Jitter(k)``.
    """
    if k < 0:
        raise ValueError("activation index must be >= 0")
    terms: dict[SymVar, Fraction] = {Start(node): Fraction(1)}
    if k:
        terms[Period(node)] = Fraction(k)
    for m in range(1, k + 1):
        terms[Jitter(node, m)] = Fraction(1)
    return LinExpr(terms)


START_M = "M"  # Start in [0, Period]
START_T = "T"  # Start in [0, Period + jitter_max]


def standard_bounds(
    node: int,
    k_max: int,
    tc: TimingConstants,
    convention: str = START_M,
    start_shift: Number = 0,
) -> ConstraintSystem:
    """Interval constraints on one node's period, first ``k_max`` jitters and start."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if convention not in (START_M, START_T):
        raise ValueError(f"unknown start convention {convention!r}")
    per = LinExpr.of(Period(node))
    start = LinExpr.of(Start(node))
    out = [per.ge(tc.period_min), per.le(tc.period_max)]
    for m in range(1, k_max + 1):
        jit = LinExpr.of(Jitter(node, m))
        out += [jit.ge(tc.jitter_min), jit.le(tc.jitter_max)]
    slack = tc.jitter_max if convention == START_T else 0
    out += [start.ge(start_shift), start.le(per + slack + start_shift)]
    return ConstraintSystem.of(out)


# ---------------------------------------------------------------------------
# general simplex with delta-rationals
#
# A value (c, k) stands for c + k*delta with delta a positive infinitesimal;
# tuple ordering is exactly the order on such values.

_ZERO = (Fraction(0), Fraction(0))


def _dr_add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _dr_sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _dr_scale(a, q):
    return (a[0] * q, a[1] * q)


class _Infeasible(Exception):
    pass


class _Tableau:
    def __init__(self, n: int):
        self.n = n
        self.lo: list[tuple | None] = [None] * n
        self.hi: list[tuple | None] = [None] * n
        self.rows: dict[int, dict[int, Fraction]] = {}
        self.val: list[tuple] = [_ZERO] * n

    def add_var(self) -> int:
        self.lo.append(None)
        self.hi.append(None)
        self.val.append(_ZERO)
        self.n += 1
        return self.n - 1

    def tighten(self, x: int, lo=None, hi=None) -> None:
        if lo is not None and (self.lo[x] is None or lo > self.lo[x]):
            self.lo[x] = lo
        if hi is not None and (self.hi[x] is None or hi < self.hi[x]):
            self.hi[x] = hi
        if self.lo[x] is not None and self.hi[x] is not None and self.lo[x] > self.hi[x]:
            raise _Infeasible

    def init_values(self) -> None:
        for x in range(self.n):
            if x in self.rows:
                continue
            if self.lo[x] is not None:
                self.val[x] = self.lo[x]
            elif self.hi[x] is not None:
                self.val[x] = self.hi[x]
        for b, row in self.rows.items():
            acc = _ZERO
            for j, a in row.items():
                acc = _dr_add(acc, _dr_scale(self.val[j], a))
            self.val[b] = acc

    def _pivot_and_update(self, i: int, j: int, target) -> None:
        row_i = self.rows[i]
        a_ij = row_i[j]
        theta = _dr_scale(_dr_sub(target, self.val[i]), 1 / a_ij)
        self.val[i] = target
        self.val[j] = _dr_add(self.val[j], theta)
        for k, row in self.rows.items():
            if k != i and j in row:
                self.val[k] = _dr_add(self.val[k], _dr_scale(theta, row[j]))
        # x_j = (x_i - sum_{l != j} a_il x_l) / a_ij
        inv = 1 / a_ij
        new_row = {i: inv}
        for l, a in row_i.items():
            if l != j:
                new_row[l] = -a * inv
        del self.rows[i]
        for k, row in self.rows.items():
            c = row.pop(j, None)
            if c is None:
                continue
            for l, a in new_row.items():
                v = row.get(l, 0) + c * a
                if v:
                    row[l] = v
                else:
                    row.pop(l, None)
        self.rows[j] = new_row

    def check(self) -> bool:
        while True:
            bad = None
            for b in sorted(self.rows):
                v = self.val[b]
                if (self.lo[b] is not None and v < self.lo[b]) or (self.hi[b] is not None and v > self.hi[b]):
                    bad = b
                    break
            if bad is None:
                return True
            row = self.rows[bad]
            increase = self.lo[bad] is not None and self.val[bad] < self.lo[bad]
            chosen = None
            for j in sorted(row):
                a = row[j]
                can_up = self.hi[j] is None or self.val[j] < self.hi[j]
                can_down = self.lo[j] is None or self.val[j] > self.lo[j]
                if increase and ((a > 0 and can_up) or (a < 0 and can_down)):
                    chosen = j
                    break
                if not increase and ((a < 0 and can_up) or (a > 0 and can_down)):
                    chosen = j
                    break
            if chosen is None:
                return False
            self._pivot_and_update(bad, chosen, self.lo[bad] if increase else self.hi[bad])

    def concrete_delta(self) -> Fraction:
        delta = Fraction(1)
        for x in range(self.n):
            c, k = self.val[x]
            if self.lo[x] is not None:
                lc, lk = self.lo[x]
                if lk > k:
                    delta = min(delta, (c - lc) / (lk - k))
            if self.hi[x] is not None:
                hc, hk = self.hi[x]
                if k > hk:
                    delta = min(delta, (hc - c) / (k - hk))
        return delta


def _bound_pair(relation: str, b: Fraction):
    """(lower, upper) delta-rational bounds for ``x relation b``."""
    if relation == "<=":
        return None, (b, Fraction(0))
    if relation == "<":
        return None, (b, Fraction(-1))
    if relation == ">=":
        return (b, Fraction(0)), None
    if relation == ">":
        return (b, Fraction(1)), None
    return (b, Fraction(0)), (b, Fraction(0))


def find_witness(
    system: ConstraintSystem | Iterable[LinConstraint],
    max_vars: int = DEFAULT_MAX_VARS,
    max_constraints: int = DEFAULT_MAX_CONSTRAINTS,
) -> dict[SymVar, Fraction] | None:
    """Return an exact rational solution of the conjunction, or ``None`` if unsat.

    The returned assignment is checked by substitution against every
    constraint before it is returned.

    Raises:
        ResourceLimitExceeded: more than ``max_vars`` variables or
            ``max_constraints`` constraints.
    """
    if not isinstance(system, ConstraintSystem):
        system = ConstraintSystem.of(system)
    variables = system.variables()
    if len(variables) > max_vars:
        raise ResourceLimitExceeded(f"{len(variables)} variables > ceiling {max_vars}")
    if len(system) > max_constraints:
        raise ResourceLimitExceeded(f"{len(system)} constraints > ceiling {max_constraints}")

    index = {v: i for i, v in enumerate(variables)}
    tab = _Tableau(len(variables))
    slacks: dict[tuple, int] = {}
    try:
        for con in system:
            terms = [(index[v], c) for v, c in con.terms if c != 0]
            if not terms:
                if not _compare(Fraction(0), con.relation, con.bound):
                    return None
                continue
            lead = terms[0][1]
            rel = con.relation if lead > 0 else _FLIP[con.relation]
            bound = con.bound / lead
            if len(terms) == 1:
                x = terms[0][0]
            else:
                key = tuple((i, c / lead) for i, c in terms)
                x = slacks.get(key)
                if x is None:
                    x = tab.add_var()
                    slacks[key] = x
                    tab.rows[x] = dict(key)
            lo, hi = _bound_pair(rel, bound)
            tab.tighten(x, lo, hi)
    except _Infeasible:
        return None

    tab.init_values()
    if not tab.check():
        return None
    delta = tab.concrete_delta()
    witness = {v: tab.val[i][0] + tab.val[i][1] * delta for v, i in index.items()}
    for con in system:
        if not con.holds(witness):  # pragma: no cover - solver bug guard
            raise AssertionError(f"witness violates {con}")
    return witness


def is_satisfiable(system: ConstraintSystem | Iterable[LinConstraint], **limits) -> bool:
    return find_witness(system, **limits) is not None


# ---------------------------------------------------------------------------
# normal forms, Fourier-Motzkin projection, redundancy removal


def normalize(con: LinConstraint) -> list[LinConstraint]:
    """Rewrite as ``<=``/``<`` constraints with coprime integer coefficients."""
    if con.relation == "=":
        return normalize(LinConstraint(con.terms, "<=", con.bound)) + normalize(
            LinConstraint(con.terms, ">=", con.bound)
        )
    sign = -1 if con.relation in (">=", ">") else 1
    rel = "<" if con.relation in ("<", ">") else "<="
    terms = [(v, c * sign) for v, c in con.terms if c != 0]
    bound = con.bound * sign
    if not terms:
        return [LinConstraint((), rel, bound)]
    denom = math.lcm(*(c.denominator for _, c in terms))
    ints = [int(c * denom) for _, c in terms]
    g = math.gcd(*ints)
    scale = Fraction(denom, g)
    return [LinConstraint(tuple(sorted((v, c * scale) for v, c in terms)), rel, bound * scale)]


def _tightest(constraints: Iterable[LinConstraint]) -> list[LinConstraint]:
    best: dict[tuple, LinConstraint] = {}
    trivial_false: list[LinConstraint] = []
    for con in constraints:
        for c in normalize(con):
            if not c.terms:
                if not _compare(Fraction(0), c.relation, c.bound):
                    trivial_false.append(c)
                continue
            old = best.get(c.terms)
            if old is None or c.bound < old.bound or (c.bound == old.bound and c.relation == "<"):
                best[c.terms] = c
    if trivial_false:
        return trivial_false[:1]
    return [best[k] for k in sorted(best, key=lambda t: [(str(v), c) for v, c in t])]


def eliminate(system: ConstraintSystem, var: SymVar) -> ConstraintSystem:
    """Fourier-Motzkin: the projection of ``system`` with ``var`` existentially removed."""
    upper, lower, rest = [], [], []
    for con in _tightest(system):
        coef = dict(con.terms).get(var, 0)
        (upper if coef > 0 else lower if coef < 0 else rest).append((con, coef))
    out = [c for c, _ in rest]
    for up, a in upper:
        for lo, b in lower:
            # up/a + lo/|b| cancels var
            combined: dict[SymVar, Fraction] = {}
            for v, c in up.terms:
                combined[v] = combined.get(v, 0) + c / a
            for v, c in lo.terms:
                combined[v] = combined.get(v, 0) + c / -b
            combined.pop(var, None)
            rel = "<" if "<" in (up.relation, lo.relation) else "<="
            out.append(
                LinConstraint(
                    tuple(sorted((v, c) for v, c in combined.items() if c != 0)),
                    rel,
                    up.bound / a + lo.bound / -b,
                )
            )
    return ConstraintSystem.of(_tightest(out))


def project(system: ConstraintSystem, keep: Iterable[SymVar]) -> ConstraintSystem:
    keep = set(keep)
    for v in system.variables():
        if v not in keep:
            system = eliminate(system, v)
    return system


def drop_redundant(system: ConstraintSystem, **limits) -> ConstraintSystem:
    """Normalize and remove every constraint implied by the remaining ones."""
    kept = _tightest(system)
    if len(kept) == 1 and not kept[0].terms:
        return ConstraintSystem(tuple(kept))
    i = 0
    while i < len(kept):
        others = kept[:i] + kept[i + 1:]
        if find_witness(others + [kept[i].negated()], **limits) is None:
            kept = others
        else:
            i += 1
    return ConstraintSystem(tuple(kept))


def implies(system: ConstraintSystem, con: LinConstraint, **limits) -> bool:
    """Whether every solution of ``system`` satisfies ``con``."""
    return all(find_witness(system + c.negated(), **limits) is None for c in normalize(con))


def includes(outer: ConstraintSystem, inner: ConstraintSystem, **limits) -> bool:
    """Whether the solution set of ``inner`` is contained in that of ``outer``."""
    return all(implies(inner, c, **limits) for c in outer)
