"""Symbolic terms, path conditions and a conservative validity prover.

The prover decides a small fragment: equalities and disequalities between
atoms, plus difference bounds (``x - y <= c``, ``x <= c``, strict or not)
over symbols and numeric literals. Bounds are closed over the rationals, so
anything it proves also holds for integer models. Facts outside the fragment
are kept in the path condition but do not take part in reasoning.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from . import ir
from .errors import PoisonRead, UnboundLocal

# -- terms ---------------------------------------------------------------------


@dataclass(frozen=True)
class Sym:
    id: int
    hint: str = field(default="s", compare=False)

    def __str__(self) -> str:
        return f"{self.hint}#{self.id}"


@dataclass(frozen=True)
class LftVar:
    id: int
    hint: str = field(default="'k", compare=False)

    def __str__(self) -> str:
        return f"{self.hint}#{self.id}"


@dataclass(frozen=True)
class ThreadVar:
    id: int
    hint: str = field(default="t", compare=False)

    def __str__(self) -> str:
        return f"{self.hint}#{self.id}"


@dataclass(frozen=True)
class IntLit:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class FracLit:
    """A non-integer rational; only fraction coefficients use it."""

    value: Fraction

    def __str__(self) -> str:
        return f"{self.value.numerator}/{self.value.denominator}"


@dataclass(frozen=True)
class Poison:
    def __str__(self) -> str:
        return "poison"


@dataclass(frozen=True)
class UnitVal:
    def __str__(self) -> str:
        return "()"


@dataclass(frozen=True)
class BoolLit:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Add:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class Sub:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"({self.left} - {self.right})"


@dataclass(frozen=True)
class Cmp:
    """The boolean value of a comparison, as produced by a ``BinOp``."""

    op: str
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class App:
    """A predicate instance carried as a chunk argument (borrow bodies)."""

    name: str
    args: tuple[Term, ...]

    def __str__(self) -> str:
        return f"{self.name}({', '.join(map(str, self.args))})"


Term = Union[Sym, LftVar, ThreadVar, IntLit, FracLit, Poison, UnitVal, BoolLit, Add, Sub, Cmp, App]

POISON = Poison()
UNIT = UnitVal()
TRUE = BoolLit(True)
FALSE = BoolLit(False)
ZERO = IntLit(0)
ONE = IntLit(1)


def num(value: int | Fraction) -> Term:
    q = Fraction(value)
    return IntLit(int(q)) if q.denominator == 1 else FracLit(q)


def numeric_value(t: Term) -> Fraction | None:
    if isinstance(t, IntLit):
        return Fraction(t.value)
    if isinstance(t, FracLit):
        return t.value
    return None


def contains_poison(t: Term) -> bool:
    if isinstance(t, Poison):
        return True
    if isinstance(t, (Add, Sub, Cmp)):
        return contains_poison(t.left) or contains_poison(t.right)
    if isinstance(t, App):
        return any(contains_poison(a) for a in t.args)
    return False


def symbols_of(t: Term):
    if isinstance(t, (Sym, LftVar, ThreadVar)):
        yield t
    elif isinstance(t, (Add, Sub, Cmp)):
        yield from symbols_of(t.left)
        yield from symbols_of(t.right)
    elif isinstance(t, App):
        for a in t.args:
            yield from symbols_of(a)


# -- linear forms --------------------------------------------------------------

Linear = tuple[Fraction, dict]


def linear(t: Term) -> Linear:
    """``t`` as ``const + sum(coeff * atom)``; non-arithmetic subterms are atoms."""
    v = numeric_value(t)
    if v is not None:
        return v, {}
    if isinstance(t, (Add, Sub)):
        k1, c1 = linear(t.left)
        k2, c2 = linear(t.right)
        sign = 1 if isinstance(t, Add) else -1
        out = dict(c1)
        for a, c in c2.items():
            out[a] = out.get(a, 0) + sign * c
        return k1 + sign * k2, {a: c for a, c in out.items() if c != 0}
    return Fraction(0), {t: Fraction(1)}


def _atom_key(a: Term):
    return (getattr(a, "id", 1 << 62), str(a))


def from_linear(const: Fraction, coeffs: Mapping) -> Term:
    """Rebuild a canonical term from a linear form with integer atom coefficients."""
    out: Term | None = None
    for atom in sorted(coeffs, key=_atom_key):
        c = coeffs[atom]
        if c == 0:
            continue
        if c.denominator != 1:
            raise ValueError(f"non-integer coefficient {c} for {atom}")
        for _ in range(abs(int(c))):
            if out is None:
                out = atom if c > 0 else Sub(ZERO, atom)
            else:
                out = Add(out, atom) if c > 0 else Sub(out, atom)
    if out is None:
        return num(const)
    if const > 0:
        return Add(out, num(const))
    if const < 0:
        return Sub(out, num(-const))
    return out


def add(a: Term, b: Term) -> Term:
    va, vb = numeric_value(a), numeric_value(b)
    if va is not None and vb is not None:
        return num(va + vb)
    if vb == 0:
        return a
    return Add(a, b)


def sub(a: Term, b: Term) -> Term:
    va, vb = numeric_value(a), numeric_value(b)
    if va is not None and vb is not None:
        return num(va - vb)
    if vb == 0:
        return a
    return Sub(a, b)


def normalize(t: Term) -> Term:
    return from_linear(*linear(t))


_LITERAL_ATOMS = (IntLit, FracLit, BoolLit, Poison, UnitVal)


def compare(op: str, a: Term, b: Term) -> Term:
    """Boolean value of ``a op b``, folded when both sides are literals."""
    if isinstance(a, _LITERAL_ATOMS) and isinstance(b, _LITERAL_ATOMS):
        va, vb = numeric_value(a), numeric_value(b)
        if op == "==":
            return BoolLit(a == b if va is None or vb is None else va == vb)
        if op == "!=":
            return BoolLit(a != b if va is None or vb is None else va != vb)
        if va is not None and vb is not None:
            return BoolLit(va <= vb if op == "<=" else va < vb)
    return Cmp(op, a, b)


# -- facts ---------------------------------------------------------------------


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} == {self.right}"


@dataclass(frozen=True)
class Neq:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} != {self.right}"


@dataclass(frozen=True)
class Le:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} <= {self.right}"


@dataclass(frozen=True)
class Lt:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} < {self.right}"


@dataclass(frozen=True)
class LftIncl:
    """``inner`` ends no later than ``outer`` (written ``inner ⊑ outer``)."""

    inner: Term
    outer: Term

    def __str__(self) -> str:
        return f"{self.inner} ⊑ {self.outer}"


Fact = Union[Eq, Neq, Le, Lt, LftIncl]

FACT_OF_OP = {"==": Eq, "!=": Neq, "<=": Le, "<": Lt}


def negate(f: Fact) -> Fact:
    if isinstance(f, Eq):
        return Neq(f.left, f.right)
    if isinstance(f, Neq):
        return Eq(f.left, f.right)
    if isinstance(f, Le):
        return Lt(f.right, f.left)
    if isinstance(f, Lt):
        return Le(f.right, f.left)
    raise ValueError(f"cannot negate {f}")


# -- the difference-bound closure ---------------------------------------------

_ORIGIN = "<origin>"
_NONNUMERIC = (Poison, UnitVal, BoolLit)


class _Bounds:
    """Tightest difference bounds implied by a fact set.

    ``dist[u][v] = (c, k)`` encodes ``v - u <= c`` (``k == 0``: strict ``<``).
    """

    def __init__(self, facts: Iterable[Fact]):
        self.index: dict = {_ORIGIN: 0}
        self.edges: dict[tuple[int, int], tuple[Fraction, int]] = {}
        self.diseqs: list[Linear] = []
        self.trivially_false = False
        for f in facts:
            self.add(f)
        self.dist = self._close()

    def node(self, atom) -> int:
        if atom not in self.index:
            self.index[atom] = len(self.index)
        return self.index[atom]

    def add(self, f: Fact) -> None:
        if isinstance(f, LftIncl):
            return
        k1, c1 = linear(f.left)
        k2, c2 = linear(f.right)
        coeffs = dict(c1)
        for a, c in c2.items():
            coeffs[a] = coeffs.get(a, 0) - c
        d = (k1 - k2, {a: c for a, c in coeffs.items() if c != 0})
        for atom in d[1]:
            self.node(atom)
        if isinstance(f, Eq):
            self.bound(d, strict=False)
            self.bound((-d[0], {a: -c for a, c in d[1].items()}), strict=False)
        elif isinstance(f, Le):
            self.bound(d, strict=False)
        elif isinstance(f, Lt):
            self.bound(d, strict=True)
        else:
            self.diseqs.append(d)

    def edge(self, u: int, v: int, c: Fraction, strict: bool) -> None:
        w = (c, 0 if strict else 1)
        if (u, v) not in self.edges or w < self.edges[(u, v)]:
            self.edges[(u, v)] = w

    def bound(self, d: Linear, strict: bool) -> None:
        """Record ``d < 0`` (strict) or ``d <= 0`` when it is a difference bound."""
        const, coeffs = d
        items = sorted(coeffs.items(), key=lambda kv: self.index[kv[0]])
        if not items:
            if const > 0 or (strict and const == 0):
                self.trivially_false = True
            return
        if len(items) == 1:
            (x, c), = items
            if c > 0:
                self.edge(0, self.index[x], -const / c, strict)
            else:
                self.edge(self.index[x], 0, const / c, strict)
            return
        if len(items) == 2 and items[0][1] == -items[1][1]:
            (x, c), (y, _) = items
            if c > 0:
                self.edge(self.index[y], self.index[x], -const / c, strict)
            else:
                self.edge(self.index[x], self.index[y], const / c, strict)
        # anything else lies outside the fragment

    def _close(self):
        n = len(self.index)
        inf = None
        dist = [[inf] * n for _ in range(n)]
        for i in range(n):
            dist[i][i] = (Fraction(0), 1)
        for (u, v), w in self.edges.items():
            if dist[u][v] is None or w < dist[u][v]:
                dist[u][v] = w
        for k in range(n):
            dk = dist[k]
            for i in range(n):
                dik = dist[i][k]
                if dik is None:
                    continue
                di = dist[i]
                for j in range(n):
                    dkj = dk[j]
                    if dkj is None:
                        continue
                    w = (dik[0] + dkj[0], min(dik[1], dkj[1]))
                    if di[j] is None or w < di[j]:
                        di[j] = w
        return dist

    def fixed(self, u: int, v: int) -> Fraction | None:
        """``c`` when ``v - u == c`` is forced, else None."""
        a, b = self.dist[u][v], self.dist[v][u]
        if a is None or b is None or a[1] == 0 or b[1] == 0:
            return None
        return a[0] if a[0] == -b[0] else None

    def unsat(self) -> bool:
        if self.trivially_false:
            return True
        n = len(self.index)
        if any(self.dist[i][i] < (Fraction(0), 1) for i in range(n)):
            return True
        for const, coeffs in self.diseqs:
            items = sorted(coeffs.items(), key=lambda kv: self.index[kv[0]])
            if not items:
                if const == 0:
                    return True
            elif len(items) == 1:
                (x, c), = items
                if self.fixed(0, self.index[x]) == -const / c:
                    return True
            elif len(items) == 2 and items[0][1] == -items[1][1]:
                (x, c), (y, _) = items
                # c * (x - y) + const != 0
                if self.fixed(self.index[y], self.index[x]) == -const / c:
                    return True
        consts = [(a, i) for a, i in self.index.items() if isinstance(a, _NONNUMERIC)]
        for a, i in consts:
            if self.fixed(0, i) is not None:
                return True  # a non-numeric constant forced to a number
        for x in range(len(consts)):
            for y in range(x + 1, len(consts)):
                if self.fixed(consts[x][1], consts[y][1]) == 0:
                    return True
        return False


def _unsat(facts: Iterable[Fact]) -> bool:
    return _Bounds(facts).unsat()


# -- path conditions ----------------------------------------------------------


@dataclass(frozen=True)
class PathCondition:
    facts: tuple[Fact, ...] = ()
    consistent: bool = True

    @property
    def status(self) -> str:
        return "consistent" if self.consistent else "inconsistent"

    def __contains__(self, f: Fact) -> bool:
        return f in self.facts


def assume(pc: PathCondition, f: Fact) -> PathCondition:
    """``pc`` extended with ``f``; inconsistency is absorbing."""
    if f in pc.facts:
        return pc
    facts = pc.facts + (f,)
    if not pc.consistent:
        return PathCondition(facts, False)
    return PathCondition(facts, not _unsat(facts))


def _lft_outlives(pc: PathCondition, inner: Term, outer: Term) -> bool:
    if inner == outer:
        return True
    succ: dict = {}
    for f in pc.facts:
        if isinstance(f, LftIncl):
            succ.setdefault(f.inner, []).append(f.outer)
    seen, todo = {inner}, [inner]
    while todo:
        for nxt in succ.get(todo.pop(), ()):
            if nxt == outer:
                return True
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return False


def prove(pc: PathCondition, f: Fact) -> bool:
    """True when ``f`` holds in every model of ``pc``; False means unknown."""
    if not pc.consistent or f in pc.facts:
        return True
    if isinstance(f, LftIncl):
        return _lft_outlives(pc, f.inner, f.outer)
    if isinstance(f, Eq) and f.left == f.right:
        return True
    if isinstance(f, Le) and f.left == f.right:
        return True
    if isinstance(f, Eq) and isinstance(f.left, App) and isinstance(f.right, App):
        return terms_equal(pc, f.left, f.right)
    return _unsat(pc.facts + (negate(f),))


def terms_equal(pc: PathCondition, a: Term, b: Term) -> bool:
    """Provable equality, structural on predicate-instance arguments."""
    if a == b:
        return True
    if isinstance(a, App) or isinstance(b, App):
        if not (isinstance(a, App) and isinstance(b, App)):
            return False
        return (
            a.name == b.name
            and len(a.args) == len(b.args)
            and all(terms_equal(pc, x, y) for x, y in zip(a.args, b.args))
        )
    return prove(pc, Eq(a, b))


# -- fresh symbols -------------------------------------------------------------


class SymbolSource:
    """Monotone id counter; every symbol of one verification run comes from here."""

    def __init__(self, start: int = 0):
        self.next_id = start

    def _take(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def fresh(self, hint: str = "s") -> Sym:
        return Sym(self._take(), hint)

    def fresh_lft(self, hint: str = "'k") -> LftVar:
        return LftVar(self._take(), hint)

    def fresh_thread(self, hint: str = "t") -> ThreadVar:
        return ThreadVar(self._take(), hint)


def fresh(src: SymbolSource, hint: str = "s") -> Sym:
    return src.fresh(hint)


# -- operands ------------------------------------------------------------------


def eval_operand(store: Mapping[str, Term], op: ir.Operand) -> Term:
    if isinstance(op, ir.Local):
        if op.name not in store:
            raise UnboundLocal(op.name)
        value = store[op.name]
        if contains_poison(value):
            raise PoisonRead(f"local '{op.name}' holds an invalid value")
        return value
    if isinstance(op, ir.IntConst):
        return IntLit(op.value)
    if isinstance(op, ir.BoolConst):
        return BoolLit(op.value)
    if isinstance(op, ir.UnitConst):
        return UNIT
    raise TypeError(op)


def eval_binop(op: str, left: Term, right: Term) -> Term:
    if op == "+":
        return add(left, right)
    if op == "-":
        return sub(left, right)
    return compare(op, left, right)


def cond_facts(cond: Term) -> tuple[Fact, Fact] | None:
    """Facts assumed on the then/else edges of a branch on ``cond``.

    None when ``cond`` is a boolean literal (only one edge is feasible).
    """
    if isinstance(cond, BoolLit):
        return None
    if isinstance(cond, Cmp):
        f = FACT_OF_OP[cond.op](cond.left, cond.right)
        return f, negate(f)
    return Eq(cond, TRUE), Eq(cond, FALSE)
