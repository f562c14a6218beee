"""Assertion syntax shared by contracts, predicate bodies and ghost commands.

These nodes are pure syntax: names are resolved against an environment only
when an assertion is produced or consumed (see :mod:`mirsl.heap`).
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union


@dataclass(frozen=True)
class Loc:
    line: int = 1
    column: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


NOLOC = Loc()


# -- argument patterns ---------------------------------------------------------


@dataclass(frozen=True)
class Name:
    """Reference to a bound name: a local, parameter, binder, lifetime or ``result``."""

    ident: str


@dataclass(frozen=True)
class IntArg:
    value: int


@dataclass(frozen=True)
class PoisonArg:
    pass


@dataclass(frozen=True)
class UnitArg:
    pass


@dataclass(frozen=True)
class Binder:
    """``?x`` -- fresh in produce position, bound from the match in consume position.

    The anonymous binder ``_`` is represented with ``ident == "_"`` and is never
    recorded in the bindings.
    """

    ident: str


@dataclass(frozen=True)
class PredArg:
    """A predicate instance used as an argument (the body of a borrow)."""

    name: str
    args: tuple[ArgPat, ...]


ArgPat = Union[Name, IntArg, PoisonArg, UnitArg, Binder, PredArg]


@dataclass(frozen=True)
class FracLit:
    value: Fraction


@dataclass(frozen=True)
class FracName:
    ident: str


@dataclass(frozen=True)
class FracBinder:
    ident: str


FracPat = Union[FracLit, FracName, FracBinder]


# -- assertions ----------------------------------------------------------------


@dataclass(frozen=True)
class TrueA:
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class EmpA:
    loc: Loc = field(default=NOLOC, compare=False)


PURE_OPS = ("==", "!=", "<=", "<")


@dataclass(frozen=True)
class Pure:
    op: str
    left: ArgPat
    right: ArgPat
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class ChunkPat:
    pred: str
    args: tuple[ArgPat, ...]
    frac: FracPat | None = None
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Sep:
    left: Assertion
    right: Assertion
    loc: Loc = field(default=NOLOC, compare=False)


Assertion = Union[TrueA, EmpA, Pure, ChunkPat, Sep]


def conjuncts(a: Assertion) -> list[Assertion]:
    """Flatten ``&*&`` into its left-to-right list of atomic conjuncts."""
    if isinstance(a, Sep):
        return conjuncts(a.left) + conjuncts(a.right)
    if isinstance(a, (TrueA, EmpA)):
        return []
    return [a]


def sep(*parts: Assertion) -> Assertion:
    """Right-associated conjunction of ``parts``; ``true`` when empty."""
    if not parts:
        return TrueA()
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Sep(p, out)
    return out


def binders_of(a: Assertion) -> list[str]:
    """Binder names in introduction order (duplicates removed, ``_`` skipped)."""
    seen: list[str] = []

    def visit_arg(p: ArgPat) -> None:
        if isinstance(p, Binder) and p.ident != "_" and p.ident not in seen:
            seen.append(p.ident)
        elif isinstance(p, PredArg):
            for q in p.args:
                visit_arg(q)

    for c in conjuncts(a):
        if isinstance(c, ChunkPat):
            if isinstance(c.frac, FracBinder) and c.frac.ident not in seen:
                seen.append(c.frac.ident)
            for p in c.args:
                visit_arg(p)
    return seen


def names_of(a: Assertion) -> Iterator[tuple[str, Loc]]:
    """Every plain name referenced by ``a`` (binders excluded), with location."""

    def visit_arg(p: ArgPat, loc: Loc):
        if isinstance(p, Name):
            yield p.ident, loc
        elif isinstance(p, PredArg):
            for q in p.args:
                yield from visit_arg(q, loc)

    for c in conjuncts(a):
        if isinstance(c, Pure):
            yield from visit_arg(c.left, c.loc)
            yield from visit_arg(c.right, c.loc)
        elif isinstance(c, ChunkPat):
            if isinstance(c.frac, FracName):
                yield c.frac.ident, c.loc
            for p in c.args:
                yield from visit_arg(p, c.loc)


# -- printing ------------------------------------------------------------------


def format_fraction(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def print_arg(p: ArgPat) -> str:
    if isinstance(p, Name):
        return p.ident
    if isinstance(p, IntArg):
        return str(p.value)
    if isinstance(p, PoisonArg):
        return "poison"
    if isinstance(p, UnitArg):
        return "()"
    if isinstance(p, Binder):
        return "_" if p.ident == "_" else f"?{p.ident}"
    if isinstance(p, PredArg):
        return f"{p.name}({', '.join(print_arg(q) for q in p.args)})"
    raise TypeError(p)


def print_frac(f: FracPat) -> str:
    if isinstance(f, FracLit):
        return format_fraction(f.value)
    if isinstance(f, FracName):
        return f.ident
    return f"?{f.ident}"


def print_chunk(c: ChunkPat) -> str:
    frac = f"[{print_frac(c.frac)}]" if c.frac is not None else ""
    return f"{frac}{c.pred}({', '.join(print_arg(p) for p in c.args)})"


def print_assertion(a: Assertion) -> str:
    if isinstance(a, TrueA):
        return "true"
    if isinstance(a, EmpA):
        return "emp"
    if isinstance(a, Pure):
        return f"{print_arg(a.left)} {a.op} {print_arg(a.right)}"
    if isinstance(a, ChunkPat):
        return print_chunk(a)
    if isinstance(a, Sep):
        left = print_assertion(a.left)
        # &*& is right-associative; a nested left conjunction is not expressible
        # without parentheses, which the grammar lacks, so flatten it.
        if isinstance(a.left, Sep):
            return print_assertion(sep(*conjuncts_keep_units(a)))
        return f"{left} &*& {print_assertion(a.right)}"
    raise TypeError(a)


def conjuncts_keep_units(a: Assertion) -> list[Assertion]:
    if isinstance(a, Sep):
        return conjuncts_keep_units(a.left) + conjuncts_keep_units(a.right)
    return [a]
