"""Symbolic heap as a chunk multiset, and the produce/consume engine.

Chunk coefficients are terms: literal fractions for split tokens, symbols for
the fractions a function receives on entry. Only ``lft`` chunks may hold less
than the full fraction; ``na_bor`` chunks are persistent and survive a match.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from . import assertions as A
from .errors import (
    FractionOverflow,
    InsufficientFraction,
    MissingChunk,
    UnboundName,
    UnprovenFact,
)
from .ir import FRACTIONAL_PREDICATES, PERSISTENT_PREDICATES
from .symbolic import (
    FACT_OF_OP,
    ONE,
    POISON,
    UNIT,
    ZERO,
    App,
    IntLit,
    Le,
    Lt,
    PathCondition,
    SymbolSource,
    Term,
    assume,
    from_linear,
    linear,
    normalize,
    num,
    numeric_value,
    prove,
    sub,
    terms_equal,
)


@dataclass(frozen=True)
class Chunk:
    pred: str
    args: tuple[Term, ...]
    coeff: Term = ONE

    def __str__(self) -> str:
        prefix = "" if self.coeff == ONE else f"[{self.coeff}]"
        return f"{prefix}{self.pred}({', '.join(map(str, self.args))})"


class Heap:
    """Immutable chunk multiset. Iteration order is insertion order; equality ignores it."""

    __slots__ = ("chunks",)

    def __init__(self, chunks=()):
        object.__setattr__(self, "chunks", tuple(chunks))

    def __setattr__(self, name, value):
        raise AttributeError("Heap is immutable")

    def __iter__(self):
        return iter(self.chunks)

    def __len__(self) -> int:
        return len(self.chunks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Heap):
            return NotImplemented
        return Counter(self.chunks) == Counter(other.chunks)

    def __hash__(self) -> int:
        return hash(frozenset(Counter(self.chunks).items()))

    def __repr__(self) -> str:
        return f"Heap({list(self.chunks)!r})"

    def add(self, *chunks: Chunk) -> Heap:
        return Heap(self.chunks + chunks)

    def remove_at(self, i: int) -> Heap:
        return Heap(self.chunks[:i] + self.chunks[i + 1:])

    def replace_at(self, i: int, *chunks: Chunk) -> Heap:
        return Heap(self.chunks[:i] + chunks + self.chunks[i + 1:])

    def render(self) -> list[str]:
        return sorted(str(c) for c in self.chunks)


@dataclass(frozen=True)
class EntryFrame:
    """Tokens a function received on entry and must hand back at return."""

    thread: Term
    tokens: tuple[tuple[str, Term, Term], ...] = ()  # (lifetime name, lifetime, fraction)
    fn_lft: Term | None = None


@dataclass(frozen=True)
class SymbolicState:
    store: Mapping[str, Term] = field(default_factory=dict)
    heap: Heap = field(default_factory=Heap)
    pc: PathCondition = field(default_factory=PathCondition)
    ghost: Mapping[str, Term] = field(default_factory=dict)
    applied_updates: frozenset = frozenset()
    leaked: tuple[Chunk, ...] = ()
    frame: EntryFrame | None = None

    def replace(self, **kw) -> SymbolicState:
        return dataclasses.replace(self, **kw)

    def with_local(self, name: str, value: Term) -> SymbolicState:
        return self.replace(store={**self.store, name: value})

    def with_ghost(self, bindings: Mapping[str, Term]) -> SymbolicState:
        return self.replace(ghost={**self.ghost, **bindings})

    def assume(self, fact) -> SymbolicState:
        return self.replace(pc=assume(self.pc, fact))

    @property
    def terminal(self) -> bool:
        return not self.pc.consistent


Bindings = dict


# -- instantiation -------------------------------------------------------------


def instantiate(p: A.ArgPat, env: Mapping[str, Term]) -> Term:
    """Ground term for a binder-free argument pattern."""
    if isinstance(p, A.Name):
        if p.ident not in env:
            raise UnboundName(p.ident)
        return env[p.ident]
    if isinstance(p, A.IntArg):
        return IntLit(p.value)
    if isinstance(p, A.PoisonArg):
        return POISON
    if isinstance(p, A.UnitArg):
        return UNIT
    if isinstance(p, A.PredArg):
        return App(p.name, tuple(instantiate(q, env) for q in p.args))
    raise UnboundName(f"?{p.ident} is only allowed where a value can be bound")


def instantiate_frac(f: A.FracPat | None, env: Mapping[str, Term]) -> Term:
    if f is None:
        return ONE
    if isinstance(f, A.FracLit):
        return num(f.value)
    if isinstance(f, A.FracName):
        if f.ident not in env:
            raise UnboundName(f.ident)
        return env[f.ident]
    raise UnboundName(f"?{f.ident}")


def render_pattern(args, env: Mapping[str, Term]) -> str:
    def one(p) -> str:
        if isinstance(p, A.Binder):
            return A.print_arg(p)
        if isinstance(p, A.PredArg):
            return f"{p.name}({', '.join(one(q) for q in p.args)})"
        try:
            return str(instantiate(p, env))
        except UnboundName:
            return A.print_arg(p)

    return ", ".join(one(p) for p in args)


# -- produce -------------------------------------------------------------------


def _produce_arg(p: A.ArgPat, env: dict, src: SymbolSource) -> Term:
    if isinstance(p, A.Binder):
        t = src.fresh(p.ident if p.ident != "_" else "v")
        if p.ident != "_":
            env[p.ident] = t
        return t
    if isinstance(p, A.PredArg):
        return App(p.name, tuple(_produce_arg(q, env, src) for q in p.args))
    return instantiate(p, env)


def produce(state: SymbolicState, a: A.Assertion, env: Mapping[str, Term], src: SymbolSource):
    """Add the resources and facts of ``a``; returns ``(state, bindings)``.

    Unbound ``?x`` binders become fresh symbols; ``[?q]`` also yields ``0 < q <= 1``.
    """
    env = dict(env)
    heap, pc = state.heap, state.pc
    for c in A.conjuncts(a):
        if isinstance(c, A.Pure):
            fact = FACT_OF_OP[c.op](_produce_arg(c.left, env, src), _produce_arg(c.right, env, src))
            pc = assume(pc, fact)
            continue
        args = tuple(_produce_arg(p, env, src) for p in c.args)
        if isinstance(c.frac, A.FracBinder):
            q = src.fresh(c.frac.ident if c.frac.ident != "_" else "q")
            if c.frac.ident != "_":
                env[c.frac.ident] = q
            pc = assume(assume(pc, Lt(ZERO, q)), Le(q, ONE))
            coeff: Term = q
        else:
            coeff = instantiate_frac(c.frac, env)
        heap = heap.add(Chunk(c.pred, args, coeff))
    return state.replace(heap=heap, pc=pc), env


# -- consume -------------------------------------------------------------------


def match_arg(p: A.ArgPat, t: Term, env: dict, pc: PathCondition):
    """Extended bindings if ``t`` matches ``p`` under ``pc``, else None."""
    if isinstance(p, A.Binder):
        if p.ident == "_":
            return env
        return {**env, p.ident: t}
    if isinstance(p, A.PredArg):
        if not isinstance(t, App) or t.name != p.name or len(t.args) != len(p.args):
            return None
        for q, u in zip(p.args, t.args):
            env = match_arg(q, u, env, pc)
            if env is None:
                return None
        return env
    return env if terms_equal(pc, instantiate(p, env), t) else None


def take_fraction(chunk: Chunk, req: Term | None, pc: PathCondition):
    """Remove ``req`` of ``chunk`` (all of it when ``req`` is None).

    Returns ``(remainder_or_None, taken)`` or None when ``req`` exceeds the
    provably held amount.
    """
    if chunk.pred in PERSISTENT_PREDICATES:
        return chunk, chunk.coeff
    held = chunk.coeff
    if req is None:
        return None, held
    if chunk.pred not in FRACTIONAL_PREDICATES:
        return (None, held) if terms_equal(pc, req, held) else None
    if terms_equal(pc, req, held):
        return None, held
    if prove(pc, Lt(ZERO, req)) and prove(pc, Lt(req, held)):
        return Chunk(chunk.pred, chunk.args, normalize(sub(held, req))), req
    return None


class _Search:
    def __init__(self, conj, pc: PathCondition):
        self.conj = conj
        self.pc = pc
        self.best: tuple[int, Exception] | None = None
        self.matched: list[Chunk] = []

    def fail(self, i: int, err: Exception) -> None:
        if self.best is None or i > self.best[0] or i == self.best[0] and isinstance(err, InsufficientFraction) and isinstance(self.best[1], MissingChunk):
            self.best = (i, err)

    def run(self, i: int, chunks: tuple[Chunk, ...], env: dict):
        if i == len(self.conj):
            return chunks, env
        c = self.conj[i]
        if isinstance(c, A.Pure):
            fact = FACT_OF_OP[c.op](instantiate(c.left, env), instantiate(c.right, env))
            if prove(self.pc, fact):
                return self.run(i + 1, chunks, env)
            self.fail(i, UnprovenFact(str(fact)))
            return None
        req = None if isinstance(c.frac, A.FracBinder) else instantiate_frac(c.frac, env)
        found = False
        for j, ch in enumerate(chunks):
            if ch.pred != c.pred or len(ch.args) != len(c.args):
                continue
            found = True
            env2 = env
            for p, t in zip(c.args, ch.args):
                env2 = match_arg(p, t, env2, self.pc)
                if env2 is None:
                    break
            if env2 is None:
                self.fail(i, MissingChunk(c.pred, render_pattern(c.args, env)))
                continue
            taken = take_fraction(ch, req, self.pc)
            if taken is None:
                self.fail(i, InsufficientFraction(c.pred, f"[{req}]{c.pred}({render_pattern(c.args, env)}) from {ch}"))
                continue
            rest, amount = taken
            if isinstance(c.frac, A.FracBinder) and c.frac.ident != "_":
                env2 = {**env2, c.frac.ident: amount}
            remaining = chunks[:j] + ((rest,) if rest is not None else ()) + chunks[j + 1:]
            self.matched.append(Chunk(ch.pred, ch.args, amount))
            out = self.run(i + 1, remaining, env2)
            if out is not None:
                return out
            self.matched.pop()
        if not found:
            self.fail(i, MissingChunk(c.pred, render_pattern(c.args, env)))
        return None


def consume_matches(state: SymbolicState, a: A.Assertion, env: Mapping[str, Term]):
    """Like :func:`consume` but also returns the matched chunks in conjunct order."""
    search = _Search(A.conjuncts(a), state.pc)
    out = search.run(0, state.heap.chunks, dict(env))
    if out is None:
        assert search.best is not None
        raise search.best[1]
    chunks, bindings = out
    return state.replace(heap=Heap(chunks)), bindings, list(search.matched)


def consume(state: SymbolicState, a: A.Assertion, env: Mapping[str, Term]):
    """Match and remove the resources of ``a`` and prove its facts.

    Conjuncts are matched left to right; when a later conjunct fails the
    search backtracks over earlier same-predicate candidates. Returns
    ``(state, bindings)`` or raises the failure of the deepest conjunct reached.
    """
    state, bindings, _ = consume_matches(state, a, env)
    return state, bindings


# -- token arithmetic ---------------------------------------------------------


def _same_args(pc: PathCondition, xs, ys) -> bool:
    return len(xs) == len(ys) and all(terms_equal(pc, x, y) for x, y in zip(xs, ys))


def _as_term(part) -> Term:
    return num(part) if isinstance(part, (int, Fraction)) else part


def split_token(h: Heap, pred: str, args, part, pc: PathCondition = PathCondition()) -> Heap:
    """Split ``part`` off a held token, leaving ``[part]`` and ``[coeff - part]`` side by side."""
    part = _as_term(part)
    args = tuple(args)
    for i, c in enumerate(h):
        if c.pred != pred or not _same_args(pc, c.args, args):
            continue
        if terms_equal(pc, c.coeff, part):
            return h
        if prove(pc, Lt(ZERO, part)) and prove(pc, Lt(part, c.coeff)):
            rest = normalize(sub(c.coeff, part))
            return h.replace_at(i, Chunk(pred, c.args, part), Chunk(pred, c.args, rest))
    raise InsufficientFraction(pred, f"cannot split [{part}]{pred}({', '.join(map(str, args))})")


def merge_tokens(h: Heap, pred: str, args, pc: PathCondition = PathCondition()) -> Heap:
    """Join every chunk of ``pred`` whose arguments provably equal ``args``."""
    args = tuple(args)
    idx = [i for i, c in enumerate(h) if c.pred == pred and _same_args(pc, c.args, args)]
    if len(idx) < 2:
        return h
    const, coeffs = Fraction(0), {}
    for i in idx:
        k, cs = linear(h.chunks[i].coeff)
        const += k
        for a, c in cs.items():
            coeffs[a] = coeffs.get(a, 0) + c
    total = from_linear(const, {a: c for a, c in coeffs.items() if c != 0})
    value = numeric_value(total)
    if (value is not None and value > 1) or (value is None and prove(pc, Lt(ONE, total))):
        raise FractionOverflow(f"{pred}({', '.join(map(str, args))}) totals {total} > 1")
    first = h.chunks[idx[0]]
    kept = [c for i, c in enumerate(h) if i not in idx[1:]]
    kept[idx[0]] = Chunk(pred, first.args, total)
    return Heap(kept)
