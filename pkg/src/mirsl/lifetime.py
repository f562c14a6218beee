"""Lifetime tokens, thread tokens and non-atomic borrows.

Chunk families:

* ``[q]lft(k)``            -- fraction ``q`` of the token of lifetime ``k``
* ``na_token(t)``          -- the non-atomic token of thread ``t``
* ``na_bor(k, t, P)``      -- persistent borrow of payload ``P`` (a predicate instance)
* ``na_upd(u, k, q, t, P)``-- one-shot give-back: ``P`` in, ``[q]lft(k)`` and ``na_token(t)`` out
* ``unit_own(t, v)``       -- ownership of a unit value; its body is ``emp``

The later modality of the underlying logic is erased; ``na_upd`` is a plain
linear chunk.
"""

from __future__ import annotations

from collections.abc import Mapping

from . import assertions as A
from .errors import (
    InsufficientFraction,
    LeakedChunks,
    MissingChunk,
    MissingNaToken,
    MissingToken,
    UndefinedPredicate,
    UnknownUpdate,
    UnsupportedType,
)
from .heap import (
    Chunk,
    EntryFrame,
    Heap,
    SymbolicState,
    consume,
    consume_matches,
    instantiate,
    merge_tokens,
    produce,
    take_fraction,
)
from .ir import (
    CURRENT_THREAD,
    PERSISTENT_PREDICATES,
    BoolType,
    FunctionDef,
    IntType,
    Program,
    RawAddr,
    SharedRef,
    StructRef,
    UnitType,
)
from .symbolic import ONE, ZERO, App, Le, LftIncl, Lt, SymbolSource, Term, terms_equal

UNIT_OWN = "unit_own"


def shared_ref_own_predicate(pointee: str) -> str:
    return f"shr_ref_{pointee}_own"


def is_duplicable(pred: str) -> bool:
    """Chunks that may be dropped freely: borrows and shared-reference interpretations."""
    return pred in PERSISTENT_PREDICATES or (pred.startswith("shr_ref_") and pred.endswith("_own"))


def init_function_resources(program: Program, f: FunctionDef, src: SymbolSource):
    """Entry state of ``f`` and the name environment its contract is read in.

    Returns ``(state, env)``; ``env`` maps parameters, lifetime parameters and
    ``currentThread`` to their symbols.
    """
    store = {p.name: src.fresh(p.name) for p in f.params}
    thread = src.fresh_thread("t")
    fn_lft = src.fresh_lft("fn_lft")
    lifetimes = {lt: src.fresh_lft(lt) for lt in f.lifetime_params}
    fractions = {lt: src.fresh("q") for lt in f.lifetime_params}

    chunks = [Chunk("na_token", (thread,))]
    chunks += [Chunk("lft", (lifetimes[lt],), fractions[lt]) for lt in f.lifetime_params]
    for p in f.params:
        own = _own_chunk(program, p.type, thread, store[p.name], lifetimes)
        if own is not None:
            chunks.append(own)

    state = SymbolicState(store=store, heap=Heap(chunks))
    for lt in f.lifetime_params:
        state = state.assume(LftIncl(fn_lft, lifetimes[lt]))
    for lt in f.lifetime_params:
        q = fractions[lt]
        state = state.assume(Lt(ZERO, q)).assume(Le(q, ONE))
    env = {**store, **lifetimes, CURRENT_THREAD: thread}
    frame = EntryFrame(
        thread=thread,
        tokens=tuple((lt, lifetimes[lt], fractions[lt]) for lt in f.lifetime_params),
        fn_lft=fn_lft,
    )
    return state.replace(ghost=dict(env), frame=frame), env


def _own_chunk(program: Program, ty, thread: Term, value: Term, lifetimes: Mapping[str, Term]):
    if isinstance(ty, (IntType, BoolType, UnitType, RawAddr)):
        # raw addresses guarantee nothing about their pointee
        return None
    if isinstance(ty, SharedRef) and isinstance(ty.pointee, StructRef):
        pred = shared_ref_own_predicate(ty.pointee.name)
        if program.chunk_arities.get(pred) != 3:
            raise UnsupportedType(f"{ty} needs a 3-ary predicate '{pred}(k, t, l)'")
        return Chunk(pred, (lifetimes[ty.lifetime], thread, value))
    raise UnsupportedType(str(ty))


def own_chunks_for_call(program: Program, callee: FunctionDef, thread: Term, args, lifetimes) -> list[Chunk]:
    out = []
    for p, v in zip(callee.params, args):
        c = _own_chunk(program, p.type, thread, v, lifetimes)
        if c is not None:
            out.append(c)
    return out


# -- borrows and updates ---------------------------------------------------------


def _find(state: SymbolicState, pred: str, args) -> int | None:
    for i, c in enumerate(state.heap):
        if c.pred == pred and len(c.args) == len(args) and all(
            terms_equal(state.pc, x, y) for x, y in zip(c.args, args)
        ):
            return i
    return None


def _take_token(state: SymbolicState, pred: str, args, req: Term | None):
    """Remove ``req`` of a token chunk (all of it when None); returns ``(state, taken)``."""
    seen = False
    for i, c in enumerate(state.heap):
        if c.pred != pred or not all(terms_equal(state.pc, x, y) for x, y in zip(c.args, args)):
            continue
        seen = True
        taken = take_fraction(c, req, state.pc)
        if taken is None:
            continue
        rest, amount = taken
        heap = state.heap.replace_at(i, rest) if rest is not None else state.heap.remove_at(i)
        return state.replace(heap=heap), amount
    rendered = ", ".join(map(str, args))
    if seen:
        raise InsufficientFraction(pred, f"[{req}]{pred}({rendered})")
    raise MissingChunk(pred, rendered)


def _produce_payload(state, program: Program, payload: App, src: SymbolSource) -> SymbolicState:
    definition = program.predicate_map.get(payload.name)
    if definition is None:
        return state.replace(heap=state.heap.add(Chunk(payload.name, payload.args)))
    state, _ = produce(state, definition.body, dict(zip(definition.params, payload.args)), src)
    return state


def _consume_payload(state, program: Program, payload: App) -> SymbolicState:
    i = _find(state, payload.name, payload.args)
    if i is not None:
        return state.replace(heap=state.heap.remove_at(i))
    definition = program.predicate_map.get(payload.name)
    if definition is None:
        raise MissingChunk(payload.name, ", ".join(map(str, payload.args)))
    state, _ = consume(state, definition.body, dict(zip(definition.params, payload.args)))
    return state


def apply_lftl_na_acc(
    state: SymbolicState,
    lifetime: Term,
    frac: Term | None,
    thread: Term,
    body: App,
    src: SymbolSource,
    program: Program,
):
    """Open a non-atomic borrow: trade ``[frac]lft`` and the thread token for its payload.

    ``frac=None`` hands over the whole held fraction. Returns
    ``(state, taken_fraction, update_token)``.
    """
    if _find(state, "na_bor", (lifetime, thread, body)) is None:
        raise MissingChunk("na_bor", f"{lifetime}, {thread}, {body}")
    state, _ = _take_token(state, "na_token", (thread,), None)
    state, q = _take_token(state, "lft", (lifetime,), frac)
    state = _produce_payload(state, program, body, src)
    u = src.fresh("u")
    state = state.replace(heap=state.heap.add(Chunk("na_upd", (u, lifetime, q, thread, body))))
    return state, q, u


def apply_update(state: SymbolicState, token: Term, program: Program) -> SymbolicState:
    """Use update ``token``: give its payload back, get the tokens back."""
    if any(terms_equal(state.pc, token, u) for u in state.applied_updates):
        raise UnknownUpdate(f"update {token} was already applied")
    for i, c in enumerate(state.heap):
        if c.pred == "na_upd" and terms_equal(state.pc, c.args[0], token):
            break
    else:
        raise UnknownUpdate(str(token))
    u, lifetime, q, thread, payload = c.args
    state = state.replace(heap=state.heap.remove_at(i))
    state = _consume_payload(state, program, payload)
    heap = state.heap.add(Chunk("na_token", (thread,)), Chunk("lft", (lifetime,), q))
    return state.replace(heap=heap, applied_updates=state.applied_updates | {u})


# -- predicates ----------------------------------------------------------------


def open_predicate(state: SymbolicState, inst: A.ChunkPat, env: Mapping[str, Term], program: Program, src: SymbolSource):
    """Replace a user-predicate chunk by its definition; returns ``(state, bindings)``."""
    definition = program.predicate_map.get(inst.pred)
    if definition is None and inst.pred != UNIT_OWN:
        raise UndefinedPredicate(inst.pred)
    state, bindings, matched = consume_matches(state, inst, env)
    if definition is None:
        return state, bindings
    chunk = matched[0]
    state, _ = produce(state, definition.body, dict(zip(definition.params, chunk.args)), src)
    return state, bindings


def close_predicate(state: SymbolicState, inst: A.ChunkPat, env: Mapping[str, Term], program: Program):
    """Consume the definition of ``inst`` and add the folded chunk."""
    args = tuple(instantiate(p, env) for p in inst.args)
    if inst.pred == UNIT_OWN:
        body: A.Assertion = A.EmpA()
        formals: tuple[str, ...] = ("t", "v")
    else:
        definition = program.predicate_map.get(inst.pred)
        if definition is None:
            raise UndefinedPredicate(inst.pred)
        body, formals = definition.body, definition.params
    state, _ = consume(state, body, dict(zip(formals, args)))
    return state.replace(heap=state.heap.add(Chunk(inst.pred, args)))


# -- return point ---------------------------------------------------------------


def check_return_obligations(state: SymbolicState, frame: EntryFrame | None = None) -> SymbolicState:
    """Take back the thread token and the entry lifetime fractions, then check for leaks."""
    frame = frame or state.frame
    if frame is not None:
        try:
            state, _ = _take_token(state, "na_token", (frame.thread,), None)
        except MissingChunk:
            raise MissingNaToken(f"na_token({frame.thread}) was not given back") from None
        for name, lifetime, q in frame.tokens:
            state = state.replace(heap=merge_tokens(state.heap, "lft", (lifetime,), state.pc))
            try:
                state, _ = _take_token(state, "lft", (lifetime,), q)
            except (MissingChunk, InsufficientFraction):
                raise MissingToken(f"[{q}]lft({lifetime}) for {name} was not given back") from None
    leftovers = [c for c in state.heap if not is_duplicable(c.pred)]
    if leftovers:
        raise LeakedChunks(leftovers)
    return state
