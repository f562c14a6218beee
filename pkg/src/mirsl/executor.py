"""Modular symbolic execution of mini-MIR functions.

A function is verified from the state its ``requires`` clause describes; each
``Return`` must then satisfy ``ensures`` and hand back the thread and
lifetime tokens. Calls are replaced by the callee's contract. Exploration is
depth-first and records a tree of :class:`PathNode` steps.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

from . import assertions as A
from . import ir
from .errors import (
    MissingChunk,
    PathLimitExceeded,
    PoisonRead,
    UnboundName,
    UnknownUpdate,
    VerificationError,
)
from .frontend import print_statement, print_terminator
from .heap import Chunk, SymbolicState, consume, consume_matches, instantiate, produce
from .lifetime import (
    apply_lftl_na_acc,
    apply_update,
    check_return_obligations,
    close_predicate,
    init_function_resources,
    open_predicate,
    own_chunks_for_call,
)
from .symbolic import (
    POISON,
    UNIT,
    App,
    BoolLit,
    Eq,
    IntLit,
    Neq,
    SymbolSource,
    Term,
    cond_facts,
    contains_poison,
    eval_binop,
    eval_operand,
    num,
)

ONGOING, VERIFIED, PRUNED, FAILED, SKIPPED_UNWIND = "ongoing", "verified", "pruned", "failed", "skipped-unwind"
ENTRY_STEP = -1


@dataclass(eq=False)
class PathNode:
    """One execution step. ``state`` is the state *before* the step at ``step_index``.

    ``step_index`` is -1 for the entry state, ``i`` for statement ``i`` and
    ``len(statements)`` for the terminator.
    """

    block: str
    step_index: int
    state: SymbolicState
    children: list[PathNode] = field(default_factory=list)
    outcome: str = ONGOING
    error: VerificationError | None = None
    step: str = ""

    def leaves(self):
        stack = [self]
        while stack:
            n = stack.pop()
            if not n.children:
                yield n
            stack.extend(reversed(n.children))

    def path_to(self, leaf: PathNode) -> list[PathNode]:
        """Nodes from ``self`` down to ``leaf`` (inclusive)."""
        trail: list[PathNode] = []

        def walk(n: PathNode) -> bool:
            trail.append(n)
            if n is leaf or any(walk(c) for c in n.children):
                return True
            trail.pop()
            return False

        walk(self)
        return trail


@dataclass(frozen=True)
class Failure:
    function: str
    block: str
    step: int
    line: int
    column: int
    error: VerificationError = field(compare=False)

    @property
    def kind(self) -> str:
        return self.error.kind

    @property
    def detail(self) -> str:
        return self.error.detail

    def location(self) -> dict:
        return {"function": self.function, "block": self.block, "step": self.step, "line": self.line, "column": self.column}

    def __str__(self) -> str:
        return f"{self.function}:{self.block}[{self.step}] at {self.line}:{self.column}: {self.kind}: {self.detail}"

    def _key(self):
        return (self.function, self.block, self.step, self.line, self.column, self.kind, self.detail)

    def __eq__(self, other) -> bool:
        return isinstance(other, Failure) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())


@dataclass
class VerificationResult:
    function: str
    status: str
    paths_explored: int
    skipped_unwind: int = 0
    pruned: int = 0
    first_failure: Failure | None = None
    tree: PathNode | None = field(default=None, compare=False)

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


# -- statements ----------------------------------------------------------------


def _env(state: SymbolicState) -> dict:
    """Names visible to ghost commands: ghost bindings, shadowed by current locals."""
    return {**state.ghost, **state.store}


def _field_chunk(program: ir.Program, struct: str | None, fld: str) -> str:
    owners = program.resolve_field(struct, fld)
    if len(owners) != 1:
        raise MissingChunk(f"?_{fld}", detail=f"cannot resolve field '{fld}'")
    return program.field_chunk(owners[0], fld)


def _address(state: SymbolicState, base: str) -> Term:
    return eval_operand(state.store, ir.Local(base))


_ADDR, _VAL = "addr", "v"


def _cell_pattern(pred: str) -> A.ChunkPat:
    return A.ChunkPat(pred, (A.Name(_ADDR), A.Binder(_VAL)))


def alloc_states(program: ir.Program, state: SymbolicState, local: str, struct: str, src: SymbolSource):
    """The two outcomes of allocating ``struct``: failure (address 0) first, then success."""
    addr = src.fresh(local)
    failed = state.with_local(local, addr).assume(Eq(addr, IntLit(0)))
    ok = state.with_local(local, addr).assume(Neq(addr, IntLit(0)))
    fields = program.struct_map[struct].field_names
    ok = ok.replace(
        heap=ok.heap.add(
            Chunk(f"malloc_block_{struct}", (addr,)),
            *(Chunk(program.field_chunk(struct, f), (addr, POISON)) for f in fields),
        )
    )
    return [failed, ok]


def exec_statement(program: ir.Program, state: SymbolicState, st: ir.Statement, src: SymbolSource) -> list[SymbolicState]:
    """Successor states of one statement (two for ``alloc``)."""
    if isinstance(st, ir.Ghost):
        return [exec_ghost(program, state, st.command, src)]
    if isinstance(st, ir.StoreField):
        addr = _address(state, st.base)
        value = eval_operand(state.store, st.operand)
        pred = _field_chunk(program, st.struct, st.field)
        state, _ = consume(state, _cell_pattern(pred), {_ADDR: addr})
        return [state.replace(heap=state.heap.add(Chunk(pred, (addr, value))))]
    rv = st.rvalue
    if isinstance(rv, ir.Alloc):
        return alloc_states(program, state, st.local, rv.struct, src)
    if isinstance(rv, ir.LoadField):
        addr = _address(state, rv.base)
        pred = _field_chunk(program, rv.struct, rv.field)
        # consuming and re-producing the chunk leaves the heap as it was
        _, bindings = consume(state, _cell_pattern(pred), {_ADDR: addr})
        value = bindings[_VAL]
        if contains_poison(value):
            raise PoisonRead(f"{pred}({addr}, {value}) holds an uninitialized value")
        return [state.with_local(st.local, value)]
    if isinstance(rv, ir.BinOp):
        left = eval_operand(state.store, rv.left)
        right = eval_operand(state.store, rv.right)
        return [state.with_local(st.local, eval_binop(rv.op, left, right))]
    return [state.with_local(st.local, eval_operand(state.store, rv.operand))]


def _new_bindings(bindings: Mapping[str, Term], pattern: A.Assertion) -> dict:
    return {b: bindings[b] for b in A.binders_of(pattern) if b in bindings}


def _lemma_fraction(arg, env: Mapping[str, Term]):
    """``(requested, binder)``: ``requested`` None means the whole held fraction."""
    if isinstance(arg, A.Binder):
        return None, (arg.ident if arg.ident != "_" else None)
    if isinstance(arg, A.FracLit):
        return num(arg.value), None
    if isinstance(arg, A.IntArg):
        return num(arg.value), None
    return instantiate(arg, env), None


def exec_ghost(program: ir.Program, state: SymbolicState, cmd: ir.GhostCommand, src: SymbolSource) -> SymbolicState:
    env = _env(state)
    if isinstance(cmd, ir.Open):
        state, bindings = open_predicate(state, cmd.inst, env, program, src)
        return state.with_ghost(_new_bindings(bindings, cmd.inst))
    if isinstance(cmd, ir.Close):
        return close_predicate(state, cmd.inst, env, program)
    if isinstance(cmd, ir.Leak):
        state, bindings, matched = consume_matches(state, cmd.chunk, env)
        state = state.replace(leaked=state.leaked + tuple(matched))
        return state.with_ghost(_new_bindings(bindings, cmd.chunk))
    if isinstance(cmd, ir.Apply):
        name = cmd.token.ident
        if name not in env:
            raise UnknownUpdate(f"no update named '{name}'")
        return apply_update(state, env[name], program)
    # lemma lftl_na_acc(lifetime, fraction, thread, Body(args) [, ?u])
    lifetime = instantiate(cmd.args[0], env)
    requested, frac_binder = _lemma_fraction(cmd.args[1], env)
    thread = instantiate(cmd.args[2], env)
    body = instantiate(cmd.args[3], env)
    if not isinstance(body, App):
        raise UnboundName("the borrowed resource must be a predicate instance")
    state, q, u = apply_lftl_na_acc(state, lifetime, requested, thread, body, src, program)
    bound = {}
    if frac_binder:
        bound[frac_binder] = q
    if len(cmd.args) > 4:
        tok = cmd.args[4]
        if isinstance(tok, (A.Binder, A.Name)) and tok.ident != "_":
            bound[tok.ident] = u
    return state.with_ghost(bound)


# -- terminators ---------------------------------------------------------------


def _free_contract(program: ir.Program, struct: str) -> A.Assertion:
    fields = program.struct_map[struct].field_names
    parts = [A.ChunkPat(f"malloc_block_{struct}", (A.Name("x"),))]
    parts += [A.ChunkPat(program.field_chunk(struct, f), (A.Name("x"), A.Binder("_"))) for f in fields]
    return A.sep(*parts)


def exec_call(program: ir.Program, state: SymbolicState, call: ir.Call, src: SymbolSource) -> SymbolicState:
    """Apply the callee's contract in place of its body."""
    args = [eval_operand(state.store, a) for a in call.args]
    if call.func.startswith("free_") and call.func not in program.function_map:
        struct = call.func[len("free_"):]
        state, _ = consume(state, _free_contract(program, struct), {"x": args[0]})
        return state.with_local(call.dest, UNIT)

    callee = program.function_map[call.func]
    env = _env(state)
    thread = state.frame.thread if state.frame is not None else env[ir.CURRENT_THREAD]
    lifetimes = {}
    for formal, actual in zip(callee.lifetime_params, call.lifetime_args):
        if actual not in env:
            raise UnboundName(actual)
        lifetimes[formal] = env[actual]

    state, _ = consume(state, A.ChunkPat("na_token", (A.Name("t"),)), {"t": thread})
    lent: list[Chunk] = []
    for k in dict.fromkeys(lifetimes.values()):
        state, _, matched = consume_matches(state, A.ChunkPat("lft", (A.Name("k"),), A.FracBinder("_")), {"k": k})
        lent.append(matched[0])
    own = own_chunks_for_call(program, callee, thread, args, lifetimes)
    for c in own:
        state, _ = consume(state, A.ChunkPat(c.pred, tuple(A.Name(f"a{i}") for i in range(len(c.args)))),
                           {f"a{i}": t for i, t in enumerate(c.args)})
    callee_env = {p.name: v for p, v in zip(callee.params, args)}
    callee_env.update(lifetimes)
    callee_env[ir.CURRENT_THREAD] = thread
    state, bindings = consume(state, callee.contract.requires, callee_env)

    result = src.fresh(call.dest)
    state = state.replace(heap=state.heap.add(*own, *lent, Chunk("na_token", (thread,))))
    state, _ = produce(state, callee.contract.ensures, {**bindings, "result": result}, src)
    return state.with_local(call.dest, result)


def exec_terminator(program: ir.Program, state: SymbolicState, term: ir.Terminator, src: SymbolSource):
    """``[(next_label, state)]`` for the non-final terminators (goto, branch, call).

    Infeasible successors are returned too; the caller drops states whose
    path condition is inconsistent.
    """
    if isinstance(term, ir.Goto):
        return [(term.target, state)]
    if isinstance(term, ir.Branch):
        cond = eval_operand(state.store, term.cond)
        facts = cond_facts(cond)
        if facts is None:
            assert isinstance(cond, BoolLit)
            return [(term.then_label if cond.value else term.else_label, state)]
        then_fact, else_fact = facts
        return [(term.then_label, state.assume(then_fact)), (term.else_label, state.assume(else_fact))]
    if isinstance(term, ir.Call):
        return [(term.return_label, exec_call(program, state, term, src))]
    raise TypeError(f"{type(term).__name__} ends a path")


def exec_return(state: SymbolicState, term: ir.Return, contract_env: Mapping[str, Term], f: ir.FunctionDef) -> SymbolicState:
    value = UNIT if term.operand is None else eval_operand(state.store, term.operand)
    state, _ = consume(state, f.contract.ensures, {**contract_env, "result": value})
    return check_return_obligations(state)


# -- driver --------------------------------------------------------------------


def _describe(block: ir.BasicBlock, i: int) -> str:
    if i == ENTRY_STEP:
        return "entry"
    if i < len(block.statements):
        return print_statement(block.statements[i])
    return print_terminator(block.terminator) + ";"


def _loc(block: ir.BasicBlock, i: int, f: ir.FunctionDef) -> A.Loc:
    if i == ENTRY_STEP:
        return f.loc
    if i < len(block.statements):
        return block.statements[i].loc
    return block.terminator.loc


def verify_function(
    program: ir.Program,
    f: ir.FunctionDef,
    trace: bool = False,
    max_paths: int = 10_000,
    src: SymbolSource | None = None,
) -> VerificationResult:
    """Verify ``f`` against its contract. Raises :class:`PathLimitExceeded` past ``max_paths`` leaves."""
    src = src if src is not None else SymbolSource()
    entry_block = f.block(f.entry)
    leaves = {VERIFIED: 0, FAILED: 0, PRUNED: 0, SKIPPED_UNWIND: 0}
    first: list[Failure] = []

    def finish(node: PathNode, outcome: str, error: VerificationError | None = None) -> None:
        node.outcome, node.error = outcome, error
        leaves[outcome] += 1
        if sum(leaves.values()) > max_paths:
            raise PathLimitExceeded(f"{f.name}: more than {max_paths} paths")
        if error is not None and not first:
            loc = _loc(f.block(node.block), node.step_index, f)
            first.append(Failure(f.name, node.block, node.step_index, loc.line, loc.column, error))

    try:
        state, env = init_function_resources(program, f, src)
        state, contract_env = produce(state, f.contract.requires, env, src)
        state = state.with_ghost(contract_env)
    except VerificationError as e:
        root = PathNode(f.entry, ENTRY_STEP, SymbolicState(), step="entry")
        finish(root, FAILED, e)
        return _result(f, leaves, first, root, trace)

    root = PathNode(f.entry, 0, state, step=_describe(entry_block, 0))
    if state.terminal:
        finish(root, PRUNED)
        return _result(f, leaves, first, root, trace)
    stack = [root]

    while stack:
        node = stack.pop()
        block = f.block(node.block)
        state, i = node.state, node.step_index
        try:
            if i < len(block.statements):
                succs = [(node.block, i + 1, s) for s in exec_statement(program, state, block.statements[i], src)]
            else:
                term = block.terminator
                if isinstance(term, ir.Return):
                    exec_return(state, term, contract_env, f)
                    finish(node, VERIFIED)
                    continue
                if isinstance(term, ir.Abort) or (isinstance(term, ir.Call) and term.func == "abort"):
                    finish(node, VERIFIED)
                    continue
                succs = [(label, 0, s) for label, s in exec_terminator(program, state, term, src)]
                if isinstance(term, ir.Call) and term.unwind_label:
                    succs.append((term.unwind_label, None, state))
        except VerificationError as e:
            finish(node, FAILED, e)
            continue

        forks = len(succs) > 1
        for label, j, s in succs:
            if j is None:
                child = PathNode(label, 0, s, step="unwind")
                node.children.append(child)
                finish(child, SKIPPED_UNWIND)
                continue
            if s.terminal and forks:
                continue  # infeasible edge
            child = PathNode(label, j, s, step=_describe(f.block(label), j))
            node.children.append(child)
            if s.terminal:
                finish(child, PRUNED)
        if not node.children:
            finish(node, PRUNED)
        stack.extend(c for c in reversed(node.children) if c.outcome == ONGOING)

    return _result(f, leaves, first, root, trace)


def _result(f, leaves, first, root, trace) -> VerificationResult:
    return VerificationResult(
        function=f.name,
        status=FAILED if leaves[FAILED] else VERIFIED,
        paths_explored=leaves[VERIFIED] + leaves[FAILED],
        skipped_unwind=leaves[SKIPPED_UNWIND],
        pruned=leaves[PRUNED],
        first_failure=first[0] if first else None,
        tree=root if trace else None,
    )


def verify_program(program: ir.Program, names=None, trace: bool = False, max_paths: int = 10_000):
    """Verify functions in name order with one shared symbol source."""
    src = SymbolSource()
    wanted = sorted(program.function_map if names is None else names)
    return [verify_function(program, program.function_map[n], trace, max_paths, src) for n in wanted]


# -- trace serialization -----------------------------------------------------


def state_to_json(state: SymbolicState) -> dict:
    return {
        "store": {k: str(v) for k, v in sorted(state.store.items())},
        "heap": state.heap.render(),
        "pc": [str(fact) for fact in state.pc.facts],
    }


def node_to_json(node: PathNode) -> dict:
    out = {
        "block": node.block,
        "step": node.step_index,
        "command": node.step,
        "outcome": node.outcome,
        "state": state_to_json(node.state),
        "children": [node_to_json(c) for c in node.children],
    }
    if node.error is not None:
        out["error"] = {"kind": node.error.kind, "detail": node.error.detail}
    return out
