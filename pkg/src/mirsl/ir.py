"""The mini-MIR program model and its well-formedness check.

Functions are control-flow graphs of basic blocks. Memory is accessed only
through per-field chunks ``Struct_field(addr, value)`` and each allocated
struct carries a ``malloc_block_Struct(addr)`` chunk.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Union

from .assertions import (
    NOLOC,
    Assertion,
    Binder,
    ChunkPat,
    FracBinder,
    FracLit,
    Loc,
    Name,
    PredArg,
    TrueA,
    binders_of,
    conjuncts,
    names_of,
)

# -- types ---------------------------------------------------------------------


@dataclass(frozen=True)
class IntType:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class UnitType:
    def __str__(self) -> str:
        return "()"


@dataclass(frozen=True)
class RawAddr:
    pointee: TypeExpr
    mutable: bool = True

    def __str__(self) -> str:
        return f"*{'mut' if self.mutable else 'const'} {self.pointee}"


@dataclass(frozen=True)
class StructRef:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class SharedRef:
    lifetime: str  # includes the leading apostrophe, e.g. "'a"
    pointee: TypeExpr

    def __str__(self) -> str:
        return f"&{self.lifetime} {self.pointee}"


TypeExpr = Union[IntType, BoolType, UnitType, RawAddr, StructRef, SharedRef]

# -- operands, rvalues, statements --------------------------------------------


@dataclass(frozen=True)
class Local:
    name: str


@dataclass(frozen=True)
class IntConst:
    value: int


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class UnitConst:
    pass


Operand = Union[Local, IntConst, BoolConst, UnitConst]

BINOPS = ("+", "-", "==", "!=", "<=", "<")


@dataclass(frozen=True)
class Alloc:
    struct: str


@dataclass(frozen=True)
class Use:
    operand: Operand


@dataclass(frozen=True)
class LoadField:
    base: str
    struct: str | None
    field: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Operand
    right: Operand


Rvalue = Union[Alloc, Use, LoadField, BinOp]


@dataclass(frozen=True)
class Open:
    inst: ChunkPat


@dataclass(frozen=True)
class Close:
    inst: ChunkPat


@dataclass(frozen=True)
class Lemma:
    name: str
    args: tuple  # tuple of ArgPat | FracPat


@dataclass(frozen=True)
class Apply:
    token: Name


@dataclass(frozen=True)
class Leak:
    chunk: ChunkPat


GhostCommand = Union[Open, Close, Lemma, Apply, Leak]


@dataclass(frozen=True)
class Assign:
    local: str
    rvalue: Rvalue
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class StoreField:
    base: str
    struct: str | None
    field: str
    operand: Operand
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Ghost:
    command: GhostCommand
    loc: Loc = field(default=NOLOC, compare=False)


Statement = Union[Assign, StoreField, Ghost]

# -- terminators ---------------------------------------------------------------


@dataclass(frozen=True)
class Return:
    operand: Operand | None = None
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Goto:
    target: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Branch:
    cond: Operand
    then_label: str
    else_label: str
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Call:
    dest: str
    func: str
    lifetime_args: tuple[str, ...]
    args: tuple[Operand, ...]
    return_label: str
    unwind_label: str | None = None
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Abort:
    loc: Loc = field(default=NOLOC, compare=False)


Terminator = Union[Return, Goto, Branch, Call, Abort]


def successors(t: Terminator) -> list[str]:
    if isinstance(t, Goto):
        return [t.target]
    if isinstance(t, Branch):
        return [t.then_label, t.else_label]
    if isinstance(t, Call):
        return [t.return_label] + ([t.unwind_label] if t.unwind_label else [])
    return []


# -- definitions ---------------------------------------------------------------


@dataclass(frozen=True)
class BasicBlock:
    label: str
    statements: tuple[Statement, ...]
    terminator: Terminator
    loc: Loc = field(default=NOLOC, compare=False)


@dataclass(frozen=True)
class Contract:
    requires: Assertion = TrueA()
    ensures: Assertion = TrueA()


@dataclass(frozen=True)
class Param:
    name: str
    type: TypeExpr


@dataclass(frozen=True)
class FunctionDef:
    name: str
    lifetime_params: tuple[str, ...]
    params: tuple[Param, ...]
    return_type: TypeExpr
    contract: Contract
    blocks: tuple[BasicBlock, ...]
    loc: Loc = field(default=NOLOC, compare=False)

    @property
    def entry(self) -> str:
        return self.blocks[0].label

    @cached_property
    def block_map(self) -> dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    def block(self, label: str) -> BasicBlock:
        return self.block_map[label]


@dataclass(frozen=True)
class StructDef:
    name: str
    fields: tuple[tuple[str, TypeExpr], ...]
    loc: Loc = field(default=NOLOC, compare=False)

    @property
    def field_names(self) -> list[str]:
        return [f for f, _ in self.fields]


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[str, ...]
    body: Assertion
    loc: Loc = field(default=NOLOC, compare=False)


# Built-in chunk families and their arities. ``malloc_block_S`` and ``S_f`` are
# generated per struct.
RESERVED_PREDICATES = {"lft": 1, "na_token": 1, "na_bor": 3, "na_upd": 5, "unit_own": 2}
FRACTIONAL_PREDICATES = frozenset({"lft"})
PERSISTENT_PREDICATES = frozenset({"na_bor"})
CURRENT_THREAD = "currentThread"


@dataclass(frozen=True)
class Program:
    structs: tuple[StructDef, ...] = ()
    predicates: tuple[PredicateDef, ...] = ()
    functions: tuple[FunctionDef, ...] = ()

    @cached_property
    def struct_map(self) -> dict[str, StructDef]:
        return {s.name: s for s in self.structs}

    @cached_property
    def predicate_map(self) -> dict[str, PredicateDef]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def function_map(self) -> dict[str, FunctionDef]:
        return {f.name: f for f in self.functions}

    @cached_property
    def chunk_arities(self) -> dict[str, int]:
        """Arity of every chunk family usable in assertions."""
        out = dict(RESERVED_PREDICATES)
        for s in self.structs:
            out[f"malloc_block_{s.name}"] = 1
            for f in s.field_names:
                out[f"{s.name}_{f}"] = 2
        for p in self.predicates:
            out.setdefault(p.name, len(p.params))
        return out

    def field_chunk(self, struct: str, fld: str) -> str:
        return f"{struct}_{fld}"

    def resolve_field(self, struct: str | None, fld: str) -> list[str]:
        """Structs that could own ``fld`` (one element when resolvable)."""
        if struct is not None:
            s = self.struct_map.get(struct)
            return [struct] if s is not None and fld in s.field_names else []
        return [s.name for s in self.structs if fld in s.field_names]

    def builtin_callee(self, name: str) -> bool:
        if name == "abort":
            return True
        return name.startswith("free_") and name[len("free_"):] in self.struct_map


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 1
    column: int = 1
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.code}: {self.message}"


class _Validator:
    def __init__(self, program: Program):
        self.p = program
        self.out: list[Diagnostic] = []

    def err(self, code: str, message: str, loc: Loc) -> None:
        self.out.append(Diagnostic(code, message, loc.line, loc.column))

    def run(self) -> list[Diagnostic]:
        p = self.p
        self.unique([(s.name, s.loc) for s in p.structs], "struct")
        generated = {f"malloc_block_{s.name}" for s in p.structs}
        generated |= {f"{s.name}_{f}" for s in p.structs for f in s.field_names}
        for pred in p.predicates:
            if pred.name in RESERVED_PREDICATES:
                self.err("ReservedName", f"predicate name '{pred.name}' is reserved", pred.loc)
            elif pred.name in generated:
                self.err("DuplicateName", f"predicate '{pred.name}' clashes with a struct chunk", pred.loc)
        self.unique([(q.name, q.loc) for q in p.predicates], "predicate")
        self.unique([(f.name, f.loc) for f in p.functions], "function")
        for s in p.structs:
            self.unique([(f, s.loc) for f in s.field_names], f"field of {s.name}")
            for _, ty in s.fields:
                self.check_type(ty, s.loc, None)
        for pred in p.predicates:
            self.unique([(x, pred.loc) for x in pred.params], f"parameter of {pred.name}")
            scope = set(pred.params)
            self.check_assertion(pred.body, scope, allow_result=False)
        for f in p.functions:
            self.check_function(f)
        return self.out

    def unique(self, items: list[tuple[str, Loc]], what: str) -> None:
        seen: set[str] = set()
        for name, loc in items:
            if name in seen:
                self.err("DuplicateName", f"duplicate {what} '{name}'", loc)
            seen.add(name)

    def check_type(self, ty: TypeExpr, loc: Loc, lifetimes: tuple[str, ...] | None) -> None:
        if isinstance(ty, StructRef) and ty.name not in self.p.struct_map:
            self.err("UnresolvedStruct", f"unknown struct '{ty.name}'", loc)
        elif isinstance(ty, RawAddr):
            self.check_type(ty.pointee, loc, lifetimes)
        elif isinstance(ty, SharedRef):
            if lifetimes is not None and ty.lifetime not in lifetimes:
                self.err("UnresolvedLifetime", f"unknown lifetime {ty.lifetime}", loc)
            self.check_type(ty.pointee, loc, lifetimes)

    # assertions -------------------------------------------------------------

    def check_assertion(self, a: Assertion, scope: set[str], allow_result: bool) -> None:
        bound = set(scope)
        for c in conjuncts(a):
            if isinstance(c, ChunkPat):
                self.check_chunk(c)
                for ident, loc in names_of(c):
                    self.check_name(ident, loc, bound, allow_result)
                bound.update(binders_of(c))
            else:
                for ident, loc in names_of(c):
                    self.check_name(ident, loc, bound, allow_result)

    def check_name(self, ident: str, loc: Loc, bound: set[str], allow_result: bool) -> None:
        if ident == "result":
            if not allow_result:
                self.err("ResultOutsideEnsures", "'result' may appear only in ensures", loc)
        elif ident not in bound:
            self.err("UnboundName", f"unbound name '{ident}'", loc)

    def check_chunk(self, c: ChunkPat) -> None:
        self.check_pred_use(c.pred, len(c.args), c.loc)
        if c.frac is not None and c.pred not in FRACTIONAL_PREDICATES and c.frac != FracLit(Fraction(1)):
            self.err("FractionalChunk", f"'{c.pred}' chunks are always whole; drop the fraction", c.loc)
        for a in c.args:
            self.check_pred_arg(a, c.loc)

    def check_pred_arg(self, a, loc: Loc) -> None:
        if isinstance(a, PredArg):
            self.check_pred_use(a.name, len(a.args), loc)
            for b in a.args:
                self.check_pred_arg(b, loc)

    def check_pred_use(self, name: str, arity: int, loc: Loc) -> None:
        expected = self.p.chunk_arities.get(name)
        if expected is None:
            self.err("UndefinedPredicate", f"unknown predicate '{name}'", loc)
        elif expected != arity:
            self.err("ArityMismatch", f"'{name}' expects {expected} arguments, got {arity}", loc)

    # functions ---------------------------------------------------------------

    def check_function(self, f: FunctionDef) -> None:
        if not f.blocks:
            self.err("EmptyBody", f"function '{f.name}' has no blocks", f.loc)
            return
        self.unique([(lt, f.loc) for lt in f.lifetime_params], f"lifetime of {f.name}")
        self.unique([(x.name, f.loc) for x in f.params], f"parameter of {f.name}")
        self.unique([(b.label, b.loc) for b in f.blocks], f"block label of {f.name}")
        for x in f.params:
            self.check_type(x.type, f.loc, f.lifetime_params)
        self.check_type(f.return_type, f.loc, f.lifetime_params)

        base = {x.name for x in f.params} | set(f.lifetime_params) | {CURRENT_THREAD}
        self.check_assertion(f.contract.requires, base, allow_result=False)
        after_req = base | set(binders_of(f.contract.requires))
        self.check_assertion(f.contract.ensures, after_req, allow_result=True)

        labels = {b.label for b in f.blocks}
        ghost_scope = after_req | set(self.assigned_locals(f)) | set(self.ghost_binders(f))
        for b in f.blocks:
            for st in b.statements:
                self.check_statement(st, ghost_scope)
            self.check_terminator(f, b.terminator, labels)
        self.check_acyclic(f)

    @staticmethod
    def assigned_locals(f: FunctionDef) -> Iterator[str]:
        for b in f.blocks:
            for st in b.statements:
                if isinstance(st, Assign):
                    yield st.local
            if isinstance(b.terminator, Call):
                yield b.terminator.dest

    @staticmethod
    def ghost_binders(f: FunctionDef) -> Iterator[str]:
        for b in f.blocks:
            for st in b.statements:
                if not isinstance(st, Ghost):
                    continue
                cmd = st.command
                if isinstance(cmd, (Open, Close, Leak)):
                    pat = cmd.inst if not isinstance(cmd, Leak) else cmd.chunk
                    yield from binders_of(pat)
                elif isinstance(cmd, Lemma):
                    for a in cmd.args:
                        if isinstance(a, (Binder, FracBinder)) and a.ident != "_":
                            yield a.ident

    def check_field(self, struct: str | None, fld: str, loc: Loc) -> None:
        owners = self.p.resolve_field(struct, fld)
        if struct is not None and struct not in self.p.struct_map:
            self.err("UnresolvedStruct", f"unknown struct '{struct}'", loc)
        elif not owners:
            self.err("UnresolvedField", f"unknown field '{fld}'", loc)
        elif len(owners) > 1:
            self.err("AmbiguousField", f"field '{fld}' belongs to {', '.join(owners)}; qualify it", loc)

    def check_statement(self, st: Statement, ghost_scope: set[str]) -> None:
        if isinstance(st, Assign):
            rv = st.rvalue
            if isinstance(rv, Alloc) and rv.struct not in self.p.struct_map:
                self.err("UnresolvedStruct", f"unknown struct '{rv.struct}'", st.loc)
            elif isinstance(rv, LoadField):
                self.check_field(rv.struct, rv.field, st.loc)
        elif isinstance(st, StoreField):
            self.check_field(st.struct, st.field, st.loc)
        elif isinstance(st, Ghost):
            cmd = st.command
            if isinstance(cmd, Lemma):
                if cmd.name != "lftl_na_acc":
                    self.err("UnknownLemma", f"unknown lemma '{cmd.name}'", st.loc)
                elif len(cmd.args) not in (4, 5):
                    self.err("ArityMismatch", "lftl_na_acc expects 4 or 5 arguments", st.loc)
                else:
                    body = cmd.args[3]
                    if not isinstance(body, PredArg):
                        self.err("SyntaxError", "lftl_na_acc body must be a predicate instance", st.loc)
                    else:
                        self.check_pred_arg(body, st.loc)
            elif isinstance(cmd, Apply):
                self.check_name(cmd.token.ident, st.loc, ghost_scope, False)
            else:
                pat = cmd.chunk if isinstance(cmd, Leak) else cmd.inst
                self.check_chunk(pat)
                if isinstance(cmd, (Open, Close)) and pat.pred not in self.p.predicate_map and pat.pred != "unit_own":
                    self.err("UndefinedPredicate", f"'{pat.pred}' has no definition to open or close", st.loc)
                for ident, loc in names_of(pat):
                    self.check_name(ident, st.loc, ghost_scope, False)

    def check_terminator(self, f: FunctionDef, t: Terminator, labels: set[str]) -> None:
        for target in successors(t):
            if target not in labels:
                self.err("UnresolvedLabel", f"unknown block label '{target}'", t.loc)
        if isinstance(t, Call):
            callee = self.p.function_map.get(t.func)
            if callee is None:
                if not self.p.builtin_callee(t.func):
                    self.err("UnresolvedFunction", f"unknown function '{t.func}'", t.loc)
                elif len(t.args) != (0 if t.func == "abort" else 1) or t.lifetime_args:
                    self.err("ArityMismatch", f"wrong arguments for built-in '{t.func}'", t.loc)
            else:
                if len(t.args) != len(callee.params):
                    self.err("ArityMismatch", f"'{t.func}' expects {len(callee.params)} arguments, got {len(t.args)}", t.loc)
                if len(t.lifetime_args) != len(callee.lifetime_params):
                    self.err(
                        "ArityMismatch",
                        f"'{t.func}' expects {len(callee.lifetime_params)} lifetime arguments, got {len(t.lifetime_args)}",
                        t.loc,
                    )
            for lt in t.lifetime_args:
                if lt not in f.lifetime_params:
                    self.err("UnresolvedLifetime", f"unknown lifetime {lt}", t.loc)

    def check_acyclic(self, f: FunctionDef) -> None:
        labels = {b.label for b in f.blocks}
        colour: dict[str, int] = {}

        def visit(label: str) -> None:
            colour[label] = 1
            b = f.block(label)
            for nxt in successors(b.terminator):
                if nxt not in labels:
                    continue
                if colour.get(nxt) == 1:
                    self.err("UnsupportedLoop", f"back-edge {label} -> {nxt} (loops need invariants)", b.terminator.loc)
                elif nxt not in colour:
                    visit(nxt)
            colour[label] = 2

        visit(f.entry)


def validate_program(p: Program) -> list[Diagnostic]:
    """All well-formedness violations of ``p``, in a deterministic order."""
    return _Validator(p).run()
