"""Parser and printer for the textual mini-MIR (``.mmir``) format.

``//`` starts a comment, except ``//@`` which is dropped so that annotations
written in comment style are parsed like any other tokens. Struct fields may
be written qualified (``s.Node::prev``) and must be when a field name is
shared by several structs.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import assertions as A
from . import ir
from .ir import Diagnostic

# -- lexing --------------------------------------------------------------------

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*(?:::[A-Za-z_][A-Za-z0-9_]*)*"
_TOKEN = re.compile(
    rf"(?P<ws>[ \t\r\n]+)"
    rf"|(?P<ghost>//@)"
    rf"|(?P<comment>//[^\n]*)"
    rf"|(?P<lifetime>'[A-Za-z_][A-Za-z0-9_]*)"
    rf"|(?P<ident>{_IDENT})"
    rf"|(?P<int>[0-9]+)"
    rf"|(?P<punct>&\*&|->|==|!=|<=|[{{}}()\[\];:,.=<>+\-?/*&])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | lifetime | int | punct | eof
    text: str
    line: int
    column: int

    @property
    def loc(self) -> A.Loc:
        return A.Loc(self.line, self.column)


@dataclass(frozen=True)
class SourceFile:
    path: str
    text: str

    @classmethod
    def read(cls, path: str | Path) -> SourceFile:
        data = Path(path).read_bytes()
        return cls(str(path), data.decode("utf-8"))


class ParseError(Exception):
    """Raised with the diagnostics of a file that does not parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


class _Fail(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


def _syntax(msg: str, tok: Token) -> _Fail:
    return _Fail(Diagnostic("SyntaxError", msg, tok.line, tok.column))


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise _Fail(Diagnostic("SyntaxError", f"unexpected character {text[pos]!r}", line, col))
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("ws", "ghost", "comment"):
            out.append(Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


KEYWORDS = frozenset(
    ["struct", "predicate", "fn", "requires", "ensures", "store", "alloc", "load", "return", "goto", "branch", "call", "unwind", "abort", "open", "close", "lemma", "apply", "leak", "true", "false", "emp", "result", "poison"]
)
TERMINATORS = frozenset({"return", "goto", "branch", "call", "abort"})
GHOSTS = frozenset({"open", "close", "lemma", "apply", "leak"})

# -- parsing -------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("punct", "ident")

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise _syntax(f"expected '{text}', found {self.describe(self.tok)}", self.tok)
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    @staticmethod
    def describe(t: Token) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def ident(self, what: str = "identifier", allow_keyword: bool = False) -> Token:
        t = self.tok
        if t.kind != "ident" or (t.text in KEYWORDS and not allow_keyword):
            raise _syntax(f"expected {what}, found {self.describe(t)}", t)
        return self.advance()

    def lifetime(self) -> Token:
        t = self.tok
        if t.kind != "lifetime":
            raise _syntax(f"expected lifetime, found {self.describe(t)}", t)
        return self.advance()

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            raise _syntax(f"expected integer, found {self.describe(t)}", t)
        self.advance()
        return -int(t.text) if neg else int(t.text)

    # program -------------------------------------------------------------

    def program(self) -> ir.Program:
        structs, preds, fns = [], [], []
        while self.tok.kind != "eof":
            if self.at("struct"):
                structs.append(self.struct_def())
            elif self.at("predicate"):
                preds.append(self.predicate_def())
            elif self.at("fn"):
                fns.append(self.fn_def())
            else:
                raise _syntax(f"expected 'struct', 'predicate' or 'fn', found {self.describe(self.tok)}", self.tok)
        return ir.Program(tuple(structs), tuple(preds), tuple(fns))

    def struct_def(self) -> ir.StructDef:
        start = self.expect("struct")
        name = self.ident("struct name").text
        self.expect("{")
        fields = []
        while not self.at("}"):
            fname = self.ident("field name").text
            self.expect(":")
            fields.append((fname, self.type_expr()))
            self.expect(";")
        self.expect("}")
        return ir.StructDef(name, tuple(fields), start.loc)

    def type_expr(self) -> ir.TypeExpr:
        t = self.tok
        if self.accept("("):
            self.expect(")")
            return ir.UnitType()
        if self.accept("*"):
            if self.accept("mut"):
                return ir.RawAddr(self.type_expr(), True)
            if self.accept("const"):
                return ir.RawAddr(self.type_expr(), False)
            raise _syntax("expected 'mut' or 'const'", self.tok)
        if self.accept("&"):
            lt = self.lifetime().text
            return ir.SharedRef(lt, self.type_expr())
        name = self.ident("type").text
        if name == "int":
            return ir.IntType()
        if name == "bool":
            return ir.BoolType()
        del t
        return ir.StructRef(name)

    def predicate_def(self) -> ir.PredicateDef:
        start = self.expect("predicate")
        name = self.ident("predicate name").text
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                params.append(self.ident("parameter").text)
                if self.accept(":"):
                    self.type_expr()
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("=")
        body = self.assertion()
        self.expect(";")
        return ir.PredicateDef(name, tuple(params), body, start.loc)

    def lifetime_list(self) -> tuple[str, ...]:
        out = []
        if self.accept("<"):
            while True:
                out.append(self.lifetime().text)
                if not self.accept(","):
                    break
            self.expect(">")
        return tuple(out)

    def fn_def(self) -> ir.FunctionDef:
        start = self.expect("fn")
        name = self.ident("function name").text
        lifetimes = self.lifetime_list()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pname = self.ident("parameter").text
                self.expect(":")
                params.append(ir.Param(pname, self.type_expr()))
                if not self.accept(","):
                    break
        self.expect(")")
        ret: ir.TypeExpr = ir.UnitType()
        if self.accept("->"):
            ret = self.type_expr()
        self.expect("requires")
        req = self.assertion()
        self.expect(";")
        self.expect("ensures")
        ens = self.assertion()
        self.expect(";")
        self.expect("{")
        blocks = [self.block()]
        while not self.at("}"):
            blocks.append(self.block())
        self.expect("}")
        return ir.FunctionDef(name, lifetimes, tuple(params), ret, ir.Contract(req, ens), tuple(blocks), start.loc)

    # blocks ---------------------------------------------------------------

    def block(self) -> ir.BasicBlock:
        label = self.ident("block label")
        self.expect(":")
        self.expect("{")
        stmts = []
        while not (self.tok.kind == "ident" and self.tok.text in TERMINATORS):
            if self.tok.kind == "eof" or self.at("}"):
                raise _syntax(f"block '{label.text}' has no terminator", self.tok)
            stmts.append(self.statement())
        term = self.terminator()
        self.expect(";")
        self.expect("}")
        return ir.BasicBlock(label.text, tuple(stmts), term, label.loc)

    def field_ref(self) -> tuple[str, str | None, str]:
        base = self.ident("local").text
        self.expect(".")
        qualified = self.ident("field", allow_keyword=True).text
        struct, _, fld = qualified.rpartition("::")
        return base, (struct or None), fld

    def statement(self) -> ir.Statement:
        t = self.tok
        if self.at("store"):
            self.advance()
            base, struct, fld = self.field_ref()
            self.expect("=")
            op = self.operand()
            self.expect(";")
            return ir.StoreField(base, struct, fld, op, t.loc)
        if t.kind == "ident" and t.text in GHOSTS:
            cmd = self.ghost()
            self.expect(";")
            return ir.Ghost(cmd, t.loc)
        local = self.ident("statement").text
        self.expect("=")
        rv = self.rvalue()
        self.expect(";")
        return ir.Assign(local, rv, t.loc)

    def rvalue(self) -> ir.Rvalue:
        if self.accept("alloc"):
            self.expect("(")
            name = self.ident("struct name").text
            self.expect(")")
            return ir.Alloc(name)
        if self.accept("load"):
            base, struct, fld = self.field_ref()
            return ir.LoadField(base, struct, fld)
        left = self.operand()
        if self.tok.kind == "punct" and self.tok.text in ir.BINOPS:
            op = self.advance().text
            return ir.BinOp(op, left, self.operand())
        return ir.Use(left)

    def operand(self) -> ir.Operand:
        t = self.tok
        if t.kind == "int" or self.at("-"):
            return ir.IntConst(self.integer())
        if self.accept("true"):
            return ir.BoolConst(True)
        if self.accept("false"):
            return ir.BoolConst(False)
        if self.accept("("):
            self.expect(")")
            return ir.UnitConst()
        return ir.Local(self.ident("operand").text)

    def terminator(self) -> ir.Terminator:
        t = self.advance()
        kw = t.text
        if kw == "return":
            if self.at(";"):
                return ir.Return(None, t.loc)
            return ir.Return(self.operand(), t.loc)
        if kw == "goto":
            return ir.Goto(self.ident("label").text, t.loc)
        if kw == "branch":
            cond = self.operand()
            self.expect("?")
            then = self.ident("label").text
            self.expect(":")
            return ir.Branch(cond, then, self.ident("label").text, t.loc)
        if kw == "call":
            dest = self.ident("destination local").text
            self.expect("=")
            func = self.ident("function name").text
            lts = self.lifetime_list()
            self.expect("(")
            args = []
            if not self.at(")"):
                while True:
                    args.append(self.operand())
                    if not self.accept(","):
                        break
            self.expect(")")
            self.expect("->")
            ret = self.ident("label").text
            unwind = None
            if self.accept("unwind"):
                unwind = self.ident("label").text
            return ir.Call(dest, func, lts, tuple(args), ret, unwind, t.loc)
        return ir.Abort(t.loc)

    def ghost(self) -> ir.GhostCommand:
        kw = self.advance().text
        if kw == "open":
            return ir.Open(self.chunk())
        if kw == "close":
            return ir.Close(self.chunk())
        if kw == "leak":
            return ir.Leak(self.chunk())
        if kw == "apply":
            t = self.tok
            if t.kind == "lifetime":
                return ir.Apply(A.Name(self.advance().text))
            return ir.Apply(A.Name(self.ident("update token").text))
        name = self.ident("lemma name").text
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self.lemma_arg())
                if not self.accept(","):
                    break
        self.expect(")")
        return ir.Lemma(name, tuple(args))

    def lemma_arg(self):
        if self.tok.kind == "int" and self.peek().text == "/":
            return A.FracLit(self.fraction())
        return self.arg_pat()

    # assertions -----------------------------------------------------------

    def assertion(self) -> A.Assertion:
        start = self.tok
        left = self.conjunct()
        if self.accept("&*&"):
            return A.Sep(left, self.assertion(), start.loc)
        return left

    def conjunct(self) -> A.Assertion:
        t = self.tok
        if self.accept("true"):
            return A.TrueA(t.loc)
        if self.accept("emp"):
            return A.EmpA(t.loc)
        if self.at("[") or (t.kind == "ident" and t.text not in KEYWORDS and self.peek().text == "("):
            return self.chunk()
        left = self.term_atom()
        op = self.tok
        if op.kind != "punct" or op.text not in A.PURE_OPS:
            raise _syntax(f"expected a comparison or a chunk, found {self.describe(op)}", op)
        self.advance()
        return A.Pure(op.text, left, self.term_atom(), t.loc)

    def fraction(self) -> Fraction:
        t = self.tok
        n = self.integer()
        d = 1
        if self.accept("/"):
            d = self.integer()
        if d <= 0 or n <= 0 or n > d:
            raise _syntax("a fraction must lie in (0, 1]", t)
        return Fraction(n, d)

    def frac_pat(self) -> A.FracPat:
        if self.accept("?"):
            return A.FracBinder(self.ident("binder").text)
        if self.tok.kind == "int":
            return A.FracLit(self.fraction())
        return A.FracName(self.ident("fraction").text)

    def chunk(self) -> A.ChunkPat:
        t = self.tok
        frac = None
        if self.accept("["):
            frac = self.frac_pat()
            self.expect("]")
        pred = self.ident("predicate name").text
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self.arg_pat())
                if not self.accept(","):
                    break
        self.expect(")")
        return A.ChunkPat(pred, tuple(args), frac, t.loc)

    def arg_pat(self) -> A.ArgPat:
        t = self.tok
        if self.accept("?"):
            return A.Binder(self.ident("binder").text)
        if t.kind == "ident" and t.text == "_":
            self.advance()
            return A.Binder("_")
        if t.kind == "ident" and t.text not in KEYWORDS and self.peek().text == "(":
            name = self.advance().text
            self.expect("(")
            args = []
            if not self.at(")"):
                while True:
                    args.append(self.arg_pat())
                    if not self.accept(","):
                        break
            self.expect(")")
            return A.PredArg(name, tuple(args))
        return self.term_atom()

    def term_atom(self) -> A.ArgPat:
        t = self.tok
        if t.kind == "int" or self.at("-"):
            return A.IntArg(self.integer())
        if t.kind == "lifetime":
            return A.Name(self.advance().text)
        if self.accept("poison"):
            return A.PoisonArg()
        if self.accept("result"):
            return A.Name("result")
        if self.accept("("):
            self.expect(")")
            return A.UnitArg()
        return A.Name(self.ident("term").text)


def _resolve_fields(p: ir.Program) -> ir.Program:
    """Fill in the owning struct of unqualified field accesses when it is unique."""

    def fix(node):
        if isinstance(node, (ir.LoadField, ir.StoreField)) and node.struct is None:
            owners = p.resolve_field(None, node.field)
            if len(owners) == 1:
                return dataclasses.replace(node, struct=owners[0])
        return node

    fns = []
    for f in p.functions:
        blocks = []
        for b in f.blocks:
            stmts = []
            for st in b.statements:
                st = fix(st)
                if isinstance(st, ir.Assign):
                    st = dataclasses.replace(st, rvalue=fix(st.rvalue))
                stmts.append(st)
            blocks.append(dataclasses.replace(b, statements=tuple(stmts)))
        fns.append(dataclasses.replace(f, blocks=tuple(blocks)))
    return dataclasses.replace(p, functions=tuple(fns))


def _run(fn, text: str):
    try:
        return fn(_Parser(tokenize(text)))
    except _Fail as e:
        raise ParseError([e.diag]) from None
    except RecursionError:
        raise ParseError([Diagnostic("SyntaxError", "input nested too deeply")]) from None


def parse_program(src: SourceFile | str | bytes, validate: bool = True) -> ir.Program:
    """Parse (and by default validate) a ``.mmir`` source; raises :class:`ParseError`."""
    if isinstance(src, SourceFile):
        text = src.text
    elif isinstance(src, bytes):
        try:
            text = src.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError([Diagnostic("EncodingError", f"invalid UTF-8 at byte {e.start}")]) from None
    else:
        text = src

    program = _resolve_fields(_run(_Parser.program, text))
    if validate:
        diags = ir.validate_program(program)
        if diags:
            raise ParseError(diags)
    return program


def parse_assertion(text: str) -> A.Assertion:
    def whole(p: _Parser) -> A.Assertion:
        a = p.assertion()
        if p.tok.kind != "eof":
            raise _syntax(f"unexpected {p.describe(p.tok)} after assertion", p.tok)
        return a

    return _run(whole, text)


# -- printing ------------------------------------------------------------------


def print_type(t: ir.TypeExpr) -> str:
    return str(t)


def print_operand(op: ir.Operand) -> str:
    if isinstance(op, ir.Local):
        return op.name
    if isinstance(op, ir.IntConst):
        return str(op.value)
    if isinstance(op, ir.BoolConst):
        return "true" if op.value else "false"
    return "()"


def _field(struct: str | None, fld: str) -> str:
    return f"{struct}::{fld}" if struct else fld


def print_statement(st: ir.Statement) -> str:
    if isinstance(st, ir.StoreField):
        return f"store {st.base}.{_field(st.struct, st.field)} = {print_operand(st.operand)};"
    if isinstance(st, ir.Ghost):
        return f"//@ {print_ghost(st.command)};"
    rv = st.rvalue
    if isinstance(rv, ir.Alloc):
        text = f"alloc({rv.struct})"
    elif isinstance(rv, ir.LoadField):
        text = f"load {rv.base}.{_field(rv.struct, rv.field)}"
    elif isinstance(rv, ir.BinOp):
        text = f"{print_operand(rv.left)} {rv.op} {print_operand(rv.right)}"
    else:
        text = print_operand(rv.operand)
    return f"{st.local} = {text};"


def print_ghost(cmd: ir.GhostCommand) -> str:
    if isinstance(cmd, ir.Open):
        return f"open {A.print_chunk(cmd.inst)}"
    if isinstance(cmd, ir.Close):
        return f"close {A.print_chunk(cmd.inst)}"
    if isinstance(cmd, ir.Leak):
        return f"leak {A.print_chunk(cmd.chunk)}"
    if isinstance(cmd, ir.Apply):
        return f"apply {cmd.token.ident}"
    args = ", ".join(A.print_frac(a) if isinstance(a, A.FracLit) else A.print_arg(a) for a in cmd.args)
    return f"lemma {cmd.name}({args})"


def print_terminator(t: ir.Terminator) -> str:
    if isinstance(t, ir.Return):
        return "return" if t.operand is None else f"return {print_operand(t.operand)}"
    if isinstance(t, ir.Goto):
        return f"goto {t.target}"
    if isinstance(t, ir.Branch):
        return f"branch {print_operand(t.cond)} ? {t.then_label} : {t.else_label}"
    if isinstance(t, ir.Call):
        lts = f"<{', '.join(t.lifetime_args)}>" if t.lifetime_args else ""
        args = ", ".join(print_operand(a) for a in t.args)
        unwind = f" unwind {t.unwind_label}" if t.unwind_label else ""
        return f"call {t.dest} = {t.func}{lts}({args}) -> {t.return_label}{unwind}"
    return "abort"


def print_program(p: ir.Program) -> str:
    out: list[str] = []
    for s in p.structs:
        fields = " ".join(f"{n}: {print_type(t)};" for n, t in s.fields)
        out.append(f"struct {s.name} {{ {fields} }}")
    for q in p.predicates:
        out.append(f"predicate {q.name}({', '.join(q.params)}) = {A.print_assertion(q.body)};")
    for f in p.functions:
        lts = f"<{', '.join(f.lifetime_params)}>" if f.lifetime_params else ""
        params = ", ".join(f"{x.name}: {print_type(x.type)}" for x in f.params)
        ret = "" if isinstance(f.return_type, ir.UnitType) else f" -> {print_type(f.return_type)}"
        out.append(f"fn {f.name}{lts}({params}){ret}")
        out.append(f"//@ requires {A.print_assertion(f.contract.requires)};")
        out.append(f"//@ ensures {A.print_assertion(f.contract.ensures)};")
        out.append("{")
        for b in f.blocks:
            out.append(f"  {b.label}: {{")
            for st in b.statements:
                out.append(f"    {print_statement(st)}")
            out.append(f"    {print_terminator(b.terminator)};")
            out.append("  }")
        out.append("}")
    return "\n".join(out) + ("\n" if out else "")
