from fractions import Fraction

import pytest
from conftest import CORPUS
from hypothesis import given
from hypothesis import strategies as st

from mirsl import ParseError, SourceFile, parse_assertion, parse_program, print_program
from mirsl import assertions as A
from mirsl.frontend import tokenize

CORPUS_FILES = sorted(p.relative_to(CORPUS).as_posix() for p in CORPUS.rglob("*.mmir"))


def test_deque_file_parses(deque):
    assert [s.name for s in deque.structs] == ["Node"]
    assert "create_deque" in deque.function_map


def test_empty_file_has_no_items():
    p = parse_program("")
    assert (p.structs, p.predicates, p.functions) == ((), (), ())


def test_comments_only():
    p = parse_program("// nothing here\n//   still nothing\n")
    assert p.functions == ()


def test_syntax_error_is_located_on_line_one():
    with pytest.raises(ParseError) as e:
        parse_program("fn f( {")
    (d,) = e.value.diagnostics
    assert d.code == "SyntaxError" and d.line == 1 and d.column >= 1


def test_error_line_is_reported_past_the_first_line():
    src = "struct S {\n    x: int;\n}\nfn g() requires true; ensures true; { bb0: { return } }\n"
    with pytest.raises(ParseError) as e:
        parse_program(src)
    assert e.value.diagnostics[0].line == 4


def test_invalid_utf8_is_a_diagnostic():
    with pytest.raises(ParseError) as e:
        parse_program(b"fn \xff")
    assert e.value.diagnostics[0].code == "EncodingError"


def test_parse_true():
    assert parse_assertion("true") == A.TrueA()


def test_parse_pure_and_chunk():
    a = parse_assertion("result != 0 &*& malloc_block_Node(result)")
    assert a == A.Sep(A.Pure("!=", A.Name("result"), A.IntArg(0)), A.ChunkPat("malloc_block_Node", (A.Name("result"),)))


def test_parse_fraction_pattern_and_token():
    a = parse_assertion("[?q]lft(a) &*& na_token(?t)")
    assert a == A.Sep(
        A.ChunkPat("lft", (A.Name("a"),), A.FracBinder("q")),
        A.ChunkPat("na_token", (A.Binder("t"),)),
    )
    assert A.binders_of(a) == ["q", "t"]


def test_sep_is_right_associative():
    a = parse_assertion("P(x) &*& Q(x) &*& R(x)")
    assert isinstance(a.right, A.Sep) and isinstance(a.left, A.ChunkPat)


def test_literal_fractions():
    assert parse_assertion("[1/2]lft(a)").frac == A.FracLit(Fraction(1, 2))
    assert parse_assertion("[2/4]lft(a)").frac == A.FracLit(Fraction(1, 2))
    with pytest.raises(ParseError):
        parse_assertion("[3/2]lft(a)")
    with pytest.raises(ParseError):
        parse_assertion("[0]lft(a)")


def test_trailing_garbage_is_rejected():
    with pytest.raises(ParseError):
        parse_assertion("true true")


def test_ghost_marker_is_transparent():
    assert [t.kind for t in tokenize("//@ open P(x);")] == [t.kind for t in tokenize("open P(x);")]


def test_plain_comments_are_dropped():
    assert [t.text for t in tokenize("a // b c\nd")][:2] == ["a", "d"]


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_corpus_round_trip(name):
    p = parse_program(SourceFile.read(CORPUS / name))
    text = print_program(p)
    q = parse_program(text)
    assert q == p
    assert print_program(q) == text


def test_parsing_has_no_side_effects():
    src = (CORPUS / "deque.mmir").read_text()
    assert parse_program(src) == parse_program(src)


# -- randomized assertions ----------------------------------------------------

idents = st.sampled_from(["a", "b", "l", "self", "result", "x1"])
binder_names = idents.filter(lambda s: s != "result")
preds = st.sampled_from(["P", "Node_prev", "lft", "na_token", "Cell_content"])

atoms = st.one_of(
    idents.map(A.Name),
    st.integers(0, 99).map(A.IntArg),
    st.just(A.PoisonArg()),
    st.just(A.UnitArg()),
)
arg_pats = st.one_of(atoms, binder_names.map(A.Binder), st.just(A.Binder("_")))
fracs = st.one_of(
    st.none(),
    st.fractions(min_value=Fraction(1, 12), max_value=1, max_denominator=12).map(A.FracLit),
    binder_names.map(A.FracName),
    binder_names.map(A.FracBinder),
)
chunks = st.builds(A.ChunkPat, preds, st.lists(arg_pats, min_size=0, max_size=3).map(tuple), fracs)
pures = st.builds(A.Pure, st.sampled_from(A.PURE_OPS), atoms, atoms)
units = st.one_of(chunks, pures, st.just(A.TrueA()), st.just(A.EmpA()))
assertions = st.lists(units, min_size=1, max_size=6).map(lambda xs: A.sep(*xs))


@given(assertions)
def test_assertion_round_trip(a):
    text = A.print_assertion(a)
    b = parse_assertion(text)
    assert b == a
    assert A.print_assertion(b) == text


@given(st.binary(max_size=200))
def test_parse_is_total_on_bytes(data):
    try:
        parse_program(data)
    except ParseError as e:
        assert all(d.line >= 1 and d.column >= 1 for d in e.diagnostics)


_tokens = st.sampled_from(
    ["fn", "f", "(", ")", "{", "}", "bb0", ":", ";", "requires", "ensures", "true", "return", "&*&",
     "store", "x", ".", "=", "alloc", "Node", "struct", "?", "[", "]", "1/2", "//@", "\n", "'a", "<", ">"]
)


@given(st.lists(_tokens, max_size=60).map(" ".join))
def test_parse_is_total_on_token_soup(text):
    try:
        parse_program(text)
    except ParseError:
        pass


def test_deep_nesting_is_a_diagnostic():
    with pytest.raises(ParseError):
        parse_assertion("P(" * 5000)
