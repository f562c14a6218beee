import pytest
from conftest import CORPUS

from mirsl import SourceFile, parse_program
from mirsl.ir import successors, validate_program

NODE = "struct Node { prev: *mut Node; value: int; next: *mut Node; }\n"


def codes(text: str) -> list[str]:
    return [d.code for d in validate_program(parse_program(text, validate=False))]


def fn(body: str, sig: str = "f()", contract: str = "requires true; ensures true;") -> str:
    return f"fn {sig} {contract} {{ {body} }}\n"


@pytest.mark.parametrize("name", ["deque.mmir", "deque_alt.mmir", "cell.mmir", "unsound.mmir"])
def test_corpus_is_well_formed(name):
    assert validate_program(parse_program(SourceFile.read(CORPUS / name), validate=False)) == []


def test_dangling_goto():
    assert codes(fn("bb0: { goto missing_label; }")) == ["UnresolvedLabel"]


def test_duplicate_struct():
    assert codes(NODE + NODE) == ["DuplicateName"]


def test_duplicate_field_and_block():
    assert codes("struct S { x: int; x: int; }") == ["DuplicateName"]
    assert codes(fn("bb0: { return; } bb0: { return; }")) == ["DuplicateName"]


def test_diagnostic_has_location():
    (d,) = validate_program(parse_program("\n\n" + fn("bb0: { goto nowhere; }"), validate=False))
    assert d.line == 3 and d.column > 1


def test_unknown_struct_and_field():
    assert codes(fn("bb0: { x = alloc(Missing); return; }")) == ["UnresolvedStruct"]
    assert codes(NODE + fn("bb0: { store p.nope = 1; return; }", "f(p: *mut Node)")) == ["UnresolvedField"]


def test_ambiguous_field_needs_qualification():
    two = NODE + "struct Cell { value: int; }\n"
    assert codes(two + fn("bb0: { store p.value = 1; return; }", "f(p: *mut Node)")) == ["AmbiguousField"]
    assert codes(two + fn("bb0: { store p.Cell::value = 1; return; }", "f(p: *mut Cell)")) == []


def test_call_arity_and_resolution():
    g = fn("bb0: { return; }", "g(x: int)")
    assert codes(g + fn("bb0: { call r = g(1, 2) -> bb1; } bb1: { return; }")) == ["ArityMismatch"]
    assert codes(fn("bb0: { call r = nope() -> bb1; } bb1: { return; }")) == ["UnresolvedFunction"]


def test_result_only_in_ensures():
    assert codes(fn("bb0: { return; }", contract="requires result == 0; ensures true;")) == ["ResultOutsideEnsures"]


def test_requires_binders_scope_over_ensures():
    assert codes(NODE + fn("bb0: { return; }", "f(p: *mut Node)", "requires Node_value(p, ?v); ensures Node_value(p, v);")) == []
    assert codes(NODE + fn("bb0: { return; }", "f(p: *mut Node)", "requires true; ensures Node_value(p, v);")) == ["UnboundName"]


def test_undefined_predicate_and_arity():
    assert codes(fn("bb0: { return; }", contract="requires Ghost(1); ensures true;")) == ["UndefinedPredicate"]
    assert codes(NODE + fn("bb0: { return; }", "f(p: *mut Node)", "requires Node_prev(p); ensures true;")) == ["ArityMismatch"]


def test_reserved_predicates_cannot_be_redefined():
    assert codes("predicate lft(k) = emp;") == ["ReservedName"]


def test_fractions_only_on_lifetime_tokens():
    assert codes(NODE + fn("bb0: { return; }", "f(p: *mut Node)", "requires [1/2]Node_prev(p, _); ensures true;")) == ["FractionalChunk"]


def test_unknown_lifetime():
    assert codes("struct C { v: int; }\n" + fn("bb0: { return; }", "f(c: &'b C)")) == ["UnresolvedLifetime"]


def test_back_edge_is_rejected():
    assert codes(fn("bb0: { goto bb1; } bb1: { goto bb0; }")) == ["UnsupportedLoop"]


def test_self_call_is_not_a_loop():
    assert codes(fn("bb0: { call r = f() -> bb1; } bb1: { return; }")) == []


def test_validation_is_deterministic():
    text = NODE + NODE + fn("bb0: { goto a; } bb1: { goto b; }", contract="requires X(result); ensures true;")
    p = parse_program(text, validate=False)
    first = validate_program(p)
    assert len(first) >= 4
    assert validate_program(p) == first
    assert validate_program(parse_program(text, validate=False)) == first


def test_parse_program_raises_on_invalid_input():
    from mirsl import ParseError

    with pytest.raises(ParseError) as e:
        parse_program(fn("bb0: { goto nowhere; }"))
    assert e.value.diagnostics[0].code == "UnresolvedLabel"


def test_successors(deque):
    f = deque.function_map["create_deque"]
    assert successors(f.block("bb0").terminator) == ["bb1", "bb2"]
    assert successors(f.block("bb1").terminator) == []
