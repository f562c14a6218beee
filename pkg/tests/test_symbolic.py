import random

import pytest
from generators import rand_fact_set
from hypothesis import given
from hypothesis import strategies as st
from oracles import countermodel_exists, satisfiable

from mirsl import ir
from mirsl.errors import PoisonRead, UnboundLocal
from mirsl.symbolic import (
    POISON,
    UNIT,
    Add,
    BoolLit,
    Cmp,
    Eq,
    IntLit,
    Le,
    LftIncl,
    Lt,
    Neq,
    PathCondition,
    Sym,
    SymbolSource,
    assume,
    cond_facts,
    contains_poison,
    eval_binop,
    eval_operand,
    fresh,
    normalize,
    prove,
    sub,
)

x, y, z = Sym(0, "x"), Sym(1, "y"), Sym(2, "z")


def pc_of(*facts):
    pc = PathCondition()
    for f in facts:
        pc = assume(pc, f)
    return pc


def test_fresh_ids_increase():
    src = SymbolSource()
    assert fresh(src, "l") == Sym(0, "l")
    assert fresh(src, "l") == Sym(1, "l")
    assert src.fresh_lft().id == 2 and src.fresh_thread().id == 3


def test_hint_is_cosmetic():
    assert Sym(4, "a") == Sym(4, "b")
    assert str(Sym(4, "a")) == "a#4"


def test_assume_examples():
    assert pc_of(Eq(x, IntLit(0))).consistent
    assert not pc_of(Eq(x, IntLit(0)), Neq(x, IntLit(0))).consistent
    assert not pc_of(Eq(x, y), Eq(y, z), Neq(x, z)).consistent


def test_prove_examples():
    assert prove(pc_of(Neq(x, IntLit(0))), Neq(x, IntLit(0)))
    assert prove(PathCondition(), Eq(x, x))
    assert prove(pc_of(Le(x, IntLit(3)), Le(IntLit(3), x)), Eq(x, IntLit(3)))
    assert not prove(PathCondition(), Eq(x, y))
    assert not prove(pc_of(Le(x, IntLit(3))), Eq(x, IntLit(3)))


def test_difference_bounds_chain():
    pc = pc_of(Lt(x, y), Le(y, Add(z, IntLit(-2))))
    assert prove(pc, Lt(x, z))
    assert prove(pc, Lt(Add(x, IntLit(2)), z))
    # bounds are closed over the rationals (fraction symbols are not integers),
    # so the integer consequence x + 3 <= z is not derived
    assert not prove(pc, Le(Add(x, IntLit(3)), z))


def test_strictness_matters():
    assert not pc_of(Lt(x, y), Lt(y, x)).consistent
    assert pc_of(Le(x, y), Le(y, x)).consistent
    assert prove(pc_of(Le(x, y), Le(y, x)), Eq(x, y))


def test_fractions_are_rational():
    from fractions import Fraction

    from mirsl.symbolic import num

    q = Sym(9, "q")
    pc = pc_of(Lt(num(0), q), Le(q, num(1)))
    assert prove(pc, Lt(num(Fraction(-1, 2)), q))
    assert not prove(pc, Lt(num(Fraction(1, 2)), q))
    assert prove(pc_of(Lt(num(Fraction(1, 2)), q)), Lt(num(Fraction(1, 3)), q))


def test_poison_and_unit_are_distinct_from_numbers():
    assert prove(PathCondition(), Neq(POISON, IntLit(0)))
    assert prove(PathCondition(), Neq(POISON, UNIT))
    assert not pc_of(Eq(x, POISON), Eq(x, IntLit(3))).consistent
    assert prove(pc_of(Eq(x, IntLit(1))), Neq(x, POISON))


def test_facts_outside_the_fragment_are_ignored():
    pc = pc_of(Eq(Add(x, y), IntLit(4)))
    assert pc.consistent
    assert not prove(pc, Eq(x, IntLit(2)))
    assert prove(pc, Eq(Add(x, y), IntLit(4)))


def test_lifetime_inclusion_is_reflexive_transitive():
    from mirsl.symbolic import LftVar

    f, a, b = LftVar(0), LftVar(1), LftVar(2)
    pc = pc_of(LftIncl(f, a), LftIncl(a, b))
    assert prove(pc, LftIncl(f, b))
    assert prove(pc, LftIncl(b, b))
    assert not prove(pc, LftIncl(b, f))


def test_eval_operand():
    assert eval_operand({"s": x}, ir.Local("s")) == x
    assert eval_operand({}, ir.IntConst(42)) == IntLit(42)
    with pytest.raises(PoisonRead):
        eval_operand({"v": POISON}, ir.Local("v"))
    with pytest.raises(UnboundLocal):
        eval_operand({}, ir.Local("nope"))


def test_binops_fold_literals():
    assert eval_binop("+", IntLit(2), IntLit(3)) == IntLit(5)
    assert eval_binop("==", IntLit(2), IntLit(2)) == BoolLit(True)
    assert eval_binop("<", x, IntLit(0)) == Cmp("<", x, IntLit(0))
    assert eval_binop("==", POISON, IntLit(0)) == BoolLit(False)


def test_cond_facts():
    assert cond_facts(Cmp("==", x, IntLit(0))) == (Eq(x, IntLit(0)), Neq(x, IntLit(0)))
    assert cond_facts(Cmp("<", x, y)) == (Lt(x, y), Le(y, x))
    assert cond_facts(BoolLit(True)) is None
    assert cond_facts(x) == (Eq(x, BoolLit(True)), Eq(x, BoolLit(False)))


def test_normalize_is_canonical():
    assert normalize(sub(Add(x, IntLit(1)), IntLit(1))) == x
    assert normalize(Add(y, x)) == normalize(Add(x, y))


# -- properties ----------------------------------------------------------------


def _facts(draw_seed: int):
    return rand_fact_set(random.Random(draw_seed))


@given(st.integers(0, 2**32))
def test_prove_is_sound_against_bounded_models(seed):
    n, facts, goal = _facts(seed)
    pc = pc_of(*facts)
    if prove(pc, goal):
        assert not countermodel_exists(facts, goal, n)
    if not pc.consistent:
        assert not satisfiable(facts, n)


@given(st.integers(0, 2**32))
def test_assume_is_monotone_and_inconsistency_absorbs(seed):
    rng = random.Random(seed)
    n, facts, goal = rand_fact_set(rng)
    pc = pc_of(*facts)
    after = assume(pc, goal)
    assert set(pc.facts) <= set(after.facts)
    if not pc.consistent:
        assert not after.consistent


@given(st.integers(0, 2**32))
def test_status_tracks_contradiction(seed):
    n, facts, goal = _facts(seed)
    pc = pc_of(*facts)
    # a consistent set never proves a fact together with its negation
    if pc.consistent:
        from mirsl.symbolic import negate

        assert not (prove(pc, goal) and prove(pc, negate(goal)))


@given(st.recursive(
    st.sampled_from([POISON, UNIT, IntLit(1), x]),
    lambda inner: st.builds(Add, inner, inner),
    max_leaves=6,
))
def test_eval_operand_never_returns_buried_poison(t):
    try:
        v = eval_operand({"v": t}, ir.Local("v"))
    except PoisonRead:
        assert contains_poison(t)
        return
    assert not contains_poison(v)
