"""End-to-end acceptance checks.

Each criterion prints one ``PASS``/``FAIL`` line and asserts its outcome.
Run ``pytest tests/test_acceptance.py -s`` (or this file as a script) to see
the summary lines.
"""

from __future__ import annotations

import io
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from checks import (
    open_close_restores,
    run_consume_agreement,
    run_overflow_check,
    run_prover_check,
    run_random_open_close,
    run_round_trip,
    run_split_plan,
)
from conftest import CORPUS, ROOT, load
from oracles import match_up_to_renaming

from mirsl import ir, verify_function
from mirsl.cli import RunConfig, run
from mirsl.executor import VERIFIED, node_to_json
from mirsl.heap import Chunk
from mirsl.ir import PERSISTENT_PREDICATES
from mirsl.symbolic import SymbolSource

N = 1000


def report(n: int, ok: bool, what: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {what}"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def cli(*files, **kw):
    out, err = io.StringIO(), io.StringIO()
    rep, code = run(RunConfig(tuple(str(ROOT / f) for f in files), **kw), out, err)
    return rep, code


def result_of(rep, name):
    (f,) = [f for f in rep.functions if f.result.function == name]
    return f.result


def store_strs(state):
    return [f"{k}={v}" for k, v in sorted(state.store.items())]


def nodes_on_path(root):
    (leaf,) = [n for n in root.leaves() if n.outcome == VERIFIED and n.block == "bb2"] or [None]
    return root.path_to(leaf) if leaf else []


# -- 1 ---------------------------------------------------------------------------------

DEQUE_HEAP = ["malloc_block_Node($l)", "Node_prev($l, $l)", "Node_value($l, poison)", "Node_next($l, $l)"]


def test_1_deque_reproduction():
    t0 = time.perf_counter()
    rep, code = cli("corpus/deque.mmir", emit_trace=True)
    elapsed = time.perf_counter() - t0
    r = result_of(rep, "create_deque")
    trail = nodes_on_path(r.tree)
    at_return = trail[-1].state if trail else None
    ok = code == 0 and r.verified and r.paths_explored == 2 and at_return is not None
    if ok:
        # the thread token is function-entry plumbing handed back after ensures
        heap = [c for c in at_return.heap.render() if not c.startswith("na_token(")]
        ren = match_up_to_renaming(heap, DEQUE_HEAP)
        ok = ren is not None and match_up_to_renaming([f for f in map(str, at_return.pc.facts) if "!=" in f], ["$l != 0"], ren) is not None
    ok = ok and elapsed < 1.0
    report(1, ok, f"create_deque verified on {r.paths_explored} paths; pre-ensures heap matches ({elapsed:.3f}s)")


# -- 2 ---------------------------------------------------------------------------------

EXPECTED_ROWS = [
    ["na_token($t)", "[$q]lft($a)", "shr_ref_Cell_own($a, $t, $s)"],
    ["na_token($t)", "[$q]lft($a)", "Cell_shr($a, $t, $s)"],
    ["na_token($t)", "[$q]lft($a)", "na_bor($a, $t, Cell_content($s))"],
    ["Cell_value($s, $vs)", "na_upd($u, $a, $q, $t, Cell_content($s))"],
    ["Cell_value($s, $n)", "na_upd($u, $a, $q, $t, Cell_content($s))"],
    ["na_token($t)", "[$q]lft($a)"],
]
STORE = ["n=$n", "self=$s"]
PC = ["$f ⊑ $a", "0 < $q", "$q <= 1"]


def test_2_table_reproduction():
    t0 = time.perf_counter()
    rep, code = cli("corpus/cell.mmir", function_filter="Cell::set", emit_trace=True)
    elapsed = time.perf_counter() - t0
    r = result_of(rep, "Cell::set")
    trail = r.tree.path_to(next(r.tree.leaves()))
    ok = r.verified and r.paths_explored == 1 and len(trail) == len(EXPECTED_ROWS)
    ren: dict | None = {}
    for i, (node, row) in enumerate(zip(trail, EXPECTED_ROWS)):
        if not ok or ren is None:
            break
        st = node.state
        persistent = [c for c in st.heap.render() if c.split("(")[0] in PERSISTENT_PREDICATES]
        linear = [c for c in st.heap.render() if c not in persistent]
        # the borrow is persistent: listed where it first appears, implicit afterwards
        heap = linear + persistent if i < 3 else linear
        ren = match_up_to_renaming(heap, row, ren)
        if ren is not None and i >= 3:
            ok = match_up_to_renaming(persistent, ["na_bor($a, $t, Cell_content($s))"], ren) is not None
        if ren is not None:
            ren = match_up_to_renaming(store_strs(st), STORE, ren)
        if ren is not None:
            ren = match_up_to_renaming([str(f) for f in st.pc.facts], PC, ren)
    ok = ok and ren is not None and elapsed < 1.0
    report(2, ok, f"Cell::set verified on {r.paths_explored} path; {len(trail)} states match the expected rows ({elapsed:.3f}s)")


# -- 3 ---------------------------------------------------------------------------------


def test_3_token_protocol():
    p = load("mutations/cell_no_apply.mmir")
    f = p.function_map["Cell::set"]
    r = verify_function(p, f)
    ff = r.first_failure
    at_return = ff is not None and isinstance(f.block(ff.block).terminator, ir.Return) and ff.step == len(f.block(ff.block).statements)
    ok = ff is not None and ff.kind in ("MissingNaToken", "MissingToken") and at_return
    report(3, ok, f"Cell::set without apply fails at return with {ff.kind if ff else None}")


# -- 4 ---------------------------------------------------------------------------------


def test_4_memory_safety():
    rep, code = cli("corpus/unsound.mmir")
    kinds = {f.result.function: (f.result.status, f.result.first_failure.kind if f.result.first_failure else None) for f in rep.functions}
    ok = (
        code == 1
        and all(s == "failed" for s, _ in kinds.values())
        and kinds["use_after_free"][1] == "MissingChunk"
        and kinds["read_uninit"][1] == "PoisonRead"
        and kinds["double_free"][1] == "MissingChunk"
    )
    report(4, ok, f"unsound.mmir: {len(kinds)} functions all fail, exit {code}")


# -- 5 ---------------------------------------------------------------------------------


def test_5_leak_detection():
    p = load("mutations/deque_leak.mmir")
    ens = p.function_map["create_deque"].contract.ensures
    from mirsl import assertions as A

    omits = all(not (isinstance(c, A.ChunkPat) and c.pred == "malloc_block_Node") for c in A.conjuncts(ens))
    r = verify_function(p, p.function_map["create_deque"])
    kind = r.first_failure.kind if r.first_failure else None
    report(5, omits and kind == "LeakedChunks", f"ensures without malloc_block_Node fails with {kind}")


# -- 6 ---------------------------------------------------------------------------------


def test_6_modularity():
    a, b = load("deque.mmir"), load("deque_alt.mmir")
    fa, fb = a.function_map["create_deque"], b.function_map["create_deque"]
    bodies_differ = fa.blocks != fb.blocks and fa.contract == fb.contract
    both_ok = verify_function(a, fa).verified and verify_function(b, fb).verified
    same = True
    for name in sorted(a.function_map):
        if name == "create_deque":
            continue
        ra = verify_function(a, a.function_map[name], trace=True, src=SymbolSource())
        rb = verify_function(b, b.function_map[name], trace=True, src=SymbolSource())
        same = same and ra == rb and node_to_json(ra.tree) == node_to_json(rb.tree)
    report(6, bodies_differ and both_ok and same, "callers of create_deque are unaffected by swapping its body")


# -- 7 ---------------------------------------------------------------------------------


def test_7_matcher_oracle():
    t0 = time.perf_counter()
    bad = [s for s in range(N) if not run_consume_agreement(s)]
    elapsed = time.perf_counter() - t0
    report(7, not bad and elapsed < 30, f"{N - len(bad)}/{N} consume instances agree with brute force ({elapsed:.2f}s)")


# -- 8 ---------------------------------------------------------------------------------


def test_8_prover_soundness():
    t0 = time.perf_counter()
    results = [run_prover_check(s) for s in range(N)]
    elapsed = time.perf_counter() - t0
    unsound = sum(not ok for ok, _ in results)
    proven = sum(p for _, p in results)
    report(8, unsound == 0 and elapsed < 30, f"{unsound} unsound verdicts in {N} fact sets, {proven} proven ({elapsed:.2f}s)")


# -- 9 ---------------------------------------------------------------------------------


def test_9_fraction_conservation():
    plans = sum(run_split_plan(s) for s in range(N))
    sums = sum(run_overflow_check(s) for s in range(N))
    report(9, plans == N and sums == N, f"{plans}/{N} split/merge plans conserve 1; {sums}/{N} overflow checks exact")


# -- 10 --------------------------------------------------------------------------------


def corpus_predicates():
    for path in sorted(CORPUS.rglob("*.mmir")):
        p = load(path.relative_to(CORPUS).as_posix())
        for d in p.predicates:
            yield p, d


def test_10_round_trips():
    rt = sum(run_round_trip(s) for s in range(N))
    oc = sum(run_random_open_close(s) for s in range(N))
    corpus_ok, count = True, 0
    for program, d in corpus_predicates():
        src = SymbolSource(500)
        inst = Chunk(d.name, tuple(src.fresh(x) for x in d.params))
        corpus_ok = corpus_ok and open_close_restores(program, inst)
        count += 1
    ok = rt == N and oc == N and corpus_ok and count > 0
    report(10, ok, f"round trip {rt}/{N}, open/close {oc}/{N}, corpus predicates {count} ok={corpus_ok}")


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q", "-s"]))
