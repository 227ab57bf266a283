import random

import pytest
from hypothesis import given, settings, strategies as st

from gsl2sql import sql as S
from gsl2sql.backend import (
    CELLS, CompileError, classify, check_cache_coherence, check_loop_variants, compile_operation, gen_procedure,
    to_sql_expr,
)
from gsl2sql import gsl as g
from gsl2sql.parser import parse_expression, parse_model, parse_substitution
from gsl2sql.paths import TypingEnv, obj_to_tab_expr, resolve_expr, resolve_program, table_model_for
from gsl2sql.semantics import ObjState, eval_expr
from gsl2sql.sqlinterp import SqlIo, eval_sql_expr, eval_sql_proc
from gsl2sql.verifier import encode_state, generate_case


def _compile(m, text, cls="Hotel", **kw):
    ro = resolve_program(m, cls, "op", parse_substitution(text))
    return compile_operation(ro, **kw)


def test_reserve_cells(hrs):
    ro = resolve_program(hrs, "Hotel", "reserve", hrs.cls("Hotel").operation("reserve"))
    proc, ctx = compile_operation(ro)
    got = {classify(ctx, a) for a in g.walk(ro.tab) if isinstance(a, g.Assign)}
    assert ("seq", "optional", "insert") in got
    assert ("scalar", "none", "overwrite") in got
    assert 23 in ctx.coverage


def test_reserve_parameters(hrs):
    proc = gen_procedure(hrs, "Hotel", "reserve")
    assert proc.name == "Hotel_reserve"
    assert proc.in_params == (("this?", "INTEGER"), ("dates?", "CHAR(30)"), ("m?", "INTEGER"))
    assert proc.out_params == (("r!", "INTEGER"),)


def test_compilation_is_deterministic(hrs):
    a = S.emit_procedure(gen_procedure(hrs, "Hotel", "reserve"))
    b = S.emit_procedure(gen_procedure(hrs, "Hotel", "reserve"))
    assert a == b


def test_skip_compiles_to_nothing(hrs):
    proc, _ = _compile(hrs, "skip")
    assert proc.body == ()


def test_false_guard_is_a_dead_branch(hrs):
    proc, _ = _compile(hrs, "false ==> limit := 3")
    (st_,) = proc.body
    assert isinstance(st_, S.IfThenElse) and st_.cond == S.FALSE and st_.orelse == ()
    db = encode_state(ObjState.empty(hrs).add_object("Hotel", limit=1)[0])
    assert eval_sql_proc(db, {"this?": 1}, proc)[0] == db


def test_guard_only_operation(hrs):
    proc, _ = _compile(hrs, "limit > 0 ==> skip")
    assert len(proc.body) == 1 and proc.body[0].then == ()


def test_signal_mode(hrs):
    proc, _ = _compile(hrs, "limit > 0 ==> limit := 0", guard_mode="signal")
    assert proc.body[0].orelse == (S.Signal("guard violated"),)


def test_unguarded_choice_rejected(hrs):
    with pytest.raises(CompileError):
        _compile(hrs, "limit := 1 [] limit := 2")


def test_parallel_clash_rejected(hrs):
    with pytest.raises(CompileError):
        _compile(hrs, "limit := 1 || limit := 2")


def test_fresh_names_avoid_schema_names():
    m = parse_model("""
    class A { attributes xs : set(Int) v_cursor : Int v_source : Int
      operations op { ! v : xs @ v_cursor := v } }
    """)
    proc = gen_procedure(m, "A", "op")
    declared = [st_.name for st_ in proc.body if isinstance(st_, (S.DeclareVar, S.DeclareCursor))]
    declared += [st_.name for st_ in proc.body if isinstance(st_, S.CreateTempTableAs)]
    taken = {"xs", "v_cursor", "v_source", "oid", "A", "A_xs"}
    assert declared and not taken & set(declared)
    assert len(set(declared)) == len(declared)


def test_any_picks_least_element():
    m = parse_model("""
    class A { attributes xs : set(Int) best : Int
      operations pick { @ v : xs @ best := v } }
    """)
    s, a = ObjState.empty(m).add_object("A", xs=frozenset([7, 3, 9]), best=0)
    db1, _ = eval_sql_proc(encode_state(s), {"this?": a.n}, gen_procedure(m, "A", "pick"))
    assert db1.rows("A")[0]["best"] == 3


def test_card_guard_agrees_with_gsl(hrs):
    e, _ = resolve_expr(TypingEnv(hrs, "Hotel", {}, {}), parse_expression("card(allocations) < limit"))
    sql_e = to_sql_expr(table_model_for(hrs), obj_to_tab_expr(hrs, e))
    rng = random.Random(7)
    for _ in range(20):
        s, h = ObjState.empty(hrs).add_object("Hotel", limit=rng.randint(0, 3))
        allocs = []
        for _ in range(rng.randint(0, 3)):
            s, x = s.add_object("Allocation")
            allocs.append(x)
        s = s.set(h, "allocations", frozenset(allocs))
        want = eval_expr(s, {"this?": h}, {}, e)
        got = eval_sql_expr(encode_state(s), SqlIo({"this?": h.n}), sql_e)
        assert bool(got) == want == (len(allocs) < s.get(h, "limit"))


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=5000))
def test_generated_cases_compile_cleanly(seed):
    case = generate_case(seed)
    ro = resolve_program(case.model, case.cls, case.op, case.program)
    proc, ctx = compile_operation(ro)
    assert set(ctx.coverage) <= set(CELLS.values())
    assert check_cache_coherence(proc, table_model_for(case.model)) == []
    assert check_loop_variants(proc.body) == []
    # compiling again gives the same procedure
    assert compile_operation(ro)[0] == proc
