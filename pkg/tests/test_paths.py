import pytest
from hypothesis import given, strategies as st

from gsl2sql import gsl as g
from gsl2sql.model import ClassBase, IdenProperty
from gsl2sql.parser import parse_expression, parse_substitution
from gsl2sql.paths import (
    INT, ResolveError, TypingEnv, UnknownAttribute, obj_to_tab_expr, obj_to_tab_path, resolve_expr,
    resolve_operation, resolve_program, table_model_for,
)
from gsl2sql.tables import reflective_queries
from gsl2sql.verifier import generate_case

HOTEL = ClassBase("Hotel")


def _resolve(m, cls, text):
    return resolve_expr(TypingEnv(m, cls, {}, {}), parse_expression(text))


def test_this_is_base_path(hrs):
    e, t = _resolve(hrs, "Hotel", "this")
    assert e == g.PathExpr(g.OPath(g.BaseOPath(g.ThisRef(HOTEL))))
    assert t.base == HOTEL and t.single
    assert obj_to_tab_path(hrs, e.path) == g.BaseTPath(g.ThisRef(HOTEL))


def test_unknown_attribute(hrs):
    assert "nosuch" not in [p.name for p in hrs.cls("Hotel").properties]
    with pytest.raises(UnknownAttribute) as err:
        _resolve(hrs, "Hotel", "this.nosuch")
    assert (err.value.cls, err.value.attr) == ("Hotel", "nosuch")


def test_created_output_set_access(hrs):
    ro = resolve_operation(hrs, "Hotel", "reserve")
    tq = reflective_queries(table_model_for(hrs))
    assert ("Reservation", "dates") in tq.set_tables
    targets = [a.target for a in g.assignments(ro.tab)]
    start = g.IoRef("r!", ClassBase("Reservation"))
    want = g.TPath(g.RecTPath(g.BaseTPath(start), g.SetTAccess(IdenProperty("Reservation", "dates"))))
    assert want in targets


def test_card_of_allocations(hrs):
    e, t = _resolve(hrs, "Hotel", "card(allocations) < limit")
    te = obj_to_tab_expr(hrs, e)
    base = g.BaseTPath(g.ThisRef(HOTEL))
    card = g.Card(g.PathExpr(g.TPath(g.RecTPath(base, g.SetTAccess(IdenProperty("Hotel", "allocations"))))))
    limit = g.PathExpr(g.TPath(g.RecTPath(base, g.ClassTAccess(IdenProperty("Hotel", "limit")))))
    assert te == g.Binary("<", card, limit)


def test_literal_unchanged(hrs):
    e, t = _resolve(hrs, "Hotel", "5")
    assert obj_to_tab_expr(hrs, e) == g.Lit(5) and t == INT


def test_append_index_uses_assoc_access(hrs):
    e, _ = _resolve(hrs, "Hotel", "#reservations + 1")
    te = obj_to_tab_expr(hrs, e)
    # compose obj_to_tab_path over every harvested object path and compare
    rebuilt = g.map_paths(e, lambda p: g.TPath(obj_to_tab_path(hrs, p)))
    assert te == rebuilt
    acc = te.left.operand.path.tpath.access
    # reservations has an opposite, so it is stored as an association table
    assert acc == g.AssocTAccess(IdenProperty("Hotel", "reservations"))


def test_indexed_seq_component(hrs):
    e, t = _resolve(hrs, "Hotel", "this.reservations[1].status")
    tp = obj_to_tab_expr(hrs, e).path.tpath
    assert tp.prefix.access == g.SeqTCAccess(IdenProperty("Hotel", "reservations"), g.Lit(1))
    assert tp.access == g.ClassTAccess(IdenProperty("Reservation", "status"))


def test_type_errors(hrs):
    with pytest.raises(ResolveError):
        _resolve(hrs, "Hotel", "limit + \"x\"")
    with pytest.raises(ResolveError):
        resolve_program(hrs, "Hotel", "bad", parse_substitution("limit := true"))


def _spine_o(p):
    out = []
    while isinstance(p, g.RecOPath):
        out.append(p.target.prop)
        p = p.prefix
    return out


def _spine_t(p):
    out = []
    while isinstance(p, g.RecTPath):
        out.append(p.access.prop)
        p = p.prefix
    return out


@given(st.integers(min_value=0, max_value=3000))
def test_translation_keeps_spine(seed):
    case = generate_case(seed)
    ro = resolve_program(case.model, case.cls, case.op, case.program)
    for n in g.walk(ro.obj):
        if isinstance(n, g.OPath):
            tp = obj_to_tab_path(case.model, n)
            assert _spine_t(tp) == _spine_o(n.opath)
    assert g.stage_of(ro.tab) in ("T", None)


@given(st.integers(min_value=0, max_value=3000))
def test_storage_classification_is_a_partition(seed):
    m = generate_case(seed).model
    q = reflective_queries(table_model_for(m))
    buckets = [q.bi_assoc, q.class_tables, q.set_tables, q.seq_tables]
    for c in m.classes:
        for p in c.properties:
            assert sum((c.name, p.name) in b for b in buckets) == 1
