import pytest
from hypothesis import given, settings, strategies as st

from gsl2sql import sql as S
from sql_miniparser import parse_expr, parse_statements


def test_empty_insert():
    assert S.emit_statements([S.Insert("Reservation", (), ())]) == "INSERT INTO `Reservation` () VALUE ();"


def test_empty_list_emits_nothing():
    assert S.emit_statements([]) == ""


def test_index_shift_update():
    count = S.Select((S.Count(),), S.Derived(
        S.Select((S.Col("reservations"),), S.Table("m?.reservations"), S.TRUE), "reservations"), S.TRUE)
    where = S.and_(S.eq(S.Col("room"), S.Var("m?")),
                   S.Bin(">=", S.Col("index"), S.Bin("+", count, S.Lit(1))))
    upd = S.Update("Room_reservations_Reservation_room",
                   (("index", S.Bin("+", S.Col("index"), S.Lit(1))),), where)
    assert S.emit_statements([upd]) == (
        "UPDATE `Room_reservations_Reservation_room` SET `index` = `index` + 1 WHERE `room` = `m?` "
        "AND `index` >= (SELECT COUNT(*) FROM (SELECT `reservations` FROM `m?.reservations` "
        "WHERE TRUE) AS reservations WHERE TRUE) + 1;")
    assert parse_statements(S.emit_statements([upd]), ["m?"]) == (upd,)


def test_string_escaping():
    assert S.emit_expr(S.Lit("it's")) == "'it''s'"


def test_precedence_parenthesises_only_when_needed():
    a, b, c = S.Col("a"), S.Col("b"), S.Col("c")
    assert S.emit_expr(S.Bin("-", a, S.Bin("-", b, c))) == "`a` - (`b` - `c`)"
    assert S.emit_expr(S.Bin("-", S.Bin("-", a, b), c)) == "`a` - `b` - `c`"
    assert S.emit_expr(S.Not(S.Bin("AND", a, b))) == "NOT (`a` AND `b`)"


def test_closed_world():
    with pytest.raises(ValueError):
        S.Bin("LIKE", S.Col("a"), S.Lit("x"))
    with pytest.raises(ValueError):
        S.While(S.TRUE, ())
    with pytest.raises(ValueError):
        S.SqlProcedure("p", (("x", "INTEGER"),), (), ())


def test_empty_procedure_text():
    p = S.SqlProcedure("A_noop", (("this?", "INTEGER"),), (), ())
    assert S.emit_procedure(p) == "CREATE PROCEDURE `A_noop` (IN `this?` INTEGER)\nBEGIN\nEND;"


VARS = ["this?", "v?"]

atoms = st.one_of(
    st.integers(min_value=0, max_value=50).map(S.Lit),
    st.sampled_from(["", "x", "a'b"]).map(S.Lit),
    st.booleans().map(S.Lit),
    st.just(S.Null()),
    st.sampled_from(["oid", "index", "name"]).map(S.Col),
    st.sampled_from(VARS).map(S.Var),
)


def _compound(inner):
    return st.one_of(
        st.tuples(st.sampled_from(S.BIN_OPS), inner, inner).map(lambda t: S.Bin(*t)),
        inner.map(S.Not),
        inner.map(S.Neg),
        st.tuples(inner, st.booleans()).map(lambda t: S.IsNull(*t)),
        st.tuples(inner, inner, st.booleans()).map(
            lambda t: S.In(t[0], S.Select((S.Col("oid"),), S.Table("T"), t[1]), t[2])),
    )


exprs = st.recursive(atoms, _compound, max_leaves=10)


@settings(max_examples=300)
@given(exprs)
def test_expression_emit_parse_identity(e):
    assert parse_expr(S.emit_expr(e), VARS) == e
