import pytest
from hypothesis import given, settings, strategies as st

from gsl2sql import sql as S
from gsl2sql.backend import gen_procedure
from gsl2sql.parser import parse_model
from gsl2sql.paths import table_model_for
from gsl2sql.sqlinterp import (
    FuelExhausted, SqlIo, SqlRuntimeError, SqlSignal, dump_db, empty_db, eval_sql_proc, eval_sql_stmts,
    load_db, primary_key_violations,
)
from gsl2sql.verifier import encode_inputs, encode_state, generate_case, hrs_fixture_cases

LINK = "Room_reservations_Reservation_room"
P23 = """
class Room { attributes reservations : seq(Reservation.room) * }
class Reservation { attributes room : [Room.reservations] status : String }
"""


@pytest.fixture
def p23():
    tm = table_model_for(parse_model(P23))
    db = empty_db(tm)
    db.tables["Room"].rows = [{"oid": 1}]
    db.tables["Reservation"].rows = [{"oid": k, "status": "ok"} for k in (1, 2, 3)]
    db.tables[LINK].rows = [{"oid": 1, "reservations": 1, "room": 1, "index": 1},
                            {"oid": 2, "reservations": 2, "room": 1, "index": 2}]
    for t, n in (("Room", 2), ("Reservation", 4), (LINK, 3)):
        db.tables[t].next_id = n
    return tm, db


def _links(db):
    return sorted((r["index"], r["reservations"]) for r in db.tables[LINK].rows)


def test_update_status(p23):
    _, db = p23
    st_ = S.Update("Reservation", (("status", S.Lit("unconfirmed")),), S.eq(S.Col("oid"), S.Lit(2)))
    db1, _ = eval_sql_stmts(db, SqlIo(), [st_])
    assert [r["status"] for r in db1.rows("Reservation")] == ["ok", "unconfirmed", "ok"]
    assert db.rows("Reservation")[1]["status"] == "ok"


def test_if_false_is_noop(p23):
    _, db = p23
    st_ = S.IfThenElse(S.FALSE, (S.Delete("Reservation", S.TRUE),))
    db1, _ = eval_sql_stmts(db, SqlIo(), [st_])
    assert db1 == db


def test_index_shift_then_insert(p23):
    _, db = p23
    shift = S.Update(LINK, (("index", S.Bin("+", S.Col("index"), S.Lit(1))),),
                     S.and_(S.eq(S.Col("room"), S.Lit(1)), S.Bin(">=", S.Col("index"), S.Lit(1))))
    ins = S.Insert(LINK, ("reservations", "room", "index"), (S.Lit(3), S.Lit(1), S.Lit(1)))
    db1, _ = eval_sql_stmts(db, SqlIo(), [shift, ins])
    assert _links(db1) == [(1, 3), (2, 1), (3, 2)]


def test_duplicate_primary_key(p23):
    _, db = p23
    with pytest.raises(SqlRuntimeError):
        eval_sql_stmts(db, SqlIo(), [S.Insert("Room", ("oid",), (S.Lit(1),))])


def test_select_into_row_counts(p23):
    _, db = p23
    decl = S.DeclareVar("v", "INTEGER")

    def into(where):
        return S.SelectInto((S.Col("oid"),), ("v",), S.Table("Reservation"), where)

    _, env = eval_sql_stmts(db, SqlIo(), [decl, S.SetVar("v", S.Lit(5)), into(S.eq(S.Col("oid"), S.Lit(9)))])
    assert env.vars["v"] is None
    _, env = eval_sql_stmts(db, SqlIo(), [decl, into(S.eq(S.Col("oid"), S.Lit(2)))])
    assert env.vars["v"] == 2
    with pytest.raises(SqlRuntimeError):
        eval_sql_stmts(db, SqlIo(), [decl, into(S.TRUE)])


def test_signal_raises(p23):
    _, db = p23
    with pytest.raises(SqlSignal):
        eval_sql_stmts(db, SqlIo(), [S.Signal("guard failed")])


def test_endless_loop_runs_out_of_fuel(p23):
    _, db = p23
    loop = S.While(S.TRUE, (S.SetVar("v", S.Lit(1)),))
    with pytest.raises(FuelExhausted):
        eval_sql_stmts(db, SqlIo(), [S.DeclareVar("v", "INTEGER"), loop])


def test_counting_loop():
    db = empty_db(table_model_for(parse_model("class A { }")))
    n = S.Var("n")
    body = (S.SetVar("n", S.Bin("+", n, S.Lit(1))),)
    stmts = [S.DeclareVar("n", "INTEGER"), S.SetVar("n", S.Lit(0)),
             S.While(S.Bin("<", n, S.Lit(7)), body)]
    _, env = eval_sql_stmts(db, SqlIo(), stmts)
    assert env.vars["n"] == 7


def test_empty_procedure_is_identity(p23):
    _, db = p23
    proc = S.SqlProcedure("Room_noop", (("this?", "INTEGER"),), (), ())
    db1, out = eval_sql_proc(db, {"this?": 1}, proc)
    assert db1 == db and out == {"this?": 1}


def _run_fixture(index):
    name, m, cls, op, s, io = hrs_fixture_cases()[index]
    proc = gen_procedure(m, cls, op)
    db0 = encode_state(s)
    return db0, eval_sql_proc(db0, encode_inputs(io, [n for n, _ in proc.in_params]), proc)


def test_reserve_on_empty_hotel():
    db0, (db1, out) = _run_fixture(0)
    assert out["r!"] == 1
    assert db1.rows("Reservation") == [{"oid": 1, "status": "unconfirmed"}]
    assert sorted(r["dates"] for r in db1.rows("Reservation_dates")) == ["d1", "d2"]
    host = db1.rows("Hotel_reservations_Reservation_host")
    assert [(r["reservations"], r["host"], r["index"]) for r in host] == [(1, 1, 1)]
    room = db1.rows(LINK)
    assert [(r["reservations"], r["room"], r["index"]) for r in room] == [(1, 1, 1)]
    assert db1.rows("Hotel_rooms_Room_hotel") == db0.rows("Hotel_rooms_Room_hotel")


def test_reserve_blocked_when_full():
    db0, (db1, out) = _run_fixture(3)
    assert db1 == db0
    assert out["r!"] is None


def test_dump_load_round_trip():
    _, (db1, _) = _run_fixture(2)
    name, m, *_ = hrs_fixture_cases()[2]
    tm = table_model_for(m)
    text = dump_db(db1)
    again = load_db(text, tm)
    assert again == db1 and dump_db(again) == text


def test_load_rejects_unknown_table(hrs):
    with pytest.raises(SqlRuntimeError):
        load_db("[Nope]\noid\n1\n", table_model_for(hrs))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2000))
def test_execution_is_deterministic(seed):
    case = generate_case(seed)
    proc = gen_procedure(case.model, case.cls, case.op)
    db0 = encode_state(case.state)
    inputs = encode_inputs(case.io, [n for n, _ in proc.in_params])
    first = eval_sql_proc(db0, inputs, proc)
    second = eval_sql_proc(db0, inputs, proc)
    assert dump_db(first[0]) == dump_db(second[0]) and first[1] == second[1]
    assert primary_key_violations(first[0]) == []
