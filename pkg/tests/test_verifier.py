import pytest
from hypothesis import given, settings, strategies as st

from gsl2sql.model import IdenProperty
from gsl2sql.parser import parse_model, print_model
from gsl2sql.paths import table_model_for
from gsl2sql.semantics import Obj, ObjState, check_state, dump_state
from gsl2sql.sqlinterp import empty_db
from gsl2sql.verifier import (
    CELL_LIST, MINIMAL, Bounds, LinkWitness, SchemaMismatch, Simulated, Violation, assoc_conjunct_name,
    case_header, check_simulation, encode_state, feasible_cells, generate_case, hrs_fixture_cases,
    linking_invariant, property_mappings, replay, run_case, run_cases, seq_index_triples, table_mappings,
)


def _busy():
    return hrs_fixture_cases()[1]


def test_property_mappings_on_fixture():
    _, m, _, _, s, _ = _busy()
    assert property_mappings(s, IdenProperty("Hotel", "limit")) == {(1, 2)}
    assert property_mappings(s, IdenProperty("Reservation", "room")) == {(1, 1)}
    assert seq_index_triples(s, IdenProperty("Hotel", "reservations")) == {(1, 1, 1), (1, 2, 2)}
    db = encode_state(s)
    assert table_mappings(db, "Reservation_dates", "oid", "dates") == {(1, "d1")}


def test_conjunct_names():
    assert assoc_conjunct_name("seq", "optional") == "opt-many"
    assert assoc_conjunct_name("one", "set") == "one-many"
    assert assoc_conjunct_name("optional", "one") == "opt-one"


def test_empty_states_are_linked(hrs):
    assert linking_invariant(ObjState.empty(hrs), empty_db(table_model_for(hrs)))


def test_fixture_states_are_linked():
    for _, _, _, _, s, _ in hrs_fixture_cases():
        assert check_state(s) == []
        assert linking_invariant(s, encode_state(s))


def test_corrupted_index_names_seq_conjunct():
    _, _, _, _, s, _ = _busy()
    db = encode_state(s)
    row = db.tables["Hotel_reservations_Reservation_host"].rows[0]
    row["index"] = 5
    rep = linking_invariant(s, db)
    assert not rep and rep.conjunct == "seq"


def test_missing_link_names_assoc_conjunct():
    _, _, _, _, s, _ = _busy()
    db = encode_state(s)
    db.tables["Hotel_rooms_Room_hotel"].rows.pop()
    rep = linking_invariant(s, db)
    assert not rep and rep.conjunct == "one-many"


def test_schema_mismatch(hrs):
    db = empty_db(table_model_for(parse_model("class A { }")))
    with pytest.raises(SchemaMismatch):
        linking_invariant(ObjState.empty(hrs), db)


def test_witness_must_be_injective():
    with pytest.raises(ValueError):
        LinkWitness({Obj("A", 1): 1, Obj("A", 2): 1})
    assert LinkWitness({Obj("A", 1): 1, Obj("B", 2): 1}).oid(Obj("B", 2)) == 1


def test_renumbering_witness():
    _, m, cls, op, s, io = _busy()
    w = LinkWitness({o: 10 + o.n for o in s.values})
    db = encode_state(s, w=w)
    assert linking_invariant(s, db, w)
    assert not linking_invariant(s, db)
    assert isinstance(check_simulation(m, cls, op, s, io, w=w), Simulated)


def test_skip_simulates_itself():
    m = parse_model("class A { attributes x : Int operations noop { skip } }")
    s, a = ObjState.empty(m).add_object("A", x=4)
    v = check_simulation(m, "A", "noop", s, {"this?": a})
    assert isinstance(v, Simulated) and v.state == s


def test_unrelated_fresh_objects_keep_linking():
    _, m, _, _, s, _ = _busy()
    s2, _ = s.add_object("Allocation")
    assert linking_invariant(s2, encode_state(s2))
    assert not linking_invariant(s2, encode_state(s))


def test_fixture_suite_simulates():
    for name, m, cls, op, s, io in hrs_fixture_cases():
        assert isinstance(check_simulation(m, cls, op, s, io), Simulated), name


def test_signal_mode_rolls_back():
    name, m, cls, op, s, io = hrs_fixture_cases()[3]
    v = check_simulation(m, cls, op, s, io, guard_mode="signal")
    assert isinstance(v, Simulated) and v.state == s


def test_minimal_seed_zero_snapshot():
    case = generate_case(0, MINIMAL)
    assert print_model(case.model) == (
        "model Gen\n\nset Color = { red, green, blue }\n\nclass A {\n  attributes\n    f1 : [Color]\n"
        "  operations\n    op { f1 := green }\n}\n")
    assert dump_state(case.state) == 'extent A 1\nA#1.f1 = "green"'
    assert (case.cell, case.wrapper) == (1, "plain")


def test_generation_is_deterministic():
    a, b = generate_case(123), generate_case(123)
    assert print_model(a.model) == print_model(b.model) and a.state == b.state and a.io == b.io


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(0, 1, 1, 1)
    assert set(feasible_cells(Bounds())) == set(CELL_LIST)


def test_mutation_is_reported_and_replays():
    case = generate_case(16)
    v = run_case(case, ["drop_index_shift"])
    assert isinstance(v, Violation) and v.kind == "invariant" and v.conjunct == "seq"
    assert not v.is_pipeline_error
    text = v.report(case_header(case, ["drop_index_shift"]))
    for section in ("-- model", "-- before", "-- sql", "-- sql after", "-- candidate 1"):
        assert section in text
    again = replay(text)
    assert isinstance(again, Violation)
    assert again.report(case_header(case, ["drop_index_shift"])) == text


def test_coverage_reaches_every_cell():
    rep = run_cases(range(len(CELL_LIST) * 3))
    assert rep.violations == []
    assert all(rep.coverage[c] >= 1 for c in CELL_LIST)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=5000), st.booleans())
def test_generated_states_are_valid_and_linked(seed, violate):
    case = generate_case(seed, violate_guard=violate)
    assert check_state(case.state) == []
    assert linking_invariant(case.state, encode_state(case.state))
