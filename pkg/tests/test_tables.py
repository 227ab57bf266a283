import pytest
from hypothesis import given, strategies as st

from gsl2sql.model import BoosterModel
from gsl2sql.parser import parse_model
from gsl2sql.tables import SchemaError, derive_table_model, emit_ddl
from gsl2sql.verifier import generate_case


def test_hrs_table_shapes(hrs):
    tm = derive_table_model(hrs)
    assert tm.table("Room_reservations_Reservation_room").column_names == (
        "oid", "reservations", "room", "index")
    assert tm.table("Reservation_dates").column_names == ("oid", "dates")
    assert tm.table("Reservation").column_names == ("oid", "status")
    st_ = tm.storage_of("Room", "reservations")
    assert (st_.kind, st_.owner_col, st_.value_col, st_.index_col) == ("assoc", "room", "reservations", "index")
    st_ = tm.storage_of("Reservation", "room")
    assert (st_.owner_col, st_.value_col, st_.index_col, st_.opp_index_col) == (
        "reservations", "room", None, "index")


def test_hrs_ddl_lines(hrs):
    ddl = emit_ddl(derive_table_model(hrs))
    assert ("CREATE TABLE `Reservation`(`oid` INTEGER AUTO_INCREMENT, PRIMARY KEY (`oid`), "
            "`status` CHAR(30));") in ddl
    assert ("CREATE TABLE `Room_reservations_Reservation_room`(`oid` INTEGER AUTO_INCREMENT, "
            "PRIMARY KEY (`oid`), `reservations` INTEGER, `room` INTEGER, `index` INTEGER);") in ddl


def test_class_without_properties_has_oid_only():
    tm = derive_table_model(parse_model("class A { }"))
    assert tm.table("A").column_names == ("oid",)
    assert emit_ddl(tm) == ["CREATE TABLE `A`(`oid` INTEGER AUTO_INCREMENT, PRIMARY KEY (`oid`));"]


def test_empty_model_has_no_ddl():
    assert emit_ddl(derive_table_model(BoosterModel())) == []


def test_single_set_property():
    ddl = emit_ddl(derive_table_model(parse_model("class A { attributes xs : set(Int) }")))
    assert len(ddl) == 2
    assert ddl[1] == "CREATE TABLE `A_xs`(`oid` INTEGER, `xs` INTEGER, PRIMARY KEY (`oid`, `xs`));"


def test_assoc_uniques_follow_multiplicity():
    m = parse_model("""
    class A { attributes b : B.a }
    class B { attributes a : [A.b] }
    """)
    tm = derive_table_model(m)
    (name,) = tm.assoc_tables
    assert sorted(tm.assoc_tables[name].spec.uniques) == [("a",), ("b",)]


def test_seq_seq_rejected():
    m = parse_model("""
    class A { attributes bs : seq(B.as_) }
    class B { attributes as_ : seq(A.bs) }
    """)
    with pytest.raises(SchemaError):
        derive_table_model(m)


def test_declaration_order_is_irrelevant(hrs):
    flipped = BoosterModel(hrs.name, tuple(reversed(hrs.classes)), hrs.value_sets)
    assert sorted(emit_ddl(derive_table_model(flipped))) == sorted(emit_ddl(derive_table_model(hrs)))


def _expected_columns(m):
    # oid per class, plus one column per scalar, two per owned collection,
    # and three or four per association counted once
    n = 0
    seen = set()
    for c in m.classes:
        n += 1
        for p in c.properties:
            if p.opposite is None:
                n += 1 if p.kind in ("one", "optional") else (3 if p.kind == "seq" else 2)
            else:
                key = frozenset([(c.name, p.name), (p.opposite.cls, p.opposite.prop)])
                if key not in seen:
                    seen.add(key)
                    q = m.prop(p.opposite.cls, p.opposite.prop)
                    n += 4 if "seq" in (p.kind, q.kind) else 3
    return n


@given(st.integers(min_value=0, max_value=3000))
def test_column_count_conservation(seed):
    m = generate_case(seed).model
    tm = derive_table_model(m)
    assert sum(len(t.columns) for t in tm.all_tables()) == _expected_columns(m)
    assert len(emit_ddl(tm)) >= len(tm.all_tables())
