from hypothesis import given, strategies as st

from gsl2sql.model import (
    ONE, OPTIONAL, SEQ, SET, BoosterModel, ClassBase, ClassDecl, IdenProperty, IntBase, ModelError,
    PropertyDecl, SetBase, check_model, validate_model,
)
from gsl2sql.verifier import generate_case


def _assoc_model(q_opposite):
    a = ClassDecl("A", (PropertyDecl("p", OPTIONAL, ClassBase("B"), IdenProperty("B", "q")),
                        PropertyDecl("r", OPTIONAL, ClassBase("B"), IdenProperty("B", "q"))))
    b = ClassDecl("B", (PropertyDecl("q", SET, ClassBase("A"), q_opposite),))
    return BoosterModel("M", (a, b))


def test_hrs_is_valid(hrs):
    assert validate_model(hrs) == []


def test_empty_model_is_valid():
    assert validate_model(BoosterModel()) == []


def test_asymmetric_opposition_reported_once():
    m = _assoc_model(IdenProperty("A", "r"))
    diags = validate_model(m)
    # independent scan: every declared opposite whose partner does not point back
    bad = []
    for c in m.classes:
        for p in c.properties:
            if p.opposite is not None:
                q = m.prop(p.opposite.cls, p.opposite.prop)
                if q is None or q.opposite != IdenProperty(c.name, p.name):
                    bad.append(f"{c.name}.{p.name}")
    assert bad == ["A.p"]
    assert [d.location for d in diags] == bad
    assert "asymmetric" in diags[0].reason


def test_duplicate_property_and_class():
    c = ClassDecl("A", (PropertyDecl("x", ONE, IntBase()), PropertyDecl("x", ONE, IntBase())))
    diags = validate_model(BoosterModel("M", (c, ClassDecl("A"))))
    text = " ".join(d.reason for d in diags)
    assert "class declared more than once" in text
    assert "property declared more than once" in text


def test_unknown_targets():
    c = ClassDecl("A", (PropertyDecl("x", ONE, ClassBase("Nope")), PropertyDecl("y", SET, SetBase("Q"))))
    msgs = [d.reason for d in validate_model(BoosterModel("M", (c,)))]
    assert "unknown class Nope" in msgs
    assert "unknown value-set Q" in msgs


def test_check_model_raises():
    try:
        check_model(_assoc_model(IdenProperty("A", "r")))
    except ModelError as e:
        assert e.diagnostics
    else:
        raise AssertionError("expected ModelError")


def test_opposite_lookup(hrs):
    assert hrs.opposite("Hotel", "reservations").name == "host"
    assert hrs.opposite("Reservation", "status") is None
    assert hrs.prop("Hotel", "reservations").kind == SEQ
    assert hrs.value_set("Date") == ("d1", "d2", "d3")
    assert hrs.enum_member("d2") == "Date"


def test_opposition_is_an_involution_on_hrs(hrs):
    for c in hrs.classes:
        for p in c.properties:
            if p.opposite is not None:
                q = hrs.opposite(c.name, p.name)
                assert hrs.opposite(p.opposite.cls, q.name) == p


@given(st.integers(min_value=0, max_value=400))
def test_generated_models_valid_and_validation_pure(seed):
    m = generate_case(seed).model
    first = validate_model(m)
    assert first == [] and validate_model(m) == first
    for c in m.classes:
        for p in c.properties:
            if p.opposite is not None:
                q = m.opposite(c.name, p.name)
                assert m.opposite(p.opposite.cls, q.name) == p
