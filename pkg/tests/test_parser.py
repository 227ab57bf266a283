import pytest
from hypothesis import given, settings, strategies as st

from gsl2sql import fixture_text
from gsl2sql import gsl as g
from gsl2sql.model import ONE, SEQ, ClassBase, IdenProperty
from gsl2sql.parser import (
    ParseError, parse_expression, parse_model, parse_substitution, print_model,
)
from gsl2sql.verifier import generate_case


def ref(*names):
    return g.PathExpr(g.BPath(tuple(g.Segment(n.rstrip("?!"), n[-1] if n[-1] in "?!" else "")
                                    for n in names)))


def test_hotel_reservation_fragment():
    src = """
    model Frag
    class Hotel { attributes reservations : seq(Reservation.host) * }
    class Reservation { attributes host : Hotel.reservations }
    """
    m = parse_model(src)
    assert m.class_names() == ["Hotel", "Reservation"]
    r = m.prop("Hotel", "reservations")
    h = m.prop("Reservation", "host")
    assert (r.kind, r.target, r.opposite) == (SEQ, ClassBase("Reservation"), IdenProperty("Reservation", "host"))
    assert (h.kind, h.opposite) == (ONE, IdenProperty("Hotel", "reservations"))


def test_empty_input():
    assert parse_model("").classes == ()


def test_missing_type_is_located():
    with pytest.raises(ParseError) as err:
        parse_model("class A { attributes x : }")
    assert (err.value.line, err.value.col) == (1, 26)


def test_reserve_body_shape(hrs):
    body = hrs.cls("Hotel").operation("reserve")
    assert isinstance(body, g.Guard)
    assert len(g.par_branches(body.body)) == 6
    assert g.count_nodes(body) == 13


def test_skip():
    assert parse_substitution("skip") == g.Skip()


def test_conflicting_par_still_parses():
    want = g.Par(g.Assign(ref("x").path, g.Lit(1)), g.Assign(ref("x").path, g.Lit(2)))
    assert parse_substitution("x := 1 || x := 2") == want


def test_cardinality_spellings_agree():
    assert parse_expression("card(a)") == parse_expression("#a") == g.Card(ref("a"))


def test_arrow_synonym():
    assert parse_substitution("a = 1 --> skip") == parse_substitution("a = 1 ==> skip")


def test_precedence_of_combinators():
    s = parse_substitution("a := 1 ; b := 1 [] c := 1 || d := 1")
    assert isinstance(s, g.Seq)
    assert isinstance(s.right, g.Choice)
    assert isinstance(s.right.right, g.Par)


def test_guard_is_right_associative():
    s = parse_substitution("p ==> q ==> skip")
    assert isinstance(s.body, g.Guard)


def test_decorations_are_segment_flags():
    e = parse_expression("m?.reservations")
    seg = e.path.segments[0]
    assert (seg.name, seg.deco) == ("m", "?")


def test_hrs_print_parse_round_trip(hrs):
    assert parse_model(print_model(hrs)) == hrs
    assert parse_model(fixture_text("hrs.boo")) == hrs


# -- generated programs ----------------------------------------------------

names = st.sampled_from(["a", "b", "c", "this"])
paths = st.lists(st.sampled_from(["a", "b", "c"]), min_size=0, max_size=2).flatmap(
    lambda tail: st.sampled_from(["this", "a", "x?", "r!", "v"]).map(lambda head: ref(head, *tail)))
atoms = st.one_of(
    st.integers(min_value=0, max_value=99).map(g.Lit),
    st.sampled_from(["", "s", "it's"]).map(g.Lit),
    st.booleans().map(g.Lit),
    st.just(g.Undefined()),
    paths,
    st.sampled_from(["A", "B"]).map(g.Extent),
)


def _compound(inner):
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*", "=", "/=", "<", "<=", "&", "or", "=>", ":", "\\/", "^"]),
                  inner, inner).map(lambda t: g.Union_(t[1], t[2]) if t[0] == "\\/" else
                                    g.Concat(t[1], t[2]) if t[0] == "^" else g.Binary(*t)),
        inner.map(lambda e: g.Unary("not", e)),
        inner.map(g.Card),
        st.lists(inner, max_size=3).map(lambda xs: g.SeqDisplay(tuple(xs))),
        st.tuples(inner, inner, inner).map(lambda t: g.Ins(*t)),
    )


exprs = st.recursive(atoms, _compound, max_leaves=8)
assigns = st.tuples(paths, exprs).map(lambda t: g.Assign(t[0].path, t[1]))


def _subs(inner):
    return st.one_of(
        st.tuples(exprs, inner).map(lambda t: g.Guard(*t)),
        st.tuples(inner, inner).map(lambda t: g.Par(*t)),
        st.tuples(inner, inner).map(lambda t: g.Seq(*t)),
        st.tuples(inner, inner).map(lambda t: g.Choice(*t)),
        st.tuples(st.sampled_from(["v", "w"]), exprs, inner).map(lambda t: g.All(*t)),
        st.tuples(st.sampled_from(["v", "w"]), exprs, inner).map(lambda t: g.Any_(*t)),
    )


substitutions = st.recursive(st.one_of(st.just(g.Skip()), assigns), _subs, max_leaves=6)


@settings(max_examples=300)
@given(exprs)
def test_expression_round_trip(e):
    assert parse_expression(g.print_expr(e)) == e


@settings(max_examples=300)
@given(substitutions)
def test_substitution_round_trip(s):
    assert parse_substitution(g.print_substitution(s)) == s


@given(st.integers(min_value=0, max_value=5000))
def test_generated_models_round_trip(seed):
    m = generate_case(seed).model
    assert parse_model(print_model(m)) == m


@given(st.text(max_size=40))
def test_parser_is_total(text):
    try:
        parse_model(text)
    except ParseError:
        pass
