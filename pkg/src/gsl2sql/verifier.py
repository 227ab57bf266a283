"""Linking invariant, simulation check and randomized differential testing."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from . import gsl as g
from . import sql as S
from .backend import CELL_OF_ID, CompileError, compile_operation
from .model import (
    ONE, OPTIONAL, SEQ, SET,
    BoolBase, BoosterModel, ClassBase, ClassDecl, IdenProperty, IntBase, PropertyDecl, SetBase, StrBase,
    check_model,
)
from .parser import print_model
from .paths import resolve_program, table_model_for
from .semantics import EvalError, Obj, ObjState, check_state, dump_io, dump_state, eval_gsl
from .sqlinterp import DbState, SqlRuntimeError, SqlSignal, dump_db, empty_db, eval_sql_proc
from .tables import TableModel

# --------------------------------------------------------------------------
# Value encoding
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkWitness:
    """Object-id encoding; identity on object numbers unless a map is given."""

    oids: Optional[Mapping[Obj, int]] = None

    def __post_init__(self):
        # oids key one table per class, so injectivity is required within a class
        if self.oids is None:
            return
        seen = set()
        top: Dict[str, Tuple[int, int]] = {}
        for o, n in self.oids.items():
            if (o.cls, n) in seen:
                raise ValueError("object encoding must be injective")
            seen.add((o.cls, n))
            hi_n, hi_oid = top.get(o.cls, (0, 0))
            top[o.cls] = (max(hi_n, o.n), max(hi_oid, n))
        object.__setattr__(self, "_top", top)

    def oid(self, o: Obj) -> int:
        if self.oids is None:
            return o.n
        if o in self.oids:
            return self.oids[o]
        # objects created later are numbered in allocation order on both sides
        hi_n, hi_oid = self._top.get(o.cls, (0, 0))
        if o.n <= hi_n:
            raise KeyError(o)
        return hi_oid + (o.n - hi_n)

    def enc(self, v):
        if isinstance(v, Obj):
            return self.oid(v)
        if isinstance(v, bool):
            return int(v)
        return v


IDENTITY = LinkWitness()


def _elements(v) -> list:
    if v is None:
        return []
    if isinstance(v, (frozenset, tuple)):
        return list(v)
    return [v]


def property_mappings(s: ObjState, p: IdenProperty, w: LinkWitness = IDENTITY) -> Set[tuple]:
    """(owner, value) pairs of a property; undefined values contribute nothing."""
    out = set()
    for o in s.extent.get(p.cls, ()):
        for v in _elements(s.get(o, p.prop)):
            out.add((w.oid(o), w.enc(v)))
    return out


def seq_index_triples(s: ObjState, p: IdenProperty, w: LinkWitness = IDENTITY) -> Set[tuple]:
    out = set()
    for o in s.extent.get(p.cls, ()):
        for k, v in enumerate(s.get(o, p.prop), 1):
            out.add((w.oid(o), w.enc(v), k))
    return out


def table_mappings(db: DbState, table: str, c1: str, c2: str) -> Set[tuple]:
    return {(_norm(r[c1]), _norm(r[c2])) for r in db.table(table).rows}


def _norm(v):
    return int(v) if isinstance(v, bool) else v


def _triples(db: DbState, table: str, c1: str, c2: str, c3: str) -> Set[tuple]:
    return {(_norm(r[c1]), _norm(r[c2]), _norm(r[c3])) for r in db.table(table).rows}


# --------------------------------------------------------------------------
# Encoding an object state as a database
# --------------------------------------------------------------------------


def encode_state(s: ObjState, tm: Optional[TableModel] = None, w: LinkWitness = IDENTITY) -> DbState:
    """The database state linked to ``s`` (auto-increment counters aligned)."""
    tm = tm or table_model_for(s.model)
    db = empty_db(tm)
    m = s.model
    for c in m.classes:
        t = db.tables[c.name]
        for o in sorted(s.extent.get(c.name, ())):
            row = {"oid": w.oid(o)}
            for col in t.columns[1:]:
                row[col] = w.enc(s.get(o, col))
            t.rows.append(row)
        t.next_id = max([r["oid"] for r in t.rows], default=0) + 1
    for name, at in sorted(tm.assoc_tables.items()):
        t = db.tables[name]
        c1, p1 = at.first.cls, at.first.prop
        pd1 = m.prop(c1, p1)
        p2 = at.second.prop
        for o in sorted(s.extent.get(c1, ())):
            for k, y in enumerate(_elements(s.get(o, p1)), 1):
                row = {"oid": len(t.rows) + 1, p1: w.oid(y), p2: w.oid(o)}
                if "index" in t.columns:
                    if pd1.kind == SEQ:
                        row["index"] = k
                    else:
                        row["index"] = list(s.get(y, p2)).index(o) + 1
                t.rows.append(row)
        t.next_id = len(t.rows) + 1
    for key, st in sorted(tm.storage.items()):
        if st.kind not in ("set", "seq"):
            continue
        c, p = key
        t = db.tables[st.table]
        for o in sorted(s.extent.get(c, ())):
            for k, v in enumerate(_elements(s.get(o, p)) if st.kind == "seq" else
                                  sorted(s.get(o, p), key=repr), 1):
                row = {"oid": w.oid(o), p: w.enc(v)}
                if st.kind == "seq":
                    row["index"] = k
                t.rows.append(row)
    return db


# --------------------------------------------------------------------------
# Linking invariant
# --------------------------------------------------------------------------


class SchemaMismatch(Exception):
    pass


@dataclass
class LinkReport:
    ok: bool
    conjunct: Optional[str] = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def _mult(kind: str) -> str:
    return {OPTIONAL: "opt", ONE: "one", SET: "many", SEQ: "many"}[kind]


def assoc_conjunct_name(k1: str, k2: str) -> str:
    order = ["opt", "one", "many"]
    a, b = sorted([_mult(k1), _mult(k2)], key=order.index)
    return f"{a}-{b}"


def _check_schema(tm: TableModel, db: DbState):
    want = {t.name: t.column_names for t in tm.all_tables()}
    have = {n: t.columns for n, t in db.tables.items()}
    if want != have:
        raise SchemaMismatch(f"database tables {sorted(have)} do not match the schema {sorted(want)}")


def linking_invariant(s: ObjState, db: DbState, w: LinkWitness = IDENTITY,
                      tm: Optional[TableModel] = None) -> LinkReport:
    m = s.model
    tm = tm or table_model_for(m)
    _check_schema(tm, db)

    def fail(conj, detail):
        return LinkReport(False, conj, detail)

    for c in m.classes:
        objs = {w.oid(o) for o in s.extent.get(c.name, ())}
        rows = {r["oid"] for r in db.tables[c.name].rows}
        if objs != rows or len(db.tables[c.name].rows) != len(rows):
            return fail("extent", f"{c.name}: objects {sorted(objs)} vs rows {sorted(rows)}")
    for (c, p), st in sorted(tm.storage.items()):
        if st.kind != "class":
            continue
        want = {(w.oid(o), w.enc(s.get(o, p))) for o in s.extent.get(c, ())}
        have = table_mappings(db, c, "oid", p)
        if want != have:
            return fail("scalar", f"{c}.{p}: {sorted(want, key=repr)} vs {sorted(have, key=repr)}")
    for (c, p), st in sorted(tm.storage.items()):
        if st.kind == "set":
            want = property_mappings(s, IdenProperty(c, p), w)
            have = table_mappings(db, st.table, "oid", p)
            if want != have or len(db.tables[st.table].rows) != len(have):
                return fail("set", f"{c}.{p}: {sorted(want, key=repr)} vs {sorted(have, key=repr)}")
        elif st.kind == "seq":
            want = seq_index_triples(s, IdenProperty(c, p), w)
            have = _triples(db, st.table, "oid", p, "index")
            if want != have or len(db.tables[st.table].rows) != len(want):
                return fail("seq", f"{c}.{p}: {sorted(want, key=repr)} vs {sorted(have, key=repr)}")
    for name, at in sorted(tm.assoc_tables.items()):
        conj = assoc_conjunct_name(at.first.kind, at.second.kind)
        links = None
        for end in (at.first, at.second):
            st = tm.storage_of(end.cls, end.prop)
            want = property_mappings(s, IdenProperty(end.cls, end.prop), w)
            have = {(b, a) for a, b in table_mappings(db, name, st.value_col, st.owner_col)}
            if want != have:
                return fail(conj, f"{end.cls}.{end.prop}: {sorted(want)} vs {sorted(have, key=repr)}")
            links = len(want)
        if len(db.tables[name].rows) != links:
            return fail(conj, f"{name}: {len(db.tables[name].rows)} rows for {links} links")
        for end in (at.first, at.second):
            if end.kind != SEQ:
                continue
            st = tm.storage_of(end.cls, end.prop)
            want = seq_index_triples(s, IdenProperty(end.cls, end.prop), w)
            have = _triples(db, name, st.owner_col, st.value_col, st.index_col)
            if want != have:
                return fail("seq", f"{end.cls}.{end.prop}: {sorted(want)} vs {sorted(have, key=repr)}")
    return LinkReport(True)


# --------------------------------------------------------------------------
# Simulation check
# --------------------------------------------------------------------------


@dataclass
class Simulated:
    state: ObjState
    io: Dict[str, object]
    coverage: List[int] = field(default_factory=list)


@dataclass
class Violation:
    kind: str  # "invariant" or "output"; "compile" and "runtime" for pipeline errors
    conjunct: Optional[str]
    detail: str
    before: ObjState
    io: Dict[str, object]
    sql_after: Optional[DbState]
    candidates: List[Tuple[ObjState, Dict[str, object]]]
    sql_text: str = ""
    coverage: List[int] = field(default_factory=list)

    @property
    def is_pipeline_error(self) -> bool:
        return self.kind in ("compile", "runtime")

    def report(self, header: str = "") -> str:
        parts = [header] if header else []
        parts += [
            f"violation: {self.kind}" + (f" ({self.conjunct})" if self.conjunct else ""),
            f"detail: {self.detail}",
            "-- model", print_model(self.before.model),
            "-- before", dump_state(self.before), dump_io(self.io),
            "-- sql", self.sql_text,
            "-- sql after", dump_db(self.sql_after) if self.sql_after is not None else "(none)",
        ]
        for i, (cs, cio) in enumerate(self.candidates[:3]):
            parts += [f"-- candidate {i + 1}", dump_state(cs), dump_io(cio)]
        return "\n".join(parts) + "\n"


Verdict = object  # Simulated | Violation


def encode_inputs(io: Mapping[str, object], names: Sequence[str], w: LinkWitness = IDENTITY) -> Dict[str, object]:
    out = {}
    for n in names:
        v = io.get(n)
        if isinstance(v, (frozenset, tuple)):
            out[n] = type(v)(w.enc(x) for x in v)
        else:
            out[n] = w.enc(v)
    return out


def check_simulation(m: BoosterModel, cls: str, op: str, s: ObjState, io: Mapping[str, object],
                     mutations: Sequence[str] = (), guard_mode: str = "skip",
                     gsl_observer=None, sql_observer=None, w: LinkWitness = IDENTITY) -> Verdict:
    c = m.cls(cls)
    if c is None or c.operation(op) is None:
        raise ValueError(f"no operation {cls}.{op}")
    ro = resolve_program(m, cls, op, c.operation(op))
    tm = table_model_for(m)
    try:
        proc, ctx = compile_operation(ro, tm, mutations, guard_mode)
    except CompileError as e:
        return Violation("compile", None, str(e), s, dict(io), None, [], "")
    db0 = encode_state(s, tm, w)
    pre = linking_invariant(s, db0, w, tm)
    if not pre:
        raise ValueError(f"before-states are not linked: {pre.conjunct}: {pre.detail}")
    candidates = eval_gsl(s, io, ro.obj, observer=gsl_observer)
    sql_text = S.emit_procedure(proc)
    params = [n for n, _ in proc.in_params]
    rolled_back: Dict[str, object] = {}
    try:
        db1, out = eval_sql_proc(db0, encode_inputs(io, params, w), proc, observer=sql_observer)
    except SqlSignal:
        if guard_mode != "signal":
            raise
        # the signalled transaction is rolled back
        db1, out = db0, rolled_back
    except SqlRuntimeError as e:
        return Violation("runtime", None, str(e), s, dict(io), None, candidates, sql_text, ctx.coverage)
    first = None
    for cs, cio in candidates:
        rep = linking_invariant(cs, db1, w, tm)
        if rep and (out is rolled_back or all(w.enc(cio.get(n)) == out.get(n) for n, _ in proc.out_params)):
            return Simulated(cs, cio, ctx.coverage)
        if first is None:
            if rep:
                first = ("output", None, f"outputs {out} vs {dict((n, cio.get(n)) for n, _ in proc.out_params)}")
            else:
                first = ("invariant", rep.conjunct, rep.detail)
    kind, conj, detail = first or ("invariant", None, "no candidate after-state")
    return Violation(kind, conj, detail, s, dict(io), db1, candidates, sql_text, ctx.coverage)


# --------------------------------------------------------------------------
# Case generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    max_classes: int = 4
    max_props: int = 3
    max_objects: int = 3
    max_coll: int = 3

    def __post_init__(self):
        if min(self.max_classes, self.max_props, self.max_objects, self.max_coll) < 1:
            raise ValueError("bounds must be positive")


MINIMAL = Bounds(1, 1, 1, 1)
CELL_LIST = sorted(CELL_OF_ID)
PRIMITIVE_CELLS = (1, 2, 3, 4, 5)
WRAPPERS = ("plain", "guard", "par", "all", "any", "choice", "created")

COLORS = ("red", "green", "blue")
_STRS = ("a", "b", "c", "d")


@dataclass
class Case:
    seed: int
    cell: int
    wrapper: str
    model: BoosterModel
    cls: str
    op: str
    state: ObjState
    io: Dict[str, object]
    violate_guard: bool = False
    bounds: Optional["Bounds"] = None

    @property
    def source(self) -> str:
        return print_model(self.model)

    @property
    def program(self) -> g.Substitution:
        return self.model.cls(self.cls).operation(self.op)


class _Retry(Exception):
    pass


def _seg(name: str) -> g.Segment:
    if name[-1] in "?!":
        return g.Segment(name[:-1], name[-1])
    return g.Segment(name)


def _path(*names: str) -> g.BPath:
    return g.BPath(tuple(_seg(n) for n in names))


def _ref(*names: str) -> g.PathExpr:
    return g.PathExpr(_path(*names))


def _assign(owner: Tuple[str, ...], prop: str, src: g.Expression) -> g.Assign:
    return g.Assign(_path(*owner, prop), src)


def _decl(name: str, typ: g.Expression) -> g.Expression:
    return g.Binary(":", _ref(name), typ)


class _Gen:
    def __init__(self, seed: int, attempt: int, bounds: Bounds, cell: int, violate_guard: bool):
        self.rng = random.Random(f"{seed}/{attempt}")
        self.b = bounds
        self.cell = cell
        self.violate = violate_guard
        self.n = 0
        self.classes: List[str] = []
        self.props: Dict[str, List[PropertyDecl]] = {}
        self.decls: List[g.Expression] = []
        self.io: Dict[str, object] = {}
        self.fixups: List[Callable[[ObjState], ObjState]] = []

    # -- model ------------------------------------------------------------

    def name(self, prefix: str) -> str:
        self.n += 1
        return f"{prefix}{self.n}"

    def room(self, c: str) -> bool:
        return len(self.props[c]) < self.b.max_props

    def add_prim(self, c: str, kind: str, base) -> str:
        n = self.name({SET: "s", SEQ: "q"}.get(kind, "f"))
        self.props[c].append(PropertyDecl(n, kind, base))
        return n

    def add_assoc(self, c1: str, k1: str, c2: str, k2: str) -> Tuple[str, str]:
        p1, p2 = self.name("p"), self.name("p")
        self.props[c1].append(PropertyDecl(p1, k1, ClassBase(c2), IdenProperty(c2, p2)))
        self.props[c2].append(PropertyDecl(p2, k2, ClassBase(c1), IdenProperty(c1, p1)))
        return p1, p2

    def rand_base(self, allow_bool: bool = True):
        opts = [IntBase(), StrBase(), SetBase("Color")] + ([BoolBase()] if allow_bool else [])
        return self.rng.choice(opts)

    def extras(self):
        rng = self.rng
        for c in list(self.classes):
            while self.room(c) and rng.random() < 0.5:
                r = rng.random()
                others = [d for d in self.classes if d != c and self.room(d)]
                if r < 0.45 and others:
                    d = rng.choice(others)
                    k1, k2 = rng.choice([OPTIONAL, ONE, SET, SEQ]), rng.choice([OPTIONAL, ONE, SET, SEQ])
                    if k1 == SEQ and k2 == SEQ:
                        k2 = SET
                    self.add_assoc(c, k1, d, k2)
                elif r < 0.75:
                    self.add_prim(c, rng.choice([ONE, OPTIONAL]), self.rand_base())
                else:
                    self.add_prim(c, rng.choice([SET, SEQ]), self.rand_base(False))

    def model(self, op_name: str, body: g.Substitution) -> BoosterModel:
        classes = []
        for c in self.classes:
            ops = ((op_name, body),) if c == "A" else ()
            classes.append(ClassDecl(c, tuple(self.props[c]), ops))
        return check_model(BoosterModel("Gen", tuple(classes), (("Color", COLORS),)))

    # -- values -------------------------------------------------------------

    def value(self, base, objs: Dict[str, List[Obj]]):
        rng = self.rng
        if isinstance(base, IntBase):
            return rng.randint(0, 5)
        if isinstance(base, StrBase):
            return rng.choice(_STRS)
        if isinstance(base, BoolBase):
            return rng.random() < 0.5
        if isinstance(base, SetBase):
            return rng.choice(COLORS)
        return rng.choice(objs[base.name])

    def lit(self, base) -> g.Expression:
        v = self.value(base, {})
        if isinstance(base, SetBase):
            return _ref(v)  # the resolver turns a bare member name into an enum literal
        return g.Lit(v)

    def domain(self, base) -> list:
        if isinstance(base, IntBase):
            return list(range(6))
        if isinstance(base, StrBase):
            return list(_STRS)
        if isinstance(base, SetBase):
            return list(COLORS)
        return [False, True]

    def type_expr(self, base) -> g.Expression:
        if isinstance(base, ClassBase):
            return g.Extent(base.name)
        if isinstance(base, SetBase):
            return _ref(base.name)
        return _ref({IntBase: "Int", StrBase: "String", BoolBase: "Bool"}[type(base)])

    # -- state ----------------------------------------------------------------

    def state(self, m: BoosterModel) -> ObjState:
        rng = self.rng
        counts = {c: rng.randint(1, self.b.max_objects) for c in self.classes}
        if len(self.classes) > 1:
            counts["B"] = max(counts["B"], min(self.b.max_objects, 2))
        for c in self.classes:
            for pd in self.props[c]:
                q = m.opposite(c, pd.name) if pd.opposite else None
                if q is not None and pd.kind == ONE and q.kind == ONE:
                    counts[pd.opposite.cls] = counts[c]
        s = ObjState.empty(m)
        objs: Dict[str, List[Obj]] = {}
        for c in self.classes:
            objs[c] = []
            for _ in range(counts[c]):
                s, o = s.add_object(c)
                objs[c].append(o)
        done = set()
        for c in self.classes:
            for pd in self.props[c]:
                if pd.opposite is None:
                    for o in objs[c]:
                        s = s.set(o, pd.name, self.prim_value(pd, objs))
                elif (pd.opposite.cls, pd.opposite.prop) not in done:
                    done.add((c, pd.name))
                    s = self.links(s, c, pd, m.opposite(c, pd.name), objs)
        return s

    def prim_value(self, pd: PropertyDecl, objs):
        rng = self.rng
        if pd.kind == SET:
            dom = self.domain(pd.target)
            return frozenset(rng.sample(dom, rng.randint(0, min(self.b.max_coll, len(dom)))))
        if pd.kind == SEQ:
            return tuple(self.value(pd.target, objs) for _ in range(rng.randint(0, self.b.max_coll)))
        if pd.kind == OPTIONAL and rng.random() < 0.3:
            return None
        return self.value(pd.target, objs)

    def links(self, s: ObjState, c1: str, p1: PropertyDecl, p2: PropertyDecl, objs) -> ObjState:
        rng = self.rng
        c2 = p1.opposite.cls
        As, Bs = list(objs[c1]), list(objs[c2])
        cap = lambda k: 1 if k in (ONE, OPTIONAL) else self.b.max_coll
        deg1, deg2 = Counter(), Counter()
        pairs: List[Tuple[Obj, Obj]] = []
        rng.shuffle(As)
        for a in As:
            if p1.kind == ONE:
                want = 1
            elif p1.kind == OPTIONAL:
                want = rng.randint(0, 1)
            else:
                want = rng.randint(0, cap(p1.kind))
            cands = [b for b in Bs if deg2[b] < cap(p2.kind)]
            rng.shuffle(cands)
            for b in cands[:want]:
                pairs.append((a, b))
                deg1[a] += 1
                deg2[b] += 1
            if p1.kind == ONE and deg1[a] == 0:
                raise _Retry()
        for b in Bs:
            if p2.kind == ONE and deg2[b] == 0:
                cands = [a for a in As if deg1[a] < cap(p1.kind)]
                if not cands:
                    raise _Retry()
                a = rng.choice(cands)
                pairs.append((a, b))
                deg1[a] += 1
                deg2[b] += 1
        rng.shuffle(pairs)
        for a in objs[c1]:
            mine = [b for x, b in pairs if x == a]
            s = s.set(a, p1.name, _pack(p1.kind, mine))
        for b in objs[c2]:
            mine = [a for a, y in pairs if y == b]
            s = s.set(b, p2.name, _pack(p2.kind, mine))
        return s


def _pack(kind: str, items: list):
    if kind == SET:
        return frozenset(items)
    if kind == SEQ:
        return tuple(items)
    return items[0] if items else None


def feasible_cells(bounds: Bounds) -> List[int]:
    if bounds.max_classes < 2:
        return [1] if bounds.max_props < 2 else list(PRIMITIVE_CELLS)
    return list(CELL_LIST)


def _core(gen: _Gen, cell: int, owner: Tuple[str, ...], in_loop: bool):
    """Declare the properties a cell needs; return (assignments, state fixups)."""
    rng = gen.rng
    kind, opp, shape = CELL_OF_ID[cell]
    this_only = not in_loop
    if cell == 1:
        bases = [IntBase(), StrBase(), BoolBase(), SetBase("Color")]
        if len(gen.classes) > 1 and this_only:
            bases.append(ClassBase("B"))
        base = rng.choice(bases)
        k = rng.choice([ONE, OPTIONAL])
        f = gen.add_prim("A", k, base)
        r = rng.random()
        if k == OPTIONAL and r < 0.2:
            src = g.Undefined()
        elif isinstance(base, ClassBase) or (r < 0.4 and this_only and not isinstance(base, BoolBase)):
            name = gen.name("v") + "?"
            gen.decls.append(_decl(name, gen.type_expr(base)))
            gen.io[name] = ("value", base)
            src = _ref(name)
        elif isinstance(base, IntBase) and k == ONE and r < 0.7:
            src = g.Binary("+", _ref(*owner, f), g.Lit(rng.randint(1, 3)))
        else:
            src = gen.lit(base)
        return [_assign(owner, f, src)]
    if cell in (2, 3):
        base = gen.rand_base(False)
        f = gen.add_prim("A", SET, base)
        if rng.random() < 0.5 or not gen.room("A"):
            name = gen.name("xs") + "?"
            gen.decls.append(g.Binary(":", _ref(name), g.SetOf(_type_name(base))))
            gen.io[name] = ("set", base)
            other = _ref(name)
        else:
            t = gen.add_prim("A", SET, base)
            other = _ref(*owner, t)
        src = g.Union_(_ref(*owner, f), other) if cell == 2 else other
        return [_assign(owner, f, src)]
    if cell in (4, 5):
        base = gen.rand_base(False)
        f = gen.add_prim("A", SEQ, base)
        use_path = gen.room("A") and rng.random() < 0.5
        if use_path:
            t = gen.add_prim("A", SEQ, base)
            gen.fixups.append(("long", t))
        if cell == 4:
            if use_path:
                return [_assign(owner, f, g.Concat(_ref(*owner, f), _ref(*owner, t)))]
            gen.fixups.append(("nonempty", f))
            idx = ("index", f) if this_only and rng.random() < 0.7 else None
            i = g.Lit(1) if idx is None else g.Lit(0)  # patched once the state is known
            if this_only and idx is None and rng.random() < 0.5:
                i = g.Binary("+", g.Card(_ref(*owner, f)), g.Lit(1))
            a = _assign(owner, f, g.Ins(_ref(*owner, f), i, gen.lit(base)))
            if idx is not None:
                gen.fixups.append(("pick_index", f))
            return [a]
        if use_path:
            return [_assign(owner, f, _ref(*owner, t))]
        items = tuple(gen.lit(base) for _ in range(rng.randint(0, gen.b.max_coll)))
        return [_assign(owner, f, g.SeqDisplay(items))]
    # associations between A (owner = this) and B
    p, q = gen.add_assoc("A", kind, "B", opp)
    if shape == "overwrite":
        if kind == OPTIONAL and rng.random() < 0.2:
            return [_assign(owner, p, g.Undefined())]
        name = gen.name("b") + "?"
        gen.decls.append(_decl(name, g.Extent("B")))
        gen.io[name] = ("steal", p, q)
        return [_assign(owner, p, _ref(name))]
    if kind == SET:
        if rng.random() < 0.2:
            return [_assign(owner, p, g.Union_(_ref(*owner, p), g.Extent("B")))]
        name = gen.name("bs") + "?"
        gen.decls.append(g.Binary(":", _ref(name), g.SetOf("B")))
        gen.io[name] = ("steal_set", p, q)
        return [_assign(owner, p, g.Union_(_ref(*owner, p), _ref(name)))]
    name = gen.name("b") + "?"
    gen.decls.append(_decl(name, g.Extent("B")))
    gen.io[name] = ("fresh_elem", p, q)
    if rng.random() < 0.3:
        i = g.Binary("+", g.Card(_ref(*owner, p)), g.Lit(1))
    else:
        i = g.Lit(0)
        gen.fixups.append(("pick_index", p))
    return [_assign(owner, p, g.Ins(_ref(*owner, p), i, _ref(name)))]


def _type_name(base) -> str:
    if isinstance(base, SetBase):
        return base.name
    return {IntBase: "Int", StrBase: "String", BoolBase: "Bool"}[type(base)]


def _true_false_guard(gen: _Gen, truth: bool) -> g.Expression:
    rng = gen.rng
    menu = [
        (g.Binary(">", g.Card(g.Extent("A")), g.Lit(0)), g.Binary(">", g.Card(g.Extent("A")), g.Lit(100))),
        (g.Binary(":", _ref("this"), g.Extent("A")),
         g.Unary("not", g.Binary(":", _ref("this"), g.Extent("A")))),
        (g.Binary("<=", g.Card(g.Extent("A")), g.Lit(gen.b.max_objects)),
         g.Binary("=", g.Card(g.Extent("A")), g.Lit(0))),
    ]
    t, f = rng.choice(menu)
    return t if truth else f


def _patch_indexes(a: g.Substitution, fills: Dict[str, int]) -> g.Substitution:
    """Replace placeholder insertion index 0 with the chosen position."""
    if isinstance(a, g.Assign) and isinstance(a.source, g.Ins) and a.source.index == g.Lit(0):
        prop = a.target.segments[-1].name
        return g.Assign(a.target, g.Ins(a.source.seq, g.Lit(fills[prop]), a.source.elem))
    if isinstance(a, (g.Par, g.Seq, g.Choice)):
        return type(a)(_patch_indexes(a.left, fills), _patch_indexes(a.right, fills))
    if isinstance(a, g.Guard):
        return g.Guard(a.cond, _patch_indexes(a.body, fills))
    if isinstance(a, (g.All, g.Any_)):
        return type(a)(a.var, a.range, _patch_indexes(a.body, fills))
    return a


def _build(seed: int, attempt: int, bounds: Bounds, cell: int, violate_guard: bool,
           wrapper: Optional[str]) -> Case:
    gen = _Gen(seed, attempt, bounds, cell, violate_guard)
    rng = gen.rng
    n_classes = 1 if cell in PRIMITIVE_CELLS and bounds.max_classes == 1 else \
        rng.randint(2 if cell not in PRIMITIVE_CELLS or rng.random() < 0.6 else 1, max(2, bounds.max_classes))
    n_classes = min(n_classes, max(1, bounds.max_classes))
    if cell not in PRIMITIVE_CELLS:
        n_classes = max(2, n_classes)
    gen.classes = ["A", "B", "C", "D"][:n_classes]
    gen.props = {c: [] for c in gen.classes}

    if wrapper is None:
        options = ["plain", "guard", "par", "choice"]
        if cell in PRIMITIVE_CELLS:
            options += ["all", "any"]
        if cell in (6, 7, 8, 9, 10, 15, 16, 23):
            options += ["created", "created"]
        wrapper = rng.choice(options)
    if violate_guard:
        wrapper = "guard"
    minimal = bounds.max_props < 2
    if minimal and wrapper in ("par", "choice"):
        wrapper = "plain"

    loop = wrapper in ("all", "any")
    owner: Tuple[str, ...] = ("v",) if loop else ()
    created = None
    if wrapper == "created":
        body_parts = _created(gen, cell)
        if body_parts is None:
            raise _Retry()
        assigns, created = body_parts
    else:
        assigns = _core(gen, cell, owner, loop)
    spare = None
    if wrapper in ("par", "choice"):
        spare = gen.add_prim("A", ONE, IntBase())
    if not minimal:
        gen.extras()

    core: g.Substitution = g.par_of(assigns)
    if wrapper == "par":
        core = g.Par(core, _assign((), spare, g.Binary("+", _ref(spare), g.Lit(1))))
    elif wrapper in ("all", "any"):
        rng_expr = g.Extent("A")
        core = (g.All if wrapper == "all" else g.Any_)("v", rng_expr, core)
    elif wrapper == "choice":
        c1 = _true_false_guard(gen, rng.random() < 0.7)
        c2 = _true_false_guard(gen, rng.random() < 0.7)
        core = g.Choice(g.Guard(c1, core), g.Guard(c2, _assign((), spare, g.Lit(0))))
    conds = list(gen.decls)
    if wrapper == "guard":
        conds.append(_true_false_guard(gen, not violate_guard))
    prog = g.Guard(g.conj(*conds), core) if conds else core

    m = gen.model("op", prog)
    s = gen.state(m)
    s, io, fills = _inputs(gen, m, s, created)
    if fills:
        prog = _patch_indexes(prog, fills)
        m = gen.model("op", prog)
        s = _rebind(s, m)
    return Case(seed, cell, wrapper, m, "A", "op", s, io, violate_guard, bounds)


def _rebind(s: ObjState, m: BoosterModel) -> ObjState:
    return ObjState(m, s.extent, s.values)


def _created(gen: _Gen, cell: int):
    """Reserve-like program: create ``r!`` in B and link it to ``this``."""
    kind, opp, shape = CELL_OF_ID[cell]
    p, q = gen.add_assoc("A", kind, "B", opp)
    gen.decls.append(_decl("r!", g.Extent("B")))
    parts = []
    if gen.room("B") and gen.rng.random() < 0.7:
        base = gen.rand_base()
        f = gen.add_prim("B", ONE, base)
        parts.append(_assign(("r!",), f, gen.lit(base)))
    if shape == "overwrite":
        if opp in (ONE, OPTIONAL) and gen.rng.random() < 0.5:
            parts.append(_assign(("r!",), q, _ref("this")))
        parts.append(_assign((), p, _ref("r!")))
    else:
        if opp in (ONE, OPTIONAL) and gen.rng.random() < 0.7:
            parts.append(_assign(("r!",), q, _ref("this")))
        i = g.Binary("+", g.Card(_ref(p)), g.Lit(1))
        if gen.rng.random() < 0.4:
            i = g.Lit(0)
            gen.fixups.append(("pick_index", p))
        parts.append(_assign((), p, g.Ins(_ref(p), i, _ref("r!"))))
    return parts, "r!"


def _inputs(gen: _Gen, m: BoosterModel, s: ObjState, created):
    rng = gen.rng
    this = rng.choice(sorted(s.extent["A"]))
    for kind, prop in [f for f in gen.fixups if f[0] in ("long", "nonempty")]:
        pd = m.prop("A", prop)
        for o in sorted(s.extent["A"]):
            cur = s.get(o, prop)
            want = 2 if kind == "long" else 1
            if len(cur) < want:
                extra = tuple(gen.value(pd.target, {}) for _ in range(want - len(cur)))
                s = s.set(o, prop, cur + extra)
    io: Dict[str, object] = {"this?": this}
    for name, spec in gen.io.items():
        tag = spec[0]
        if tag == "value":
            base = spec[1]
            io[name] = gen.value(base, {c: sorted(s.extent[c]) for c in gen.classes})
        elif tag == "set":
            dom = gen.domain(spec[1])
            io[name] = frozenset(rng.sample(dom, rng.randint(1, min(len(dom), gen.b.max_coll))))
        elif tag == "steal":
            _, p, q = spec
            bs = sorted(s.extent["B"])
            mine = set(_elements(s.get(this, p)))
            stealable = [b for b in bs if b not in mine and s.get(b, q) not in (None, (), frozenset())]
            pool = stealable if stealable and rng.random() < 0.7 else bs
            io[name] = rng.choice(pool)
        elif tag == "steal_set":
            _, p, q = spec
            bs = sorted(s.extent["B"])
            k = rng.randint(1, min(len(bs), gen.b.max_coll))
            io[name] = frozenset(rng.sample(bs, k))
        elif tag == "fresh_elem":
            _, p, q = spec
            mine = set(s.get(this, p))
            free = [b for b in sorted(s.extent["B"]) if b not in mine]
            if not free:
                raise _Retry()
            linked = [b for b in free if s.get(b, q) not in (None, (), frozenset())]
            pool = linked if linked and rng.random() < 0.7 else free
            io[name] = rng.choice(pool)
    fills = {}
    for kind, prop in [f for f in gen.fixups if f[0] == "pick_index"]:
        n = len(s.get(this, prop))
        fills[prop] = rng.randint(1, n) if n > 0 and rng.random() < 0.8 else n + 1
    return s, io, fills


def _resolve_case(case: Case):
    c = case.model.cls(case.cls)
    return resolve_program(case.model, case.cls, case.op, c.operation(case.op))


def generate_case(seed: int, bounds: Bounds = Bounds(), violate_guard: bool = False,
                  cell: Optional[int] = None, wrapper: Optional[str] = None) -> Case:
    """Reproducible well-typed case; retried only when the GSL program itself fails."""
    cells = feasible_cells(bounds)
    cell = cells[seed % len(cells)] if cell is None else cell
    last = None
    for attempt in range(200):
        try:
            case = _build(seed, attempt, bounds, cell, violate_guard, wrapper)
        except _Retry:
            continue
        if check_state(case.state):
            continue
        ro = _resolve_case(case)
        try:
            results = eval_gsl(case.state, case.io, ro.obj)
        except EvalError as e:
            last = e
            continue
        if violate_guard and any(rs != case.state for rs, _ in results):
            continue
        if any(check_state(rs) for rs, _ in results):
            continue
        return case
    raise RuntimeError(f"could not generate a case for seed {seed} (cell {cell}): {last}")


# --------------------------------------------------------------------------
# Batch runs
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    verdicts: List[Tuple[Case, object]] = field(default_factory=list)
    coverage: Counter = field(default_factory=Counter)

    @property
    def violations(self) -> List[Tuple[Case, Violation]]:
        return [(c, v) for c, v in self.verdicts if isinstance(v, Violation)]

    def coverage_lines(self) -> List[str]:
        return [f"pattern {cid:>2} {CELL_OF_ID[cid]}: {self.coverage[cid]}" for cid in CELL_LIST]


def case_header(case: Case, mutations: Sequence[str] = (), guard_mode: str = "skip") -> str:
    kind, opp, shape = CELL_OF_ID[case.cell]
    b = case.bounds or Bounds()
    return (f"seed: {case.seed}\ncell: {case.cell}\npattern: {case.cell} ({kind}/{opp} {shape})\n"
            f"wrapper: {case.wrapper}\n"
            f"bounds: {b.max_classes},{b.max_props},{b.max_objects},{b.max_coll}\n"
            f"violate_guard: {case.violate_guard}\nmutations: {','.join(mutations)}\nguard_mode: {guard_mode}")


def run_case(case: Case, mutations: Sequence[str] = (), **kw):
    return check_simulation(case.model, case.cls, case.op, case.state, case.io, mutations, **kw)


def run_cases(seeds, bounds: Bounds = Bounds(), mutations: Sequence[str] = (),
              violate_guard: bool = False, stop_on_violation: bool = False) -> RunReport:
    rep = RunReport()
    for seed in seeds:
        case = generate_case(seed, bounds, violate_guard)
        v = run_case(case, mutations)
        rep.verdicts.append((case, v))
        rep.coverage.update(v.coverage)
        if stop_on_violation and isinstance(v, Violation):
            break
    return rep


def replay(report_text: str) -> object:
    """Re-run a case from the header of a serialized violation report."""
    fields = {}
    for line in report_text.splitlines():
        k, sep, v = line.partition(": ")
        if sep and k in ("seed", "cell", "wrapper", "bounds", "violate_guard", "mutations", "guard_mode"):
            fields.setdefault(k, v)
    bounds = Bounds(*map(int, fields["bounds"].split(","))) if "bounds" in fields else Bounds()
    # the wrapper is drawn from the seed, so it is checked rather than forced
    case = generate_case(int(fields["seed"]), bounds, fields.get("violate_guard") == "True",
                         cell=int(fields["cell"]))
    if "wrapper" in fields and case.wrapper != fields["wrapper"]:
        raise ValueError(f"replayed case has wrapper {case.wrapper}, report says {fields['wrapper']}")
    muts = [m for m in fields.get("mutations", "").split(",") if m]
    return run_case(case, muts, guard_mode=fields.get("guard_mode", "skip"))


# --------------------------------------------------------------------------
# Bundled fixture suite
# --------------------------------------------------------------------------


def hrs_fixture_cases() -> List[Tuple[str, BoosterModel, str, str, ObjState, Dict[str, object]]]:
    """Hand-built states for the bundled hotel model's ``reserve`` operation."""
    from . import fixture_text
    from .parser import parse_model

    m = parse_model(fixture_text("hrs.boo"))
    s = ObjState.empty(m)
    s, h = s.add_object("Hotel", limit=2)
    s, r1 = s.add_object("Room", hotel=h)
    s, r2 = s.add_object("Room", hotel=h)
    s = s.set(h, "rooms", frozenset([r1, r2]))
    empty = s
    s, x = s.add_object("Reservation", status="ok", host=h, room=r1, dates=frozenset(["d1"]))
    s, y = s.add_object("Reservation", status="ok", host=h, room=None)
    s = s.set(h, "reservations", (x, y)).set(r1, "reservations", (x,))
    busy = s
    s, a = s.add_object("Allocation")
    s, b = s.add_object("Allocation")
    full = s.set(h, "allocations", frozenset([a, b]))
    return [
        ("hrs-empty", m, "Hotel", "reserve", empty, {"this?": h, "m?": r1, "dates?": frozenset(["d1", "d2"])}),
        ("hrs-busy", m, "Hotel", "reserve", busy, {"this?": h, "m?": r1, "dates?": frozenset()}),
        ("hrs-other-room", m, "Hotel", "reserve", busy, {"this?": h, "m?": r2, "dates?": frozenset(["d3"])}),
        ("hrs-full", m, "Hotel", "reserve", full, {"this?": h, "m?": r2, "dates?": frozenset(["d2"])}),
    ]
