"""Path elaboration (Booster -> Object) and translation (Object -> Table)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import gsl as g
from .model import (
    BUILTIN_TYPES, ONE, OPTIONAL, SEQ,
    Base, BoolBase, BoosterModel, ClassBase, IdenProperty, IntBase, PropertyDecl,
    SetBase, StrBase,
)
from .tables import TableModel, derive_table_model, reflective_queries


class ResolveError(Exception):
    """Type error raised while elaborating a Booster-stage program."""


class UnknownAttribute(ResolveError):
    def __init__(self, cls: str, attr: str):
        self.cls = cls
        self.attr = attr
        super().__init__(f"unknown attribute {attr!r} of class {cls}")


@dataclass(frozen=True)
class Type:
    base: Optional[Base]  # None only for `undefined` and empty displays
    coll: Optional[str] = None  # None, "set" or "seq"
    optional: bool = False

    @property
    def single(self) -> bool:
        return self.coll is None

    def element(self) -> "Type":
        return Type(self.base)


INT = Type(IntBase())
STR = Type(StrBase())
BOOL = Type(BoolBase())
ANY = Type(None, None, True)


def prop_type(pd: PropertyDecl) -> Type:
    if pd.kind == OPTIONAL:
        return Type(pd.target, None, True)
    if pd.kind == ONE:
        return Type(pd.target)
    return Type(pd.target, pd.kind)


@dataclass
class TypingEnv:
    model: BoosterModel
    context: str
    locals: Dict[str, Type] = field(default_factory=dict)
    io: Dict[str, Type] = field(default_factory=dict)

    def __post_init__(self):
        if self.model.cls(self.context) is None:
            raise ResolveError(f"unknown context class {self.context}")

    def with_local(self, name: str, t: Type) -> "TypingEnv":
        return TypingEnv(self.model, self.context, {**self.locals, name: t}, self.io)


def _compatible(a: Type, b: Type) -> bool:
    if a.base is None or b.base is None:
        return a.coll == b.coll or a.base is None and a.coll is None or b.base is None and b.coll is None
    return a.base == b.base and a.coll == b.coll


# --------------------------------------------------------------------------
# Booster -> Object
# --------------------------------------------------------------------------


def resolve_bpath(env: TypingEnv, p: g.BPath) -> g.OPATH:
    return _resolve_bpath(env, p)[0]


def _resolve_bpath(env: TypingEnv, p: g.BPath) -> Tuple[g.OPATH, Type]:
    m = env.model
    head, rest = p.segments[0], p.segments[1:]
    for seg in rest:
        if seg.deco:
            raise ResolveError(f"decoration on inner segment {seg.full_name!r}")

    if head.deco:
        if head.full_name not in env.io:
            raise ResolveError(f"undeclared input/output {head.full_name}")
        t = env.io[head.full_name]
        op: g.OPATH = g.BaseOPath(g.IoRef(head.full_name, t.base))
    elif head.name == "this":
        t = Type(ClassBase(env.context))
        op = g.BaseOPath(g.ThisRef(ClassBase(env.context)))
    elif head.name in env.locals:
        t = env.locals[head.name]
        op = g.BaseOPath(g.VarRef(head.name, t.base))
    else:
        pd = m.prop(env.context, head.name)
        if pd is None:
            raise UnknownAttribute(env.context, head.name)
        iden = IdenProperty(env.context, head.name)
        if head.index is not None:
            idx = _index(env, pd, head.index)
            t = Type(pd.target)
            op = g.BaseOPath(g.SCRef(iden, idx, pd.target))
        else:
            t = prop_type(pd)
            op = g.RecOPath(g.BaseOPath(g.ThisRef(ClassBase(env.context))), g.EntityTarget(iden))
        head = None
    if head is not None and head.index is not None:
        raise ResolveError(f"cannot index {head.full_name!r}")

    for seg in rest:
        if not isinstance(t.base, ClassBase):
            raise ResolveError(f"navigation through a non-class-valued value at {seg.name!r}")
        if not t.single:
            raise ResolveError(f"navigation through a collection-valued value at {seg.name!r}")
        cls = t.base.name
        pd = m.prop(cls, seg.name)
        if pd is None:
            raise UnknownAttribute(cls, seg.name)
        iden = IdenProperty(cls, seg.name)
        if seg.index is not None:
            op = g.RecOPath(op, g.SCTarget(iden, _index(env, pd, seg.index)))
            t = Type(pd.target)
        else:
            op = g.RecOPath(op, g.EntityTarget(iden))
            t = prop_type(pd)
    return op, t


def _index(env: TypingEnv, pd: PropertyDecl, e: g.Expression) -> g.Expression:
    if pd.kind != SEQ:
        raise ResolveError(f"indexing non-seq property {pd.name!r}")
    idx, it = resolve_expr(env, e)
    if it != INT:
        raise ResolveError(f"index of {pd.name!r} is not an integer")
    return idx


def _type_of_name(m: BoosterModel, name: str) -> Optional[Base]:
    if name in BUILTIN_TYPES:
        return BUILTIN_TYPES[name]
    if m.value_set(name) is not None:
        return SetBase(name)
    if m.cls(name) is not None:
        return ClassBase(name)
    return None


def resolve_expr(env: TypingEnv, e: g.Expression) -> Tuple[g.Expression, Type]:
    """Elaborate a Booster-stage expression, returning it with its type."""
    m = env.model
    if isinstance(e, g.Lit):
        if isinstance(e.value, bool):
            return e, BOOL
        return e, INT if isinstance(e.value, int) else STR
    if isinstance(e, g.EnumLit):
        return e, Type(SetBase(e.set_name))
    if isinstance(e, g.Undefined):
        return e, ANY
    if isinstance(e, g.PathExpr):
        p = e.path
        if not isinstance(p, g.BPath):
            return e, path_type(env, p)
        seg = p.segments[0]
        if len(p.segments) == 1 and not seg.deco and seg.index is None and seg.name != "this" \
                and seg.name not in env.locals and m.prop(env.context, seg.name) is None:
            set_name = m.enum_member(seg.name)
            if set_name is not None:
                return g.EnumLit(set_name, seg.name), Type(SetBase(set_name))
        op, t = _resolve_bpath(env, p)
        return g.PathExpr(g.OPath(op)), t
    if isinstance(e, g.Unary):
        x, t = resolve_expr(env, e.operand)
        want = BOOL if e.op == "not" else INT
        if t != want:
            raise ResolveError(f"operand of {e.op!r} has the wrong type")
        return g.Unary(e.op, x), want
    if isinstance(e, g.Binary):
        l, lt = resolve_expr(env, e.left)
        if e.op in g.MEMBER_OPS and (isinstance(e.right, (g.SetOf, g.SeqOf, g.TypeName))
                                     or (is_io_decl(e) and _names_type(m, e.right))):
            # typing declaration such as `dates? : set(Date)`
            r, rt = e.right, _decl_type(m, e.right)
            return g.Binary(e.op, l, r), BOOL
        r, rt = resolve_expr(env, e.right)
        if e.op in g.ARITH_OPS:
            if lt != INT or rt != INT:
                raise ResolveError(f"arithmetic {e.op!r} on non-integers")
            return g.Binary(e.op, l, r), INT
        if e.op in g.BOOL_OPS:
            if lt != BOOL or rt != BOOL:
                raise ResolveError(f"boolean {e.op!r} on non-booleans")
            return g.Binary(e.op, l, r), BOOL
        if e.op in g.MEMBER_OPS:
            if rt.coll is None or not lt.single or (rt.base is not None and lt.base != rt.base):
                raise ResolveError("membership test between incompatible types")
            return g.Binary(e.op, l, r), BOOL
        if e.op in ("=", "/="):
            if not (_compatible(lt, rt) or lt.base is None or rt.base is None):
                raise ResolveError("equality between incompatible types")
            return g.Binary(e.op, l, r), BOOL
        if lt != INT or rt != INT:
            raise ResolveError(f"ordering {e.op!r} on non-integers")
        return g.Binary(e.op, l, r), BOOL
    if isinstance(e, g.Card):
        x, t = resolve_expr(env, e.operand)
        if t.coll is None:
            raise ResolveError("cardinality of a non-collection")
        return g.Card(x), INT
    if isinstance(e, (g.Union_, g.Concat)):
        want = "set" if isinstance(e, g.Union_) else "seq"
        l, lt = resolve_expr(env, e.left)
        r, rt = resolve_expr(env, e.right)
        if lt.coll != want or rt.coll != want or not _compatible(lt, rt):
            raise ResolveError(f"{'union' if want == 'set' else 'concatenation'} of incompatible values")
        return type(e)(l, r), Type(lt.base or rt.base, want)
    if isinstance(e, g.SeqDisplay):
        items, base = [], None
        for it in e.items:
            x, t = resolve_expr(env, it)
            if not t.single or (base is not None and t.base != base):
                raise ResolveError("ill-typed sequence display")
            base = t.base
            items.append(x)
        return g.SeqDisplay(tuple(items)), Type(base, "seq")
    if isinstance(e, g.Ins):
        s, st = resolve_expr(env, e.seq)
        i, it = resolve_expr(env, e.index)
        v, vt = resolve_expr(env, e.elem)
        if st.coll != "seq" or it != INT or not vt.single or (st.base is not None and vt.base != st.base):
            raise ResolveError("ill-typed ins(...)")
        return g.Ins(s, i, v), Type(st.base or vt.base, "seq")
    if isinstance(e, g.Extent):
        if m.cls(e.cls) is None:
            raise ResolveError(f"unknown class {e.cls}")
        return e, Type(ClassBase(e.cls), "set")
    if isinstance(e, g.SetOf):
        if m.value_set(e.name) is None:
            raise ResolveError(f"unknown value-set {e.name}")
        return e, Type(SetBase(e.name), "set")
    raise ResolveError(f"unsupported expression {type(e).__name__}")


def _decl_type(m: BoosterModel, rhs: g.Expression) -> Type:
    if isinstance(rhs, g.Extent):
        if m.cls(rhs.cls) is None:
            raise ResolveError(f"unknown class {rhs.cls}")
        return Type(ClassBase(rhs.cls))
    if isinstance(rhs, (g.SetOf, g.SeqOf)):
        base = _type_of_name(m, rhs.name)
        if base is None:
            raise ResolveError(f"unknown type {rhs.name}")
        return Type(base, "set" if isinstance(rhs, g.SetOf) else "seq")
    if isinstance(rhs, (g.PathExpr, g.TypeName)):
        name = rhs.name if isinstance(rhs, g.TypeName) else None
        if name is None and isinstance(rhs.path, g.BPath) and len(rhs.path.segments) == 1:
            seg = rhs.path.segments[0]
            if not seg.deco and seg.index is None:
                name = seg.name
        base = _type_of_name(m, name) if name else None
        if base is not None:
            return Type(base)
    raise ResolveError("input/output declared with an unsupported type")


def _names_type(m: BoosterModel, rhs: g.Expression) -> bool:
    if not (isinstance(rhs, g.PathExpr) and isinstance(rhs.path, g.BPath) and len(rhs.path.segments) == 1):
        return False
    seg = rhs.path.segments[0]
    return not seg.deco and seg.index is None and _type_of_name(m, seg.name) is not None


def is_io_decl(e: g.Expression) -> bool:
    """True for a guard conjunct ``v? : T`` / ``v! : T`` typing an io name."""
    if not (isinstance(e, g.Binary) and e.op == ":" and isinstance(e.left, g.PathExpr)):
        return False
    p = e.left.path
    if isinstance(p, g.BPath):
        return len(p.segments) == 1 and bool(p.segments[0].deco) and p.segments[0].index is None
    if isinstance(p, g.OPath):
        return isinstance(p.opath, g.BaseOPath) and isinstance(p.opath.start, g.IoRef)
    if isinstance(p, g.TPath):
        return isinstance(p.tpath, g.BaseTPath) and isinstance(p.tpath.start, g.IoRef)
    return False


def io_decl_name(e: g.Binary) -> str:
    p = e.left.path
    if isinstance(p, g.BPath):
        return p.segments[0].full_name
    return g.path_start(p).name


def path_type(env: TypingEnv, p) -> Type:
    """Type of an already elaborated (Object or Table stage) path."""
    m = env.model
    start = g.path_start(p)
    if isinstance(start, g.ThisRef):
        t = Type(start.base)
    elif isinstance(start, g.IoRef):
        t = env.io[start.name]
    elif isinstance(start, g.VarRef):
        t = env.locals[start.name]
    else:
        t = Type(start.base)
    for step in g.path_steps(p):
        pd = m.prop(step.prop.cls, step.prop.prop)
        if isinstance(step, (g.SCTarget, g.SeqTCAccess)):
            t = Type(pd.target)
        else:
            t = prop_type(pd)
    return t


@dataclass
class ResolvedOperation:
    cls: str
    name: str
    booster: g.Substitution
    obj: g.Substitution
    tab: g.Substitution
    env: TypingEnv
    inputs: List[str]
    outputs: List[str]
    created: Dict[str, str]  # output name -> class of the new object


def collect_io(model: BoosterModel, s: g.Substitution) -> Tuple[Dict[str, Type], List[str], List[str], Dict[str, str]]:
    """Io declarations of a Booster-stage program, plus first-use order."""
    io: Dict[str, Type] = {}
    created: Dict[str, str] = {}
    order: List[str] = []
    for n in g.walk(s):
        if isinstance(n, g.Guard):
            for c in g.conjuncts(n.cond):
                if is_io_decl(c):
                    name = io_decl_name(c)
                    t = _decl_type(model, c.right)
                    if name in io and io[name] != t:
                        raise ResolveError(f"conflicting declarations of {name}")
                    io[name] = t
                    if name.endswith("!"):
                        if not isinstance(c.right, g.Extent):
                            raise ResolveError(f"output {name} must be declared as a new object")
                        created[name] = c.right.cls
        if isinstance(n, g.Segment) and n.deco and n.full_name not in order:
            order.append(n.full_name)
    for name in order:
        if name not in io:
            raise ResolveError(f"undeclared input/output {name}")
    inputs = [n for n in order if n.endswith("?")]
    outputs = [n for n in order if n.endswith("!")]
    return io, inputs, outputs, created


def resolve_substitution(env: TypingEnv, s: g.Substitution) -> g.Substitution:
    if isinstance(s, g.Skip):
        return s
    if isinstance(s, g.Assign):
        if not isinstance(s.target, g.BPath):
            raise ResolveError("assignment target is not a Booster path")
        op, tt = _resolve_bpath(env, s.target)
        if not isinstance(op, g.RecOPath) or not isinstance(op.target, g.EntityTarget):
            raise ResolveError(f"cannot assign to {g.print_path(s.target)}")
        src, st = resolve_expr(env, s.source)
        if isinstance(src, g.Undefined):
            if not tt.optional:
                raise ResolveError(f"undefined assigned to non-optional {g.print_path(s.target)}")
        elif not _compatible(tt, st) or (st.base is None and st.coll != tt.coll):
            raise ResolveError(f"type mismatch in assignment to {g.print_path(s.target)}")
        return g.Assign(g.OPath(op), src)
    if isinstance(s, g.Guard):
        c, ct = resolve_expr(env, s.cond)
        if ct != BOOL:
            raise ResolveError("guard is not a predicate")
        return g.Guard(c, resolve_substitution(env, s.body))
    if isinstance(s, (g.Par, g.Seq, g.Choice)):
        return type(s)(resolve_substitution(env, s.left), resolve_substitution(env, s.right))
    if isinstance(s, (g.All, g.Any_)):
        if s.var in env.locals or s.var == "this" or env.model.prop(env.context, s.var) is not None:
            raise ResolveError(f"bound variable {s.var!r} is not fresh")
        r, rt = resolve_expr(env, s.range)
        if rt.coll is None:
            raise ResolveError(f"range of {s.var!r} is not a collection")
        body = resolve_substitution(env.with_local(s.var, rt.element()), s.body)
        return type(s)(s.var, r, body)
    raise ResolveError(f"not a substitution: {s!r}")


def resolve_operation(model: BoosterModel, cls: str, op_name: str) -> ResolvedOperation:
    c = model.cls(cls)
    if c is None:
        raise ResolveError(f"unknown class {cls}")
    body = c.operation(op_name)
    if body is None:
        raise ResolveError(f"class {cls} has no operation {op_name}")
    return resolve_program(model, cls, op_name, body)


def resolve_program(model: BoosterModel, cls: str, op_name: str, body: g.Substitution) -> ResolvedOperation:
    io, inputs, outputs, created = collect_io(model, body)
    env = TypingEnv(model, cls, {}, io)
    obj = resolve_substitution(env, body)
    tab = obj_to_tab_subst(model, obj)
    return ResolvedOperation(cls, op_name, body, obj, tab, env, inputs, outputs, created)


# --------------------------------------------------------------------------
# Object -> Table
# --------------------------------------------------------------------------

_TM_CACHE: Dict[int, Tuple[BoosterModel, TableModel]] = {}


def table_model_for(om: BoosterModel) -> TableModel:
    hit = _TM_CACHE.get(id(om))
    if hit is not None and hit[0] is om:
        return hit[1]
    tm = derive_table_model(om)
    if len(_TM_CACHE) > 64:
        _TM_CACHE.clear()
    _TM_CACHE[id(om)] = (om, tm)
    return tm


def _tab_start(om: BoosterModel, start: g.RefStart) -> g.RefStart:
    if isinstance(start, g.SCRef):
        return g.SCRef(start.prop, obj_to_tab_expr(om, start.index), start.base)
    return start


def obj_to_tab_path(om: BoosterModel, p: g.OPATH) -> g.TPATH:
    if isinstance(p, g.OPath):
        p = p.opath
    if isinstance(p, g.BaseOPath):
        return g.BaseTPath(_tab_start(om, p.start))
    tp = obj_to_tab_path(om, p.prefix)
    tar = p.target
    if isinstance(tar, g.SCTarget):
        return g.RecTPath(tp, g.SeqTCAccess(tar.prop, obj_to_tab_expr(om, tar.index)))
    rq = reflective_queries(table_model_for(om))
    key = (tar.prop.cls, tar.prop.prop)
    if key in rq.bi_assoc:
        return g.RecTPath(tp, g.AssocTAccess(tar.prop))
    if key in rq.class_tables:
        return g.RecTPath(tp, g.ClassTAccess(tar.prop))
    if key in rq.set_tables:
        return g.RecTPath(tp, g.SetTAccess(tar.prop))
    if key in rq.seq_tables:
        return g.RecTPath(tp, g.SeqTAccess(tar.prop))
    raise ResolveError(f"no storage for {tar.prop}")


def obj_to_tab_expr(om: BoosterModel, e: g.Expression) -> g.Expression:
    def conv(p):
        if isinstance(p, g.OPath):
            return g.TPath(obj_to_tab_path(om, p.opath))
        return p
    return g.map_paths(e, conv)


def obj_to_tab_subst(om: BoosterModel, s: g.Substitution) -> g.Substitution:
    return obj_to_tab_expr(om, s)
