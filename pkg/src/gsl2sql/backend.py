"""Compilation of Table-staged GSL programs into SQL statements and procedures."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from . import gsl as g
from . import sql as S
from .model import ONE, OPTIONAL, SEQ, SET, BoosterModel, ClassBase, IdenProperty
from .paths import ResolvedOperation, Type, is_io_decl, io_decl_name, resolve_operation, table_model_for
from .tables import INTEGER, TableModel, sql_type

THIS = "this?"

# (target kind, opposite kind, update shape) -> pattern id; only 23 follows the
# published numbering, the rest are numbered in matrix order.
CELLS: Dict[Tuple[str, str, str], int] = {
    ("scalar", "none", "overwrite"): 1,
    ("set", "none", "insert"): 2,
    ("set", "none", "overwrite"): 3,
    ("seq", "none", "insert"): 4,
    ("seq", "none", "overwrite"): 5,
    ("optional", "optional", "overwrite"): 6,
    ("optional", "set", "overwrite"): 7,
    ("optional", "seq", "overwrite"): 8,
    ("one", "set", "overwrite"): 9,
    ("one", "seq", "overwrite"): 10,
    ("set", "optional", "insert"): 11,
    ("set", "one", "insert"): 12,
    ("set", "set", "insert"): 13,
    ("set", "seq", "insert"): 14,
    ("seq", "one", "insert"): 15,
    ("seq", "set", "insert"): 16,
    ("seq", "optional", "insert"): 23,
}
CELL_OF_ID = {v: k for k, v in CELLS.items()}

MUTATIONS = (
    "drop_index_shift",
    "swap_pattern23",
    "skip_opposite_write",
    "loop_variant_off_by_one",
    "omit_loop_cache_refresh",
)


class CompileError(Exception):
    pass


class UnimplementedPattern(CompileError):
    def __init__(self, cell: Tuple[str, str, str], where: str = ""):
        self.cell = cell
        super().__init__(f"unimplemented assignment pattern {cell}" + (f" at {where}" if where else ""))


@dataclass
class CompileCtx:
    tm: TableModel
    context: str
    io_types: Dict[str, Type] = field(default_factory=dict)
    created: Dict[str, str] = field(default_factory=dict)
    mutations: FrozenSet[str] = frozenset()
    guard_mode: str = "skip"
    declared_cache_vars: Set[str] = field(default_factory=set)
    var_decls: List[S.DeclareVar] = field(default_factory=list)
    cursor_decls: List[S.DeclareCursor] = field(default_factory=list)
    counter: int = 0
    # GSL bound variable -> (SQL variable, element type)
    locals: Dict[str, Tuple[str, Type]] = field(default_factory=dict)
    # cached path -> ("var", name, "") or ("table", name, column)
    cache: Dict[object, Tuple[str, str, str]] = field(default_factory=dict)
    cache_names: Dict[Tuple[object, str], str] = field(default_factory=dict)
    used_names: Set[str] = field(default_factory=set)
    loop_depth: int = 0
    dropped: Set[int] = field(default_factory=set)
    table_writes: Counter = field(default_factory=Counter)
    coverage: List[int] = field(default_factory=list)

    def __post_init__(self):
        for t in self.tm.all_tables():
            self.used_names.add(t.name)
            self.used_names.update(t.column_names)
        self.used_names.add(THIS)
        self.used_names.update(self.io_types)

    @property
    def model(self) -> BoosterModel:
        return self.tm.source

    def fresh(self, base: str) -> str:
        name = base
        while name in self.used_names:
            self.counter += 1
            name = f"{base}_{self.counter}"
        self.used_names.add(name)
        return name

    def declare(self, name: str, typ: str):
        if name not in self.declared_cache_vars:
            self.declared_cache_vars.add(name)
            self.var_decls.append(S.DeclareVar(name, typ))

    def mutated(self, name: str) -> bool:
        return name in self.mutations


def _default_ctx(tm: TableModel) -> CompileCtx:
    return CompileCtx(tm, tm.source.classes[0].name if tm.source.classes else "")


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


def _tpath(p) -> g.TPATH:
    if isinstance(p, g.TPath):
        return p.tpath
    if isinstance(p, (g.BaseTPath, g.RecTPath)):
        return p
    raise CompileError(f"expected a Table-stage path, got {type(p).__name__}")


def _steps(tp) -> int:
    n = 0
    while isinstance(tp, g.RecTPath):
        n += 1
        tp = tp.prefix
    return n


def _is_io_collection(ctx: CompileCtx, start) -> bool:
    if not isinstance(start, g.IoRef):
        return False
    t = ctx.io_types.get(start.name)
    return t is not None and t.coll is not None


def _start_sql(ctx: CompileCtx, start) -> S.SqlExpr:
    if isinstance(start, g.ThisRef):
        return S.Var(THIS)
    if isinstance(start, g.IoRef):
        if _is_io_collection(ctx, start):
            raise CompileError(f"collection input {start.name} used as a single value")
        return S.Var(start.name)
    if isinstance(start, g.VarRef):
        name = ctx.locals.get(start.name, (start.name, None))[0]
        return S.Var(name)
    if isinstance(start, g.SCRef):
        access = g.SeqTCAccess(start.prop, start.index)
        sel, _ = _step_select(ctx, S.Var(THIS), access)
        return sel
    raise CompileError(f"bad path start {start!r}")


def _step_select(ctx: CompileCtx, x: S.SqlExpr, access) -> Tuple[S.Select, bool]:
    """Query for one navigation step from object ``x``; flag tells single-valuedness."""
    c, p = access.prop.cls, access.prop.prop
    pd = ctx.model.prop(c, p)
    st = ctx.tm.storage_of(c, p)
    if st.kind == "class":
        return S.Select((S.Col(p),), S.Table(c), S.eq(S.Col("oid"), x)), True
    where = S.eq(S.Col(st.owner_col), x)
    if isinstance(access, g.SeqTCAccess):
        if st.index_col is None:
            raise CompileError(f"indexing non-sequence {c}.{p}")
        where = S.and_(where, S.eq(S.Col(st.index_col), to_sql_expr_e(ctx.tm, access.index, ctx)))
        return S.Select((S.Col(st.value_col),), S.Table(st.table), where), True
    single = pd.kind in (ONE, OPTIONAL)
    order = (st.index_col,) if pd.kind == SEQ else ()
    return S.Select((S.Col(st.value_col),), S.Table(st.table), where, order), single


def _value_column(ctx: CompileCtx, access) -> str:
    st = ctx.tm.storage_of(access.prop.cls, access.prop.prop)
    return st.value_col


def path_scalar(ctx: CompileCtx, tp) -> S.SqlExpr:
    """SQL expression for a single-valued Table-stage path."""
    tp = _tpath(tp)
    hit = ctx.cache.get(tp)
    if hit is not None:
        if hit[0] != "var":
            raise CompileError("collection-valued path used as a single value")
        return S.Var(hit[1])
    if isinstance(tp, g.BaseTPath):
        return _start_sql(ctx, tp.start)
    sel, single = _step_select(ctx, path_scalar(ctx, tp.prefix), tp.access)
    if not single:
        raise CompileError("collection-valued path used as a single value")
    return sel


def path_rows(ctx: CompileCtx, tp) -> Tuple[S.Select, str]:
    """Query listing the elements of a collection-valued path, and its column."""
    tp = _tpath(tp)
    hit = ctx.cache.get(tp)
    if hit is not None:
        if hit[0] != "table":
            raise CompileError("single-valued path used as a collection")
        return S.Select((S.Col(hit[2]),), S.Table(hit[1]), S.TRUE), hit[2]
    if isinstance(tp, g.BaseTPath):
        if _is_io_collection(ctx, tp.start):
            return S.Select((S.Col("value"),), S.Table(tp.start.name), S.TRUE), "value"
        raise CompileError("single-valued reference used as a collection")
    sel, single = _step_select(ctx, path_scalar(ctx, tp.prefix), tp.access)
    if single:
        raise CompileError("single-valued path used as a collection")
    return sel, sel.columns[0].name


def _rows_of(ctx: CompileCtx, e: g.Expression) -> Tuple[S.Select, str]:
    if isinstance(e, g.PathExpr):
        return path_rows(ctx, e.path)
    if isinstance(e, g.Extent):
        return S.Select((S.Col("oid"),), S.Table(e.cls), S.TRUE, ("oid",)), "oid"
    raise CompileError(f"cannot enumerate {type(e).__name__} in SQL")


def _alias(e: g.Expression) -> str:
    if isinstance(e, g.PathExpr):
        tp = _tpath(e.path)
        if isinstance(tp, g.RecTPath):
            return tp.access.prop.prop
        start = tp.start
        return getattr(start, "name", "t").rstrip("?!")
    if isinstance(e, g.Extent):
        return e.cls
    return "t"


_CMP = {"=": "=", "/=": "<>", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def to_sql_expr_e(tm: TableModel, e: g.Expression, ctx: Optional[CompileCtx] = None) -> S.SqlExpr:
    ctx = ctx or _default_ctx(tm)
    if isinstance(e, g.Lit):
        return S.Lit(e.value)
    if isinstance(e, g.EnumLit):
        return S.Lit(e.member)
    if isinstance(e, g.Undefined):
        return S.Null()
    if isinstance(e, g.PathExpr):
        if isinstance(e.path, (g.BPath, g.OPath)):
            raise CompileError("expression is not Table-staged")
        return path_scalar(ctx, e.path)
    if isinstance(e, g.Unary):
        x = to_sql_expr_e(tm, e.operand, ctx)
        return S.Not(x) if e.op == "not" else S.Neg(x)
    if isinstance(e, g.Card):
        sel, _ = _rows_of(ctx, e.operand)
        return S.Select((S.Count(),), S.Derived(S.Select(sel.columns, sel.source, sel.where), _alias(e.operand)),
                        S.TRUE)
    if isinstance(e, g.Binary):
        op = e.op
        if op in ("&", "or"):
            return S.Bin("AND" if op == "&" else "OR",
                          to_sql_expr_e(tm, e.left, ctx), to_sql_expr_e(tm, e.right, ctx))
        if op == "=>":
            return S.Bin("OR", S.Not(to_sql_expr_e(tm, e.left, ctx)), to_sql_expr_e(tm, e.right, ctx))
        if is_io_decl(e):
            return S.TRUE
        if op in (":", "/:"):
            sel, _ = _rows_of(ctx, e.right)
            return S.In(to_sql_expr_e(tm, e.left, ctx), S.Select(sel.columns, sel.source, sel.where),
                        negated=op == "/:")
        if op in ("=", "/=") and (isinstance(e.right, g.Undefined) or isinstance(e.left, g.Undefined)):
            other = e.left if isinstance(e.right, g.Undefined) else e.right
            return S.IsNull(to_sql_expr_e(tm, other, ctx), negated=op == "/=")
        if op in _CMP:
            return S.Bin(_CMP[op], to_sql_expr_e(tm, e.left, ctx), to_sql_expr_e(tm, e.right, ctx))
        if op in g.ARITH_OPS:
            return S.Bin(op, to_sql_expr_e(tm, e.left, ctx), to_sql_expr_e(tm, e.right, ctx))
    raise CompileError(f"no SQL translation for {type(e).__name__} in expression position")


def to_sql_expr(tm: TableModel, p: g.Predicate, ctx: Optional[CompileCtx] = None) -> S.SqlExpr:
    return to_sql_expr_e(tm, p, ctx)


# --------------------------------------------------------------------------
# Assignment patterns
# --------------------------------------------------------------------------


def classify(ctx: CompileCtx, a: g.Assign) -> Tuple[str, str, str]:
    tp = _tpath(a.target)
    if not isinstance(tp, g.RecTPath) or isinstance(tp.access, g.SeqTCAccess):
        raise CompileError("assignment target must end in a property")
    c, p = tp.access.prop.cls, tp.access.prop.prop
    pd = ctx.model.prop(c, p)
    st = ctx.tm.storage_of(c, p)
    if st.kind == "class":
        kind, opp = "scalar", "none"
    else:
        kind = pd.kind
        opp = ctx.model.opposite(c, p).kind if pd.opposite is not None else "none"
    self_ref = g.PathExpr(a.target)
    src = a.source
    if isinstance(src, (g.Union_, g.Concat)) and src.left == self_ref:
        shape = "insert"
    elif isinstance(src, g.Ins) and src.seq == self_ref:
        shape = "insert"
    else:
        shape = "overwrite"
    return kind, opp, shape


def _owner(ctx: CompileCtx, tp: g.RecTPath) -> S.SqlExpr:
    return path_scalar(ctx, tp.prefix)


def _fresh_owner(ctx: CompileCtx, tp: g.RecTPath, table: str) -> bool:
    """Owner is an object created by this operation whose role is written once."""
    pre = tp.prefix
    return (isinstance(pre, g.BaseTPath) and isinstance(pre.start, g.IoRef)
            and pre.start.name in ctx.created and ctx.loop_depth == 0
            and ctx.table_writes[table] <= 1)


def _fresh_value(ctx: CompileCtx, y: g.Expression, table: str) -> bool:
    return (isinstance(y, g.PathExpr) and isinstance(_tpath(y.path), g.BaseTPath)
            and isinstance(_tpath(y.path).start, g.IoRef) and _tpath(y.path).start.name in ctx.created
            and ctx.loop_depth == 0 and ctx.table_writes[table] <= 1)


def _refresh_cache(ctx: CompileCtx, tp: g.RecTPath) -> Tuple[List[S.SqlStatement], str, str]:
    """(Re)materialize the current value of a collection path into a temp table."""
    name = _cache_name(ctx, tp, "refresh")
    sel, col = _uncached_rows(ctx, tp)
    return [S.DropTempTableIfExists(name), S.CreateTempTableAs(name, sel)], name, col


def _uncached_rows(ctx: CompileCtx, tp) -> Tuple[S.Select, str]:
    saved = ctx.cache.pop(tp, None)
    try:
        return path_rows(ctx, tp)
    finally:
        if saved is not None:
            ctx.cache[tp] = saved


def _count_of(table: str, col: str) -> S.SqlExpr:
    inner = S.Select((S.Col(col),), S.Table(table), S.TRUE)
    return S.Select((S.Count(),), S.Derived(inner, col), S.TRUE)


def _plus1(e: S.SqlExpr) -> S.SqlExpr:
    return S.Bin("+", e, S.Lit(1))


def _materialize(ctx: CompileCtx, e: g.Expression, base: str) -> Tuple[List[S.SqlStatement], str, str]:
    """Make ``e``'s elements enumerable by a cursor: (setup, table, column)."""
    if isinstance(e, g.PathExpr):
        tp = _tpath(e.path)
        if isinstance(tp, g.BaseTPath) and _is_io_collection(ctx, tp.start):
            return [], tp.start.name, "value"
        hit = ctx.cache.get(tp)
        if hit is not None and hit[0] == "table":
            return [], hit[1], hit[2]
    sel, col = _rows_of(ctx, e)
    name = ctx.fresh(base + "_source")
    return [S.DropTempTableIfExists(name), S.CreateTempTableAs(name, sel)], name, col


def _cursor_loop(ctx: CompileCtx, var_base: str, var_type: str, table: str,
                 body_fn: Callable[[str], List[S.SqlStatement]], order: Tuple[str, ...] = (),
                 var_name: Optional[str] = None) -> List[S.SqlStatement]:
    x = var_name or ctx.fresh(var_base)
    v = ctx.fresh(x + "_variant")
    c = ctx.fresh(x + "_cursor")
    ctx.declare(x, var_type)
    ctx.declare(v, INTEGER)
    ctx.cursor_decls.append(S.DeclareCursor(c, S.Select((), S.Table(table), S.TRUE, order)))
    ctx.loop_depth += 1
    try:
        body = body_fn(x)
    finally:
        ctx.loop_depth -= 1
    bound = 1 if ctx.mutated("loop_variant_off_by_one") else 0
    step = [S.FetchInto(c, x), S.SetVar(v, S.Bin("-", S.Var(v), S.Lit(1)))]
    return [
        S.OpenCursor(c), S.FetchInto(c, x),
        S.SelectInto((S.Count(),), (v,), S.Table(table), S.TRUE),
        S.While(S.Bin(">", S.Var(v), S.Lit(bound)), tuple(body) + tuple(step)),
        S.CloseCursor(c),
    ]


def _elem_type(ctx: CompileCtx, c: str, p: str) -> str:
    return sql_type(ctx.model.prop(c, p).target)


def trans_assign(ctx: CompileCtx, a: g.Assign) -> List[S.SqlStatement]:
    cell = classify(ctx, a)
    if cell not in CELLS:
        raise UnimplementedPattern(cell, g.print_substitution(a) if isinstance(a.target, g.BPath) else "")
    ctx.coverage.append(CELLS[cell])
    kind, opp, shape = cell
    tp = _tpath(a.target)
    c, p = tp.access.prop.cls, tp.access.prop.prop
    st = ctx.tm.storage_of(c, p)
    x = _owner(ctx, tp)

    if kind == "scalar":
        return [S.Update(c, ((p, to_sql_expr_e(ctx.tm, a.source, ctx)),), S.eq(S.Col("oid"), x))]

    if opp == "none":
        if kind == "set":
            return _set_assign(ctx, a, tp, st, x, shape)
        return _seq_assign(ctx, a, tp, st, x, shape)

    if shape == "overwrite":
        return _single_assoc_overwrite(ctx, a, tp, st, x, opp)
    if kind == "set":
        return _assoc_set_insert(ctx, a, tp, st, x, opp)
    return _assoc_seq_insert(ctx, a, tp, st, x, opp)


def _set_assign(ctx, a, tp, st, x, shape) -> List[S.SqlStatement]:
    c, p = tp.access.prop.cls, tp.access.prop.prop
    if shape == "insert":
        src = a.source.right
        setup, table, _ = _materialize(ctx, src, "x")
        check = not _fresh_owner(ctx, tp, st.table)

        def body(v):
            refresh, cache, col = _refresh_cache(ctx, tp)
            ins = [S.Insert(st.table, (st.owner_col, st.value_col), (x, S.Var(v)))]
            if check:
                ins = [S.IfThenElse(S.In(S.Var(v), S.Select((S.Col(col),), S.Table(cache), S.TRUE),
                                         negated=True), tuple(ins))]
            return ([] if ctx.mutated("omit_loop_cache_refresh") else refresh) + ins

        pre = []
        if ctx.mutated("omit_loop_cache_refresh"):
            pre = _refresh_cache(ctx, tp)[0]
        return setup + pre + _cursor_loop(ctx, "x", _elem_type(ctx, c, p), table, body)
    # overwrite: read the new value before clearing the old one
    setup, table, _ = _materialize(ctx, a.source, "x")

    def body(v):
        return [S.Insert(st.table, (st.owner_col, st.value_col), (x, S.Var(v)))]

    return setup + [S.Delete(st.table, S.eq(S.Col(st.owner_col), x))] + \
        _cursor_loop(ctx, "x", _elem_type(ctx, c, p), table, body)


def _append_loop(ctx, tp, st, x, table, elem_type) -> List[S.SqlStatement]:
    """Append every element of ``table`` to the primitive sequence at ``tp``."""
    pre = []
    if ctx.mutated("omit_loop_cache_refresh"):
        pre = _refresh_cache(ctx, tp)[0]

    def body(v):
        refresh, cache, col = _refresh_cache(ctx, tp)
        idx = _plus1(_count_of(cache, col))
        ins = S.Insert(st.table, (st.owner_col, st.value_col, st.index_col), (x, S.Var(v), idx))
        return ([] if ctx.mutated("omit_loop_cache_refresh") else refresh) + [ins]

    return pre + _cursor_loop(ctx, "x", elem_type, table, body)


def _seq_assign(ctx, a, tp, st, x, shape) -> List[S.SqlStatement]:
    c, p = tp.access.prop.cls, tp.access.prop.prop
    src = a.source
    if shape == "insert" and isinstance(src, g.Ins):
        i = to_sql_expr_e(ctx.tm, src.index, ctx)
        y = to_sql_expr_e(ctx.tm, src.elem, ctx)
        return _shift_then_insert(ctx, st, x, y, i)
    if shape == "insert":  # concatenation
        if not isinstance(src.right, g.PathExpr):
            raise CompileError("concatenation source must be a path")
        setup, table, _ = _materialize(ctx, src.right, "x")
        return setup + _append_loop(ctx, tp, st, x, table, _elem_type(ctx, c, p))
    clear = [S.Delete(st.table, S.eq(S.Col(st.owner_col), x))]
    if isinstance(src, g.SeqDisplay):
        vals = [to_sql_expr_e(ctx.tm, item, ctx) for item in src.items]
        return clear + [S.Insert(st.table, (st.owner_col, st.value_col, st.index_col), (x, v, S.Lit(k)))
                        for k, v in enumerate(vals, 1)]
    if not isinstance(src, g.PathExpr):
        raise CompileError("sequence overwrite source must be a path or a display")
    setup, table, _ = _materialize(ctx, src, "x")
    return setup + clear + _append_loop(ctx, tp, st, x, table, _elem_type(ctx, c, p))


def _shift_then_insert(ctx, st, x, y, i) -> List[S.SqlStatement]:
    """Open a gap at index ``i`` of owner ``x``'s sequence and put ``y`` there."""
    shift = S.Update(st.table, ((st.index_col, _plus1(S.Col(st.index_col))),),
                     S.and_(S.eq(S.Col(st.owner_col), x), S.Bin(">=", S.Col(st.index_col), i)))
    ins = S.Insert(st.table, (st.value_col, st.owner_col, st.index_col), (y, x, i))
    if ctx.mutated("drop_index_shift"):
        return [ins]
    if ctx.mutated("swap_pattern23"):
        return [ins, shift]
    return [shift, ins]


def _single_assoc_overwrite(ctx, a, tp, st, x, opp) -> List[S.SqlStatement]:
    t = st.table
    mine = S.Select((S.Col(st.value_col),), S.Table(t), S.eq(S.Col(st.owner_col), x))
    unlink = []
    if opp == "seq":
        # close the gap in the old partner's sequence
        my_index = S.Select((S.Col(st.opp_index_col),), S.Table(t), S.eq(S.Col(st.owner_col), x))
        unlink.append(S.Update(t, ((st.opp_index_col, S.Bin("-", S.Col(st.opp_index_col), S.Lit(1))),),
                               S.and_(S.eq(S.Col(st.value_col), mine),
                                      S.Bin(">", S.Col(st.opp_index_col), my_index))))
    unlink.append(S.Delete(t, S.eq(S.Col(st.owner_col), x)))
    if isinstance(a.source, g.Undefined):
        return unlink
    y = to_sql_expr_e(ctx.tm, a.source, ctx)
    link = list(unlink)
    if opp in (ONE, OPTIONAL) and not ctx.mutated("skip_opposite_write"):
        link.append(S.Delete(t, S.eq(S.Col(st.value_col), y)))
    cols, vals = [st.value_col, st.owner_col], [y, x]
    if opp == "seq":
        cols.append(st.opp_index_col)
        vals.append(_plus1(S.Select((S.Count(),), S.Table(t), S.eq(S.Col(st.value_col), y))))
    link.append(S.Insert(t, tuple(cols), tuple(vals)))
    return [S.IfThenElse(S.In(y, mine, negated=True), tuple(link))]


def _steal(ctx, st, y: S.SqlExpr, fresh: bool) -> List[S.SqlStatement]:
    """Detach ``y`` from its current partner when the opposite end is single-valued."""
    if fresh or ctx.mutated("skip_opposite_write"):
        return []
    t = st.table
    out = []
    if st.index_col is not None:
        partner = S.Select((S.Col(st.owner_col),), S.Table(t), S.eq(S.Col(st.value_col), y))
        pos = S.Select((S.Col(st.index_col),), S.Table(t), S.eq(S.Col(st.value_col), y))
        out.append(S.Update(t, ((st.index_col, S.Bin("-", S.Col(st.index_col), S.Lit(1))),),
                            S.and_(S.eq(S.Col(st.owner_col), partner), S.Bin(">", S.Col(st.index_col), pos))))
    out.append(S.Delete(t, S.eq(S.Col(st.value_col), y)))
    return out


def _assoc_set_insert(ctx, a, tp, st, x, opp) -> List[S.SqlStatement]:
    setup, table, _ = _materialize(ctx, a.source.right, "x")
    check = not _fresh_owner(ctx, tp, st.table)
    pre = []
    if ctx.mutated("omit_loop_cache_refresh") and check:
        pre = _refresh_cache(ctx, tp)[0]

    def body(v):
        y = S.Var(v)
        stmts: List[S.SqlStatement] = []
        if opp in (ONE, OPTIONAL):
            stmts += _steal(ctx, st, y, False)
        cols, vals = [st.value_col, st.owner_col], [y, x]
        if opp == SEQ:
            cols.append(st.opp_index_col)
            vals.append(_plus1(S.Select((S.Count(),), S.Table(st.table), S.eq(S.Col(st.value_col), y))))
        stmts.append(S.Insert(st.table, tuple(cols), tuple(vals)))
        if not check:
            return stmts
        refresh, cache, col = _refresh_cache(ctx, tp)
        guard = S.IfThenElse(S.In(y, S.Select((S.Col(col),), S.Table(cache), S.TRUE), negated=True),
                             tuple(stmts))
        return ([] if ctx.mutated("omit_loop_cache_refresh") else refresh) + [guard]

    return setup + pre + _cursor_loop(ctx, "x", INTEGER, table, body)


def _assoc_seq_insert(ctx, a, tp, st, x, opp) -> List[S.SqlStatement]:
    src = a.source
    if not isinstance(src, g.Ins):
        raise UnimplementedPattern(("seq", opp, "concat"))
    i = to_sql_expr_e(ctx.tm, src.index, ctx)
    y = to_sql_expr_e(ctx.tm, src.elem, ctx)
    out: List[S.SqlStatement] = []
    if opp in (ONE, OPTIONAL):
        out += _steal(ctx, st, y, _fresh_value(ctx, src.elem, st.table))
    return out + _shift_then_insert(ctx, st, x, y, i)


# --------------------------------------------------------------------------
# Substitutions
# --------------------------------------------------------------------------


def _path_text(ctx: CompileCtx, tp) -> str:
    if isinstance(tp, g.BaseTPath):
        s = tp.start
        if isinstance(s, g.ThisRef):
            return "this"
        if isinstance(s, g.IoRef):
            return s.name
        if isinstance(s, g.VarRef):
            return ctx.locals.get(s.name, (s.name, None))[0]
        idx = s.index.value if isinstance(s.index, g.Lit) else "i"
        return f"{s.prop.prop}[{idx}]"
    base = _path_text(ctx, tp.prefix)
    a = tp.access
    if isinstance(a, g.SeqTCAccess):
        idx = a.index.value if isinstance(a.index, g.Lit) else "i"
        return f"{base}.{a.prop.prop}[{idx}]"
    return f"{base}.{a.prop.prop}"


def _cache_name(ctx: CompileCtx, tp, role: str) -> str:
    key = (tp, role, tuple(sorted(ctx.locals.items())))
    name = ctx.cache_names.get(key)
    if name is None:
        name = ctx.fresh(_path_text(ctx, tp))
        ctx.cache_names[key] = name
    return name


def _path_is_single(ctx: CompileCtx, tp) -> bool:
    if isinstance(tp, g.BaseTPath):
        return not _is_io_collection(ctx, tp.start)
    a = tp.access
    if isinstance(a, g.SeqTCAccess):
        return True
    return ctx.model.prop(a.prop.cls, a.prop.prop).kind in (ONE, OPTIONAL)


def _cache_path(ctx: CompileCtx, tp, ordered: bool = False) -> List[S.SqlStatement]:
    if tp in ctx.cache or isinstance(tp, g.BaseTPath):
        return []
    if _path_is_single(ctx, tp):
        sel = path_scalar(ctx, tp)
        name = _cache_name(ctx, tp, "var")
        a = tp.access
        ctx.declare(name, _elem_type(ctx, a.prop.cls, a.prop.prop))
        ctx.cache[tp] = ("var", name, "")
        return [S.SelectInto(sel.columns, (name,), sel.source, sel.where)]
    sel, col = path_rows(ctx, tp)
    if not ordered:
        sel = S.Select(sel.columns, sel.source, sel.where)
    name = _cache_name(ctx, tp, "table")
    ctx.cache[tp] = ("table", name, col)
    return [S.DropTempTableIfExists(name), S.CreateTempTableAs(name, sel)]


def _bound_starts(ctx: CompileCtx, tp) -> bool:
    start = g.path_start(g.TPath(tp))
    return not isinstance(start, g.VarRef) or start.name in ctx.locals


def _expr_reads(e, out: list):
    """Maximal navigating paths read by expression ``e``."""
    for n in g.walk(e):
        if isinstance(n, g.PathExpr) and isinstance(n.path, g.TPath):
            tp = n.path.tpath
            if isinstance(tp, g.RecTPath) and tp not in out:
                out.append(tp)


def _reads(s: g.Substitution, out: list, dropped: Set[int], ordered: Optional[set] = None):
    if isinstance(s, g.Assign):
        if id(s) in dropped:
            return
        tp = _tpath(s.target)
        if isinstance(tp.prefix, g.RecTPath) and tp.prefix not in out:
            _expr_reads(g.PathExpr(g.TPath(tp.prefix)), out)
        src = s.source
        self_ref = g.PathExpr(s.target)
        if isinstance(src, (g.Union_, g.Concat)) and src.left == self_ref:
            _expr_reads(src.right, out)
            if isinstance(src, g.Concat) and ordered is not None and isinstance(src.right, g.PathExpr):
                ordered.add(_tpath(src.right.path))
        elif isinstance(src, g.Ins) and src.seq == self_ref:
            _expr_reads(src.index, out)
            _expr_reads(src.elem, out)
        else:
            _expr_reads(src, out)
            if isinstance(src, g.PathExpr) and ordered is not None:
                ordered.add(_tpath(src.path))
    elif isinstance(s, g.Guard):
        _expr_reads(s.cond, out)
        _reads(s.body, out, dropped, ordered)
    elif isinstance(s, (g.Par, g.Seq, g.Choice)):
        _reads(s.left, out, dropped, ordered)
        _reads(s.right, out, dropped, ordered)
    elif isinstance(s, (g.All, g.Any_)):
        _expr_reads(s.range, out)
        _reads(s.body, out, dropped, ordered)


def _mirrors(ctx: CompileCtx, a: g.Assign, b: g.Assign) -> bool:
    """``a`` writes the opposite end of the link that ``b`` establishes."""
    ta, tb = _tpath(a.target), _tpath(b.target)
    if not isinstance(ta, g.RecTPath) or not isinstance(tb, g.RecTPath):
        return False
    pa = ctx.model.prop(ta.access.prop.cls, ta.access.prop.prop)
    if pa is None or pa.opposite is None or pa.kind not in (ONE, OPTIONAL):
        return False
    if pa.opposite != IdenProperty(tb.access.prop.cls, tb.access.prop.prop):
        return False
    y = g.PathExpr(g.TPath(ta.prefix))
    if a.source != g.PathExpr(g.TPath(tb.prefix)):
        return False
    src = b.source
    if isinstance(src, g.Ins) and src.seq == g.PathExpr(b.target) and src.elem == y:
        return True
    pb = ctx.model.prop(tb.access.prop.cls, tb.access.prop.prop)
    return pb.kind in (ONE, OPTIONAL) and src == y


def _mark_mirrors(ctx: CompileCtx, s: g.Substitution):
    for n in g.walk(s):
        if isinstance(n, g.Par):
            branches = g.par_branches(n)
            assigns = [b for b in branches if isinstance(b, g.Assign)]
            for i, a in enumerate(assigns):
                for j, b in enumerate(assigns):
                    if i == j or id(b) in ctx.dropped:
                        continue
                    if _mirrors(ctx, a, b):
                        single_pair = not isinstance(b.source, g.Ins)
                        if single_pair and j > i:
                            continue
                        ctx.dropped.add(id(a))
                        break


def _count_writes(ctx: CompileCtx, s: g.Substitution):
    for n in g.walk(s):
        if isinstance(n, g.Assign) and id(n) not in ctx.dropped:
            tp = _tpath(n.target)
            st = ctx.tm.storage_of(tp.access.prop.cls, tp.access.prop.prop)
            ctx.table_writes[st.table] += 1


def _created_caches(ctx: CompileCtx, branches) -> List[S.SqlStatement]:
    out = []
    names = []
    for b in branches:
        for n in g.walk(b):
            if isinstance(n, g.Assign):
                tp = _tpath(n.target)
                pre = tp.prefix
                if isinstance(pre, g.BaseTPath) and isinstance(pre.start, g.IoRef) \
                        and pre.start.name in ctx.created and pre.start not in names:
                    names.append(pre.start)
    for start in names:
        cls = ctx.created[start.name]
        for pd in ctx.model.cls(cls).properties:
            st = ctx.tm.storage_of(cls, pd.name)
            if st.kind != "class":
                continue
            tp = g.RecTPath(g.BaseTPath(start), g.ClassTAccess(IdenProperty(cls, pd.name)))
            out += _cache_path(ctx, tp)
    return out


def _has_seq(s) -> bool:
    return any(isinstance(n, g.Seq) for n in g.walk(s))


def _par(ctx: CompileCtx, s: g.Par) -> List[S.SqlStatement]:
    branches = g.par_branches(s)
    for b in branches:
        if _has_seq(b):
            raise CompileError("sequential composition inside a parallel branch is not supported")
    targets = Counter()
    for b in branches:
        for n in g.walk(b):
            if isinstance(n, g.Assign) and id(n) not in ctx.dropped:
                targets[n.target] += 1
    clash = [t for t, k in targets.items() if k > 1]
    if clash:
        raise CompileError("parallel branches write the same location")
    reads: list = []
    ordered: set = set()
    for b in branches:
        _reads(b, reads, ctx.dropped, ordered)
    saved = dict(ctx.cache)
    pre: List[S.SqlStatement] = []
    for tp in reads:
        if _bound_starts(ctx, tp):
            pre += _cache_path(ctx, tp, tp in ordered)
    pre += _created_caches(ctx, branches)
    body: List[S.SqlStatement] = []
    for b in branches:
        body += to_sql_proc(ctx, b)
    ctx.cache = saved
    return pre + body


def _split_guard(cond: g.Expression):
    creates, rest = [], []
    for c in g.conjuncts(cond):
        if is_io_decl(c):
            if io_decl_name(c).endswith("!"):
                creates.append((io_decl_name(c), c.right.cls))
        else:
            rest.append(c)
    return creates, g.conj(*rest)


def _guard(ctx: CompileCtx, s: g.Guard) -> List[S.SqlStatement]:
    creates, cond = _split_guard(s.cond)
    c = to_sql_expr(ctx.tm, cond, ctx)
    then: List[S.SqlStatement] = []
    for name, cls in creates:
        for pd in ctx.model.cls(cls).properties:
            if pd.kind in (ONE, OPTIONAL):
                vname = f"{name}.{pd.name}"
                access = g.ClassTAccess if ctx.tm.storage_of(cls, pd.name).kind == "class" else g.AssocTAccess
                tp = g.RecTPath(g.BaseTPath(g.IoRef(name, ClassBase(cls))), access(IdenProperty(cls, pd.name)))
                if vname in ctx.used_names:
                    vname = ctx.fresh(vname)
                ctx.used_names.add(vname)
                ctx.cache_names[(tp, "var", ())] = vname
                ctx.declare(vname, sql_type(pd.target))
        then += [S.Insert(cls, (), ()), S.SetVar(name, S.LastInsertId())]
    then += to_sql_proc(ctx, s.body)
    orelse = (S.Signal("guard violated"),) if ctx.guard_mode == "signal" else ()
    return [S.IfThenElse(c, tuple(then), orelse)]


def _choice(ctx: CompileCtx, s: g.Choice) -> List[S.SqlStatement]:
    left, right = s.left, s.right
    if isinstance(left, g.Choice):
        return _choice(ctx, g.Choice(left.left, g.Choice(left.right, right)))
    if not isinstance(left, g.Guard):
        raise CompileError("nondeterministic choice needs guarded branches")
    if not isinstance(right, (g.Guard, g.Choice)):
        raise CompileError("nondeterministic choice needs guarded branches")
    creates, cond = _split_guard(left.cond)
    if creates:
        raise CompileError("object creation inside a choice branch is not supported")
    then = to_sql_proc(ctx, left.body)
    orelse = to_sql_proc(ctx, right)
    return [S.IfThenElse(to_sql_expr(ctx.tm, cond, ctx), tuple(then), tuple(orelse))]


def _range_type(ctx: CompileCtx, e: g.Expression) -> Type:
    if isinstance(e, g.Extent):
        return Type(ClassBase(e.cls), "set")
    if isinstance(e, g.PathExpr):
        tp = _tpath(e.path)
        if isinstance(tp, g.BaseTPath):
            start = tp.start
            if isinstance(start, g.IoRef) and start.name in ctx.io_types:
                return ctx.io_types[start.name]
            raise CompileError("range is not a collection")
        a = tp.access
        pd = ctx.model.prop(a.prop.cls, a.prop.prop)
        if pd.kind not in (SET, SEQ) or isinstance(a, g.SeqTCAccess):
            raise CompileError("range is not a collection")
        return Type(pd.target, pd.kind)
    raise CompileError("unsupported iterator range")


def _loop(ctx: CompileCtx, s) -> List[S.SqlStatement]:
    rt = _range_type(ctx, s.range)
    if rt.coll == "seq":
        raise CompileError("iteration over a sequence is not supported")
    setup, table, col = _materialize(ctx, s.range, s.var)
    typ = sql_type(rt.base)
    var = ctx.fresh(s.var)

    def body(v):
        saved = dict(ctx.locals)
        ctx.locals[s.var] = (v, rt.element())
        try:
            return to_sql_proc(ctx, s.body)
        finally:
            ctx.locals = saved

    if isinstance(s, g.All):
        return setup + _cursor_loop(ctx, s.var, typ, table, body, var_name=var)
    # ANY: pick the least element, if there is one
    v = ctx.fresh(var + "_variant")
    c = ctx.fresh(var + "_cursor")
    ctx.declare(var, typ)
    ctx.declare(v, INTEGER)
    ctx.cursor_decls.append(S.DeclareCursor(c, S.Select((), S.Table(table), S.TRUE, (col,))))
    ctx.loop_depth += 1
    try:
        inner = body(var)
    finally:
        ctx.loop_depth -= 1
    return setup + [
        S.OpenCursor(c), S.FetchInto(c, var),
        S.SelectInto((S.Count(),), (v,), S.Table(table), S.TRUE),
        S.IfThenElse(S.Bin(">", S.Var(v), S.Lit(0)), tuple(inner)),
        S.CloseCursor(c),
    ]


def to_sql_proc(ctx: CompileCtx, s: g.Substitution) -> List[S.SqlStatement]:
    if isinstance(s, g.Skip):
        return []
    if isinstance(s, g.Assign):
        if id(s) in ctx.dropped:
            return []
        return trans_assign(ctx, s)
    if isinstance(s, g.Guard):
        return _guard(ctx, s)
    if isinstance(s, g.Par):
        return _par(ctx, s)
    if isinstance(s, g.Seq):
        return to_sql_proc(ctx, s.left) + to_sql_proc(ctx, s.right)
    if isinstance(s, g.Choice):
        return _choice(ctx, s)
    if isinstance(s, (g.All, g.Any_)):
        return _loop(ctx, s)
    raise CompileError(f"not a substitution: {s!r}")


def _param_type(t: Type) -> str:
    return sql_type(t.base) if t.base is not None else INTEGER


def compile_operation(ro: ResolvedOperation, tm: Optional[TableModel] = None,
                      mutations: Sequence[str] = (), guard_mode: str = "skip") -> Tuple[S.SqlProcedure, CompileCtx]:
    tm = tm or table_model_for(ro.env.model)
    unknown = set(mutations) - set(MUTATIONS)
    if unknown:
        raise ValueError(f"unknown mutations {sorted(unknown)}")
    ctx = CompileCtx(tm, ro.cls, dict(ro.env.io), dict(ro.created), frozenset(mutations), guard_mode)
    for name, t in ro.env.io.items():
        if t.coll is not None and t.coll != "set":
            raise CompileError(f"sequence-valued input {name} is not supported")
    _mark_mirrors(ctx, ro.tab)
    _count_writes(ctx, ro.tab)
    body = to_sql_proc(ctx, ro.tab)
    ins = ((THIS, INTEGER),) + tuple((n, _param_type(ro.env.io[n])) for n in ro.inputs)
    outs = tuple((n, INTEGER) for n in ro.outputs)
    proc = S.SqlProcedure(f"{ro.cls}_{ro.name}", ins, outs,
                          tuple(ctx.var_decls) + tuple(ctx.cursor_decls) + tuple(body))
    return proc, ctx


def gen_procedure(m: BoosterModel, cls: str, op: str, mutations: Sequence[str] = (),
                  guard_mode: str = "skip") -> S.SqlProcedure:
    ro = resolve_operation(m, cls, op)
    return compile_operation(ro, table_model_for(m), mutations, guard_mode)[0]


# --------------------------------------------------------------------------
# Static checks over emitted code
# --------------------------------------------------------------------------


def _expr_nodes(e):
    yield e
    if isinstance(e, S.Bin):
        yield from _expr_nodes(e.left)
        yield from _expr_nodes(e.right)
    elif isinstance(e, (S.Not, S.Neg, S.IsNull)):
        yield from _expr_nodes(e.operand)
    elif isinstance(e, S.In):
        yield from _expr_nodes(e.operand)
        yield from _expr_nodes(e.query)
    elif isinstance(e, S.Select):
        for c in e.columns:
            yield from _expr_nodes(c)
        if isinstance(e.source, S.Derived):
            yield from _expr_nodes(e.source.query)
        else:
            yield e.source
        yield from _expr_nodes(e.where)


def _stmt_reads(st) -> Tuple[Set[str], Set[str]]:
    """(variables, tables) read by one non-compound statement or condition."""
    exprs = []
    tables: Set[str] = set()
    if isinstance(st, S.Update):
        exprs = [v for _, v in st.sets] + [st.where]
    elif isinstance(st, S.Insert):
        exprs = list(st.values)
    elif isinstance(st, S.Delete):
        exprs = [st.where]
    elif isinstance(st, S.SelectInto):
        exprs = list(st.columns) + [st.where, S.Select(st.columns, st.source, S.TRUE)]
    elif isinstance(st, S.CreateTempTableAs):
        exprs = [st.query]
    elif isinstance(st, S.SetVar):
        exprs = [st.value]
    elif isinstance(st, (S.IfThenElse, S.While)):
        exprs = [st.cond]
    vars_: Set[str] = set()
    for e in exprs:
        for n in _expr_nodes(e):
            if isinstance(n, S.Var):
                vars_.add(n.name)
            elif isinstance(n, S.Table):
                tables.add(n.name)
    return vars_, tables


def check_cache_coherence(proc: S.SqlProcedure, tm: TableModel) -> List[str]:
    """Temp tables and local variables read before being (re)defined on some path."""
    base = {t.name for t in tm.all_tables()}
    params = {n for n, _ in proc.in_params}
    problems: List[str] = []
    cursor_tables = {st.name: _stmt_reads(S.CreateTempTableAs("_", st.query))[1]
                     for st in proc.body if isinstance(st, S.DeclareCursor)}

    def run(stmts, defined: Set[str]) -> Set[str]:
        d = set(defined)
        for st in stmts:
            if isinstance(st, (S.DeclareVar, S.DeclareCursor)):
                continue
            vs, ts = _stmt_reads(st)
            if isinstance(st, S.OpenCursor):
                ts = cursor_tables.get(st.name, set())
            for v in vs:
                if v not in d and v not in params:
                    problems.append(f"variable {v!r} read before assignment")
            for t in ts:
                if t not in base and t not in d and t not in params:
                    problems.append(f"temporary table {t!r} read before creation")
            if isinstance(st, S.IfThenElse):
                d = run(st.then, d) & run(st.orelse, d)
            elif isinstance(st, S.While):
                run(st.body, d)
            elif isinstance(st, S.SelectInto):
                d.update(st.vars)
            elif isinstance(st, S.SetVar):
                d.add(st.name)
            elif isinstance(st, S.FetchInto):
                d.add(st.var)
            elif isinstance(st, S.CreateTempTableAs):
                d.add(st.name)
            elif isinstance(st, S.DropTempTableIfExists):
                d.discard(st.name)
        return d

    outs = {n for n, _ in proc.out_params}
    run(proc.body, set(outs) - outs)
    return sorted(set(problems))


def check_loop_variants(stmts: Sequence[S.SqlStatement]) -> List[str]:
    """Every WHILE must test ``v > 0`` and decrement ``v`` exactly once per pass."""
    problems = []
    for st in S.sub_statements(stmts):
        if not isinstance(st, S.While):
            continue
        c = st.cond
        if not (isinstance(c, S.Bin) and c.op == ">" and isinstance(c.left, S.Var)
                and c.right == S.Lit(0)):
            problems.append(f"loop condition is not `variant > 0`: {S.emit_expr(c)}")
            continue
        v = c.left.name
        dec = S.SetVar(v, S.Bin("-", S.Var(v), S.Lit(1)))
        top = [s for s in st.body if s == dec]
        writes = [s for s in S.sub_statements(st.body)
                  if (isinstance(s, S.SetVar) and s.name == v)
                  or (isinstance(s, S.SelectInto) and v in s.vars)
                  or (isinstance(s, S.FetchInto) and s.var == v)]
        if len(top) != 1 or len(writes) != 1:
            problems.append(f"variant {v!r} is not decremented exactly once per iteration")
    return problems
