"""Deterministic in-memory evaluator for the SQL subset."""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple

from . import sql as S
from .tables import INTEGER, TableModel, TableSpec

STEP_CAP = 10 ** 6


class SqlRuntimeError(Exception):
    pass


class FuelExhausted(SqlRuntimeError):
    pass


class SqlSignal(SqlRuntimeError):
    pass


class _Poison:
    """Value of a variable fetched past the end of its cursor."""

    def __repr__(self):
        return "<fetched past end>"


POISON = _Poison()


@dataclass
class TableData:
    columns: Tuple[str, ...]
    key: Tuple[str, ...]
    types: Tuple[str, ...]
    auto_increment: bool = False
    rows: List[Dict[str, Any]] = field(default_factory=list)
    next_id: int = 1
    temporary: bool = False

    def copy(self) -> "TableData":
        return TableData(self.columns, self.key, self.types, self.auto_increment,
                         [dict(r) for r in self.rows], self.next_id, self.temporary)

    def row_set(self) -> frozenset:
        return frozenset(tuple(r[c] for c in self.columns) for r in self.rows)

    def ordered_rows(self) -> List[Dict[str, Any]]:
        if self.temporary:
            return list(self.rows)
        return sorted(self.rows, key=lambda r: tuple(_sort_key(r[k]) for k in self.key))


def _sort_key(v):
    # NULL first, then numbers, then strings
    if v is None:
        return (0, 0)
    if isinstance(v, (bool, int)):
        return (1, int(v))
    return (2, str(v))


@dataclass
class DbState:
    tables: Dict[str, TableData] = field(default_factory=dict)
    temp: Dict[str, TableData] = field(default_factory=dict)
    last_insert_id: Optional[int] = None

    def copy(self) -> "DbState":
        return DbState({k: t.copy() for k, t in self.tables.items()},
                       {k: t.copy() for k, t in self.temp.items()}, self.last_insert_id)

    def table(self, name: str) -> TableData:
        if name in self.temp:
            return self.temp[name]
        if name in self.tables:
            return self.tables[name]
        raise SqlRuntimeError(f"no such table {name!r}")

    def canonical(self) -> tuple:
        return tuple(sorted((n, t.row_set()) for n, t in self.tables.items()))

    def __eq__(self, other):
        if not isinstance(other, DbState):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def rows(self, name: str) -> List[Dict[str, Any]]:
        return self.table(name).ordered_rows()


def empty_db(tm: TableModel) -> DbState:
    db = DbState()
    for spec in tm.all_tables():
        db.tables[spec.name] = _table_from_spec(spec)
    return db


def _table_from_spec(spec: TableSpec) -> TableData:
    return TableData(spec.column_names, spec.key, tuple(c.type for c in spec.columns),
                     spec.auto_increment)


def primary_key_violations(db: DbState) -> List[str]:
    bad = []
    for name, t in sorted(db.tables.items()):
        seen = set()
        for r in t.rows:
            k = tuple(r[c] for c in t.key)
            if k in seen:
                bad.append(f"{name}: duplicate key {k}")
            seen.add(k)
    return bad


def column_domain_violations(db: DbState) -> List[str]:
    bad = []
    for name, t in sorted(db.tables.items()):
        for r in t.rows:
            if set(r) != set(t.columns):
                bad.append(f"{name}: row {r} does not match columns {t.columns}")
    return bad


# --------------------------------------------------------------------------
# Environment
# --------------------------------------------------------------------------


@dataclass
class Cursor:
    query: S.Select
    rows: Optional[List[Dict[str, Any]]] = None
    pos: int = 0


@dataclass
class SqlIo:
    vars: Dict[str, Any] = field(default_factory=dict)
    cursors: Dict[str, Cursor] = field(default_factory=dict)
    steps: int = 0

    def copy(self) -> "SqlIo":
        return SqlIo(dict(self.vars), {k: Cursor(c.query, None if c.rows is None else list(c.rows), c.pos)
                                       for k, c in self.cursors.items()}, self.steps)

    def get(self, name: str):
        if name not in self.vars:
            raise SqlRuntimeError(f"unbound variable {name!r}")
        v = self.vars[name]
        if v is POISON:
            raise SqlRuntimeError(f"variable {name!r} read after its cursor was exhausted")
        return v


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


def _col_key(e: S.SqlExpr) -> str:
    if isinstance(e, S.Col):
        return e.name
    if isinstance(e, S.Count):
        return "COUNT(*)"
    return S.emit_expr(e)


class _Eval:
    def __init__(self, db: DbState, env: SqlIo):
        self.db = db
        self.env = env

    def expr(self, e: S.SqlExpr, scopes: Tuple[Mapping[str, Any], ...] = ()):
        if isinstance(e, S.Lit):
            return e.value
        if isinstance(e, S.Null):
            return None
        if isinstance(e, S.Col):
            for row in reversed(scopes):
                if e.name in row:
                    return row[e.name]
            raise SqlRuntimeError(f"unknown column {e.name!r}")
        if isinstance(e, S.Var):
            return self.env.get(e.name)
        if isinstance(e, S.Bin):
            return self._bin(e, scopes)
        if isinstance(e, S.Not):
            v = self.expr(e.operand, scopes)
            return None if v is None else not _truth(v)
        if isinstance(e, S.Neg):
            v = self.expr(e.operand, scopes)
            return None if v is None else -_num(v)
        if isinstance(e, S.IsNull):
            v = self.expr(e.operand, scopes)
            return (v is not None) if e.negated else (v is None)
        if isinstance(e, S.In):
            v = self.expr(e.operand, scopes)
            rows = self.select(e.query, scopes)
            if rows and len(rows[0]) != 1:
                raise SqlRuntimeError("IN subquery must project one column")
            vals = [next(iter(r.values())) for r in rows]
            if v is None:
                res = None
            elif any(_eq(v, x) for x in vals if x is not None):
                res = True
            elif any(x is None for x in vals):
                res = None
            else:
                res = False
            return (None if res is None else not res) if e.negated else res
        if isinstance(e, S.Count):
            raise SqlRuntimeError("COUNT(*) outside a projection")
        if isinstance(e, S.LastInsertId):
            return self.db.last_insert_id
        if isinstance(e, S.Select):
            rows = self.select(e, scopes)
            if len(e.columns) != 1:
                raise SqlRuntimeError("scalar subquery must project one column")
            if not rows:
                return None
            if len(rows) > 1:
                raise SqlRuntimeError("scalar subquery returned more than one row")
            return next(iter(rows[0].values()))
        raise SqlRuntimeError(f"unsupported expression {e!r}")

    def _bin(self, e: S.Bin, scopes):
        if e.op in ("AND", "OR"):
            a = self.expr(e.left, scopes)
            a = None if a is None else _truth(a)
            if e.op == "AND" and a is False:
                return False
            if e.op == "OR" and a is True:
                return True
            b = self.expr(e.right, scopes)
            b = None if b is None else _truth(b)
            if e.op == "AND":
                if b is False:
                    return False
                return None if a is None or b is None else True
            if b is True:
                return True
            return None if a is None or b is None else False
        a = self.expr(e.left, scopes)
        b = self.expr(e.right, scopes)
        if a is None or b is None:
            return None
        if e.op in ("+", "-", "*"):
            x, y = _num(a), _num(b)
            return x + y if e.op == "+" else x - y if e.op == "-" else x * y
        if isinstance(a, str) != isinstance(b, str):
            raise SqlRuntimeError(f"cannot compare {a!r} with {b!r}")
        if e.op == "=":
            return a == b
        if e.op == "<>":
            return a != b
        if e.op == "<":
            return a < b
        if e.op == "<=":
            return a <= b
        if e.op == ">":
            return a > b
        return a >= b

    def source_rows(self, src, scopes) -> List[Dict[str, Any]]:
        if isinstance(src, S.Table):
            return self.db.table(src.name).ordered_rows()
        return self.select(src.query, scopes)

    def select(self, s: S.Select, scopes=()) -> List[Dict[str, Any]]:
        rows = [r for r in self.source_rows(s.source, scopes)
                if _truth_or_false(self.expr(s.where, scopes + (r,)))]
        if s.order_by:
            rows = sorted(rows, key=lambda r: tuple(_sort_key(r[c]) for c in s.order_by))
        if any(isinstance(c, S.Count) for c in s.columns):
            if len(s.columns) != 1:
                raise SqlRuntimeError("COUNT(*) must be the only projection")
            return [{"COUNT(*)": len(rows)}]
        if not s.columns:
            return [dict(r) for r in rows]
        return [{_col_key(c): self.expr(c, scopes + (r,)) for c in s.columns} for r in rows]


def _truth(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return v != 0
    raise SqlRuntimeError(f"not a truth value: {v!r}")


def _truth_or_false(v) -> bool:
    return v is not None and _truth(v)


def _num(v) -> int:
    if isinstance(v, (bool, int)):
        return int(v)
    raise SqlRuntimeError(f"not a number: {v!r}")


def _eq(a, b) -> bool:
    if isinstance(a, str) != isinstance(b, str):
        return False
    return a == b


def eval_sql_expr(db: DbState, env: SqlIo, e: S.SqlExpr):
    return _Eval(db, env).expr(e)


# --------------------------------------------------------------------------
# Statements
# --------------------------------------------------------------------------

Observer = Callable[[S.SqlStatement, DbState, SqlIo], None]


class _Machine:
    def __init__(self, db: DbState, env: SqlIo, observer: Optional[Observer] = None):
        self.db = db
        self.env = env
        self.observer = observer

    def run(self, stmts: Iterable[S.SqlStatement]):
        for st in stmts:
            self.step(st)

    def _tick(self):
        self.env.steps += 1
        if self.env.steps > STEP_CAP:
            raise FuelExhausted(f"more than {STEP_CAP} statements executed")

    def step(self, st: S.SqlStatement):
        self._tick()
        ev = _Eval(self.db, self.env)
        if isinstance(st, S.Update):
            self._update(st, ev)
        elif isinstance(st, S.Insert):
            self._insert(st, ev)
        elif isinstance(st, S.Delete):
            t = self.db.table(st.table)
            keep = [r for r in t.rows if not _truth_or_false(ev.expr(st.where, (r,)))]
            t.rows = keep
        elif isinstance(st, S.SelectInto):
            rows = ev.select(S.Select(st.columns, st.source, st.where))
            if len(rows) > 1:
                raise SqlRuntimeError(f"SELECT INTO {st.vars} returned {len(rows)} rows")
            for v in st.vars:
                if v not in self.env.vars:
                    raise SqlRuntimeError(f"SELECT INTO undeclared variable {v!r}")
            if rows:
                vals = list(rows[0].values())
                if len(vals) != len(st.vars):
                    raise SqlRuntimeError("SELECT INTO column/variable count mismatch")
                for v, x in zip(st.vars, vals):
                    self.env.vars[v] = x
            else:
                for v in st.vars:
                    self.env.vars[v] = None
        elif isinstance(st, S.CreateTempTableAs):
            if st.name in self.db.temp:
                raise SqlRuntimeError(f"temporary table {st.name!r} already exists")
            rows = ev.select(st.query)
            cols = tuple(_col_key(c) for c in st.query.columns) if st.query.columns else \
                self._star_columns(st.query.source)
            self.db.temp[st.name] = TableData(cols, cols, tuple("" for _ in cols), rows=rows,
                                              temporary=True)
        elif isinstance(st, S.DropTempTableIfExists):
            self.db.temp.pop(st.name, None)
        elif isinstance(st, S.DeclareVar):
            self.env.vars[st.name] = None
        elif isinstance(st, S.DeclareCursor):
            self.env.cursors[st.name] = Cursor(st.query)
        elif isinstance(st, S.OpenCursor):
            c = self._cursor(st.name)
            c.rows = ev.select(c.query)
            c.pos = 0
        elif isinstance(st, S.FetchInto):
            c = self._cursor(st.cursor)
            if c.rows is None:
                raise SqlRuntimeError(f"cursor {st.cursor!r} is not open")
            if st.var not in self.env.vars:
                raise SqlRuntimeError(f"FETCH into undeclared variable {st.var!r}")
            if c.pos < len(c.rows):
                self.env.vars[st.var] = next(iter(c.rows[c.pos].values()))
                c.pos += 1
            else:
                self.env.vars[st.var] = POISON
        elif isinstance(st, S.CloseCursor):
            c = self._cursor(st.name)
            if c.rows is None:
                raise SqlRuntimeError(f"cursor {st.name!r} is not open")
            c.rows = None
        elif isinstance(st, S.SetVar):
            if st.name not in self.env.vars:
                raise SqlRuntimeError(f"SET of undeclared variable {st.name!r}")
            self.env.vars[st.name] = ev.expr(st.value)
        elif isinstance(st, S.IfThenElse):
            if _truth_or_false(ev.expr(st.cond)):
                self.run(st.then)
            else:
                self.run(st.orelse)
        elif isinstance(st, S.While):
            self._while(st)
        elif isinstance(st, S.Signal):
            raise SqlSignal(st.message)
        else:
            raise SqlRuntimeError(f"unsupported statement {st!r}")
        if self.observer is not None and not isinstance(st, (S.IfThenElse, S.While)):
            self.observer(st, self.db, self.env)

    def _star_columns(self, src) -> Tuple[str, ...]:
        if isinstance(src, S.Table):
            return self.db.table(src.name).columns
        return tuple(_col_key(c) for c in src.query.columns)

    def _cursor(self, name: str) -> Cursor:
        if name not in self.env.cursors:
            raise SqlRuntimeError(f"undeclared cursor {name!r}")
        return self.env.cursors[name]

    def _while(self, st: S.While):
        fuel = None
        c = st.cond
        if isinstance(c, S.Bin) and c.op == ">" and isinstance(c.left, S.Var) and isinstance(c.right, S.Lit):
            v0 = self.env.get(c.left.name)
            if isinstance(v0, int):
                fuel = max(v0, 0) + 1
        n = 0
        while _truth_or_false(_Eval(self.db, self.env).expr(st.cond)):
            n += 1
            if fuel is not None and n > fuel:
                raise FuelExhausted("loop ran past its variant bound")
            self.run(st.body)
            self._tick()

    def _update(self, st: S.Update, ev: _Eval):
        t = self.db.table(st.table)
        for col, _ in st.sets:
            if col not in t.columns:
                raise SqlRuntimeError(f"no column {col!r} in {st.table!r}")
        # every condition and new value is computed against the pre-statement state
        plans = []
        for i, r in enumerate(t.rows):
            if _truth_or_false(ev.expr(st.where, (r,))):
                plans.append((i, {c: ev.expr(v, (r,)) for c, v in st.sets}))
        new_rows = [dict(r) for r in t.rows]
        for i, changes in plans:
            new_rows[i].update(changes)
        self._check_key(st.table, t, new_rows)
        t.rows = new_rows

    def _insert(self, st: S.Insert, ev: _Eval):
        t = self.db.table(st.table)
        if len(st.columns) != len(st.values):
            raise SqlRuntimeError("INSERT column/value count mismatch")
        for c in st.columns:
            if c not in t.columns:
                raise SqlRuntimeError(f"no column {c!r} in {st.table!r}")
        row = {c: None for c in t.columns}
        for c, v in zip(st.columns, st.values):
            row[c] = ev.expr(v)
        if t.auto_increment and row.get("oid") is None:
            row["oid"] = t.next_id
        if t.auto_increment:
            t.next_id = max(t.next_id, row["oid"] + 1)
            self.db.last_insert_id = row["oid"]
        self._check_key(st.table, t, t.rows + [row])
        t.rows.append(row)

    @staticmethod
    def _check_key(name: str, t: TableData, rows: List[Dict[str, Any]]):
        if t.temporary:
            return
        seen = set()
        for r in rows:
            k = tuple(r[c] for c in t.key)
            if k in seen:
                raise SqlRuntimeError(f"duplicate primary key {k} in {name!r}")
            seen.add(k)


def eval_sql_stmt(db: DbState, env: SqlIo, st: S.SqlStatement,
                  observer: Optional[Observer] = None) -> Tuple[DbState, SqlIo]:
    m = _Machine(db.copy(), env.copy(), observer)
    m.step(st)
    return m.db, m.env


def eval_sql_stmts(db: DbState, env: SqlIo, stmts, observer: Optional[Observer] = None):
    m = _Machine(db.copy(), env.copy(), observer)
    m.run(stmts)
    return m.db, m.env


def eval_sql_proc(db: DbState, inputs: Mapping[str, Any], proc: S.SqlProcedure,
                  observer: Optional[Observer] = None) -> Tuple[DbState, Dict[str, Any]]:
    """Run ``proc``; collection-valued inputs become temporary tables of that name.

    Returns the after-state (temporary tables dropped) and the parameter values.
    """
    db = db.copy()
    env = SqlIo()
    for name, _ in proc.in_params:
        if name not in inputs:
            raise SqlRuntimeError(f"IN parameter {name!r} is unbound")
        v = inputs[name]
        if isinstance(v, (set, frozenset, list, tuple)):
            rows = [{"value": x} for x in _ordered(v)]
            db.temp[name] = TableData(("value",), ("value",), ("",), rows=rows, temporary=True)
            env.vars[name] = None
        else:
            env.vars[name] = v
    for name, _ in proc.out_params:
        env.vars[name] = None
    m = _Machine(db, env, observer)
    m.run(proc.body)
    m.db.temp.clear()
    params = [n for n, _ in proc.in_params] + [n for n, _ in proc.out_params]
    return m.db, {n: (None if m.env.vars.get(n) is POISON else m.env.vars.get(n)) for n in params}


def _ordered(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return sorted(v, key=_sort_key)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

NULL_TOKEN = "\\N"


def dump_db(db: DbState) -> str:
    out = []
    for name in sorted(db.tables):
        t = db.tables[name]
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(t.columns)
        for r in sorted(t.rows, key=lambda r: tuple(_sort_key(r[c]) for c in t.columns)):
            w.writerow([NULL_TOKEN if r[c] is None else int(r[c]) if isinstance(r[c], bool) else r[c]
                        for c in t.columns])
        out.append(f"[{name}]\n{buf.getvalue()}")
    return "\n".join(out)


def load_db(text: str, tm: TableModel) -> DbState:
    db = empty_db(tm)
    blocks = [b for b in text.split("\n[") if b.strip()]
    for block in blocks:
        block = block.lstrip("[")
        head, _, body = block.partition("]\n")
        t = db.tables.get(head)
        if t is None:
            raise SqlRuntimeError(f"table {head!r} is not in the schema")
        rows = list(csv.reader(_io.StringIO(body)))
        if not rows or tuple(rows[0]) != t.columns:
            raise SqlRuntimeError(f"bad header for table {head!r}")
        for rec in rows[1:]:
            row = {}
            for c, ty, raw in zip(t.columns, t.types, rec):
                if raw == NULL_TOKEN:
                    row[c] = None
                elif ty == INTEGER:
                    row[c] = int(raw)
                else:
                    row[c] = raw
            t.rows.append(row)
        if t.auto_increment and t.rows:
            t.next_id = max(r["oid"] for r in t.rows) + 1
    return db
