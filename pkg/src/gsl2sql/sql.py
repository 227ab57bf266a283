"""SQL subset: expressions, statements, procedures and their text form.

Only the constructs the generator emits exist here. Identifiers are always
backquoted; binary operators are parenthesised only where precedence needs it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Union[int, str, bool]


@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


BIN_OPS = ("+", "-", "*", "=", "<>", "<", "<=", ">", ">=", "AND", "OR")


@dataclass(frozen=True)
class Bin:
    op: str
    left: "SqlExpr"
    right: "SqlExpr"

    def __post_init__(self):
        if self.op not in BIN_OPS:
            raise ValueError(f"operator {self.op!r} is outside the SQL subset")


@dataclass(frozen=True)
class Not:
    operand: "SqlExpr"


@dataclass(frozen=True)
class Neg:
    operand: "SqlExpr"


@dataclass(frozen=True)
class IsNull:
    operand: "SqlExpr"
    negated: bool = False


@dataclass(frozen=True)
class In:
    operand: "SqlExpr"
    query: "Select"
    negated: bool = False


@dataclass(frozen=True)
class Count:
    """``COUNT(*)``; only valid as a projection."""


@dataclass(frozen=True)
class LastInsertId:
    pass


@dataclass(frozen=True)
class Table:
    name: str


@dataclass(frozen=True)
class Derived:
    query: "Select"
    alias: str


@dataclass(frozen=True)
class Select:
    columns: Tuple["SqlExpr", ...]
    source: Union[Table, Derived]
    where: "SqlExpr"
    order_by: Tuple[str, ...] = ()


SqlExpr = Union[Lit, Null, Col, Var, Bin, Not, Neg, IsNull, In, Count, LastInsertId, Select]

TRUE = Lit(True)
FALSE = Lit(False)


def and_(*es: SqlExpr) -> SqlExpr:
    es = [e for e in es if e != TRUE]
    if not es:
        return TRUE
    out = es[0]
    for e in es[1:]:
        out = Bin("AND", out, e)
    return out


def eq(a: SqlExpr, b: SqlExpr) -> SqlExpr:
    return Bin("=", a, b)


# --------------------------------------------------------------------------
# Statements
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Update:
    table: str
    sets: Tuple[Tuple[str, SqlExpr], ...]
    where: SqlExpr


@dataclass(frozen=True)
class Insert:
    table: str
    columns: Tuple[str, ...]
    values: Tuple[SqlExpr, ...]


@dataclass(frozen=True)
class Delete:
    table: str
    where: SqlExpr


@dataclass(frozen=True)
class SelectInto:
    columns: Tuple[SqlExpr, ...]
    vars: Tuple[str, ...]
    source: Union[Table, Derived]
    where: SqlExpr


@dataclass(frozen=True)
class CreateTempTableAs:
    name: str
    query: Select


@dataclass(frozen=True)
class DropTempTableIfExists:
    name: str


@dataclass(frozen=True)
class DeclareVar:
    name: str
    type: str


@dataclass(frozen=True)
class DeclareCursor:
    name: str
    query: Select


@dataclass(frozen=True)
class OpenCursor:
    name: str


@dataclass(frozen=True)
class FetchInto:
    cursor: str
    var: str


@dataclass(frozen=True)
class CloseCursor:
    name: str


@dataclass(frozen=True)
class SetVar:
    name: str
    value: SqlExpr


@dataclass(frozen=True)
class IfThenElse:
    cond: SqlExpr
    then: Tuple["SqlStatement", ...]
    orelse: Tuple["SqlStatement", ...] = ()


@dataclass(frozen=True)
class While:
    cond: SqlExpr
    body: Tuple["SqlStatement", ...]

    def __post_init__(self):
        if not self.body:
            raise ValueError("WHILE body must be non-empty")


@dataclass(frozen=True)
class Signal:
    message: str


SqlStatement = Union[
    Update, Insert, Delete, SelectInto, CreateTempTableAs, DropTempTableIfExists,
    DeclareVar, DeclareCursor, OpenCursor, FetchInto, CloseCursor, SetVar,
    IfThenElse, While, Signal,
]


@dataclass(frozen=True)
class SqlProcedure:
    name: str
    in_params: Tuple[Tuple[str, str], ...]
    out_params: Tuple[Tuple[str, str], ...]
    body: Tuple[SqlStatement, ...]

    def __post_init__(self):
        if not self.in_params or self.in_params[0][0] != "this?":
            raise ValueError("the first IN parameter must be `this?`")


def sub_statements(stmts: Sequence[SqlStatement]):
    """Pre-order iteration over statements, descending into IF/WHILE bodies."""
    for st in stmts:
        yield st
        if isinstance(st, IfThenElse):
            yield from sub_statements(st.then)
            yield from sub_statements(st.orelse)
        elif isinstance(st, While):
            yield from sub_statements(st.body)


def check_cursors(proc: SqlProcedure) -> List[str]:
    """Cursor operations that name an undeclared cursor."""
    declared = {st.name for st in sub_statements(proc.body) if isinstance(st, DeclareCursor)}
    bad = []
    for st in sub_statements(proc.body):
        name = st.cursor if isinstance(st, FetchInto) else getattr(st, "name", None)
        if isinstance(st, (OpenCursor, FetchInto, CloseCursor)) and name not in declared:
            bad.append(name)
    return bad


# --------------------------------------------------------------------------
# Text emission
# --------------------------------------------------------------------------


def q(name: str) -> str:
    return f"`{name}`"


def _str(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "''") + "'"


_PREC = {"OR": 1, "AND": 2, "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6}
_P_NOT, _P_CMP, _P_NEG, _P_ATOM = 3, 4, 7, 8


def _e(e: SqlExpr) -> Tuple[str, int]:
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return ("TRUE" if e.value else "FALSE"), _P_ATOM
        if isinstance(e.value, int):
            return str(e.value), (_P_NEG if e.value < 0 else _P_ATOM)
        return _str(e.value), _P_ATOM
    if isinstance(e, Null):
        return "NULL", _P_ATOM
    if isinstance(e, (Col, Var)):
        return q(e.name), _P_ATOM
    if isinstance(e, Bin):
        p = _PREC[e.op]
        right_min = p + 1
        left_min = p + 1 if p == _P_CMP else p
        return f"{_wrap(e.left, left_min)} {e.op} {_wrap(e.right, right_min)}", p
    if isinstance(e, Not):
        return "NOT " + _wrap(e.operand, _P_NOT), _P_NOT
    if isinstance(e, Neg):
        return f"-({_e(e.operand)[0]})", _P_NEG
    if isinstance(e, IsNull):
        return f"{_wrap(e.operand, _P_CMP + 1)} IS {'NOT ' if e.negated else ''}NULL", _P_CMP
    if isinstance(e, In):
        return (f"{_wrap(e.operand, _P_CMP + 1)} {'NOT ' if e.negated else ''}IN "
                f"({emit_select(e.query)})"), _P_CMP
    if isinstance(e, Count):
        return "COUNT(*)", _P_ATOM
    if isinstance(e, LastInsertId):
        return "last_insert_id ()", _P_ATOM
    if isinstance(e, Select):
        return f"({emit_select(e)})", _P_ATOM
    raise TypeError(f"not an SQL expression: {e!r}")


def _wrap(e: SqlExpr, min_prec: int) -> str:
    text, p = _e(e)
    return text if p >= min_prec else f"({text})"


def emit_expr(e: SqlExpr) -> str:
    return _e(e)[0]


def _source(src: Union[Table, Derived]) -> str:
    if isinstance(src, Table):
        return q(src.name)
    return f"({emit_select(src.query)}) AS {src.alias}"


def _projection(cols: Sequence[SqlExpr]) -> str:
    return "*" if not cols else ", ".join(emit_expr(c) for c in cols)


def emit_select(s: Select) -> str:
    text = f"SELECT {_projection(s.columns)} FROM {_source(s.source)} WHERE {emit_expr(s.where)}"
    if s.order_by:
        text += " ORDER BY " + ", ".join(q(c) for c in s.order_by)
    return text


def _stmt(st: SqlStatement, indent: str) -> List[str]:
    inner = indent + "  "
    if isinstance(st, Update):
        sets = ", ".join(f"{q(c)} = {emit_expr(v)}" for c, v in st.sets)
        return [f"{indent}UPDATE {q(st.table)} SET {sets} WHERE {emit_expr(st.where)};"]
    if isinstance(st, Insert):
        cols = ", ".join(q(c) for c in st.columns)
        vals = ", ".join(emit_expr(v) for v in st.values)
        return [f"{indent}INSERT INTO {q(st.table)} ({cols}) VALUE ({vals});"]
    if isinstance(st, Delete):
        return [f"{indent}DELETE FROM {q(st.table)} WHERE {emit_expr(st.where)};"]
    if isinstance(st, SelectInto):
        vs = ", ".join(q(v) for v in st.vars)
        return [f"{indent}SELECT {_projection(st.columns)} INTO {vs} FROM {_source(st.source)} "
                f"WHERE {emit_expr(st.where)};"]
    if isinstance(st, CreateTempTableAs):
        return [f"{indent}CREATE TEMPORARY TABLE {q(st.name)} AS {emit_select(st.query)};"]
    if isinstance(st, DropTempTableIfExists):
        return [f"{indent}DROP TEMPORARY TABLE IF EXISTS {q(st.name)};"]
    if isinstance(st, DeclareVar):
        return [f"{indent}DECLARE {q(st.name)} {st.type};"]
    if isinstance(st, DeclareCursor):
        return [f"{indent}DECLARE {q(st.name)} CURSOR FOR ({emit_select(st.query)});"]
    if isinstance(st, OpenCursor):
        return [f"{indent}OPEN {q(st.name)};"]
    if isinstance(st, FetchInto):
        return [f"{indent}FETCH {q(st.cursor)} INTO {q(st.var)};"]
    if isinstance(st, CloseCursor):
        return [f"{indent}CLOSE {q(st.name)};"]
    if isinstance(st, SetVar):
        return [f"{indent}SET {q(st.name)} = {emit_expr(st.value)};"]
    if isinstance(st, IfThenElse):
        lines = [f"{indent}IF {emit_expr(st.cond)} THEN"]
        for s in st.then:
            lines += _stmt(s, inner)
        if st.orelse:
            lines.append(f"{indent}ELSE")
            for s in st.orelse:
                lines += _stmt(s, inner)
        lines.append(f"{indent}END IF;")
        return lines
    if isinstance(st, While):
        lines = [f"{indent}WHILE {emit_expr(st.cond)} DO"]
        for s in st.body:
            lines += _stmt(s, inner)
        lines.append(f"{indent}END WHILE;")
        return lines
    if isinstance(st, Signal):
        return [f"{indent}SIGNAL SQLSTATE '45000' SET MESSAGE_TEXT = {_str(st.message)};"]
    raise TypeError(f"not an SQL statement: {st!r}")


def emit_statements(stmts: Sequence[SqlStatement], indent: str = "") -> str:
    lines: List[str] = []
    for st in stmts:
        lines += _stmt(st, indent)
    return "\n".join(lines)


def emit_procedure(p: SqlProcedure) -> str:
    params = [f"IN {q(n)} {t}" for n, t in p.in_params] + [f"OUT {q(n)} {t}" for n, t in p.out_params]
    head = f"CREATE PROCEDURE {q(p.name)} ({', '.join(params)})"
    body = emit_statements(p.body, "  ")
    return "\n".join([head, "BEGIN"] + ([body] if body else []) + ["END;"])


def emit_sql_text(unit: Union[SqlProcedure, Sequence[SqlStatement]]) -> str:
    if isinstance(unit, SqlProcedure):
        return emit_procedure(unit)
    return emit_statements(unit)
