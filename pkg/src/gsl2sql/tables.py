"""Table model: relational schema and reflective queries derived from an object model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Set, Tuple

from .model import (
    ONE, OPTIONAL, SEQ, SET,
    Base, BoolBase, BoosterModel, ClassBase, IntBase, PropertyDecl, SetBase, StrBase,
)

INTEGER = "INTEGER"
CHAR30 = "CHAR(30)"


def sql_type(base: Base) -> str:
    if isinstance(base, (ClassBase, IntBase, BoolBase)):
        return INTEGER
    if isinstance(base, (StrBase, SetBase)):
        return CHAR30
    raise TypeError(base)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type: str
    nullable: bool = True
    auto_increment: bool = False
    primary_key: bool = False


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: Tuple[ColumnSpec, ...]
    # uniqueness key; a single ``oid`` column except for set/seq tables,
    # whose ``oid`` column holds the owner
    key: Tuple[str, ...] = ("oid",)
    uniques: Tuple[Tuple[str, ...], ...] = ()

    @property
    def column_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Optional[ColumnSpec]:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    @property
    def auto_increment(self) -> bool:
        return any(c.auto_increment for c in self.columns)


@dataclass(frozen=True)
class AssocEnd:
    cls: str
    prop: str
    kind: str


@dataclass(frozen=True)
class AssocTable:
    spec: TableSpec
    first: AssocEnd
    second: AssocEnd


@dataclass(frozen=True)
class Storage:
    """Where a (class, property) role lives.

    ``owner_col`` holds the object owning the property, ``value_col`` its
    value(s); ``index_col`` orders a seq-valued role, ``opp_index_col``
    orders the opposite end when that end is seq-valued.
    """

    kind: str  # "class", "assoc", "set", "seq"
    table: str
    owner_col: str
    value_col: str
    index_col: Optional[str] = None
    opp_index_col: Optional[str] = None


class SchemaError(Exception):
    pass


@dataclass
class TableModel:
    name: str
    source: BoosterModel
    class_tables: Dict[str, TableSpec] = field(default_factory=dict)
    assoc_tables: Dict[str, AssocTable] = field(default_factory=dict)
    set_tables: Dict[str, TableSpec] = field(default_factory=dict)
    seq_tables: Dict[str, TableSpec] = field(default_factory=dict)
    storage: Dict[Tuple[str, str], Storage] = field(default_factory=dict)

    def table(self, name: str) -> TableSpec:
        if name in self.class_tables:
            return self.class_tables[name]
        if name in self.assoc_tables:
            return self.assoc_tables[name].spec
        if name in self.set_tables:
            return self.set_tables[name]
        if name in self.seq_tables:
            return self.seq_tables[name]
        raise KeyError(name)

    def all_tables(self) -> List[TableSpec]:
        out = [self.class_tables[k] for k in sorted(self.class_tables)]
        out += [self.assoc_tables[k].spec for k in sorted(self.assoc_tables)]
        out += [self.set_tables[k] for k in sorted(self.set_tables)]
        out += [self.seq_tables[k] for k in sorted(self.seq_tables)]
        return out

    def storage_of(self, cls: str, prop: str) -> Storage:
        return self.storage[(cls, prop)]


def _oid_column() -> ColumnSpec:
    return ColumnSpec("oid", INTEGER, nullable=False, auto_increment=True, primary_key=True)


def canonical_ends(m: BoosterModel, cls: str, p: PropertyDecl) -> Tuple[Tuple[str, PropertyDecl], Tuple[str, PropertyDecl]]:
    """Order the two ends of a bidirectional association for table naming.

    A collection-valued end goes first when only one end is a collection;
    otherwise the lexicographically smaller (class, property) pair does.
    """
    other_cls = p.opposite.cls
    q = m.prop(other_cls, p.opposite.prop)
    a, b = (cls, p), (other_cls, q)
    if a[1].is_collection != b[1].is_collection:
        return (a, b) if a[1].is_collection else (b, a)
    return (a, b) if (a[0], a[1].name) <= (b[0], b[1].name) else (b, a)


def assoc_table_name(m: BoosterModel, cls: str, p: PropertyDecl) -> str:
    (c1, p1), (c2, p2) = canonical_ends(m, cls, p)
    return f"{c1}_{p1.name}_{c2}_{p2.name}"


def derive_table_model(m: BoosterModel) -> TableModel:
    tm = TableModel(m.name, m)
    for c in m.classes:
        cols = [_oid_column()]
        for p in c.properties:
            if p.opposite is None and p.kind in (ONE, OPTIONAL):
                cols.append(ColumnSpec(p.name, sql_type(p.target), nullable=True))
                tm.storage[(c.name, p.name)] = Storage("class", c.name, "oid", p.name)
        tm.class_tables[c.name] = TableSpec(c.name, tuple(cols))

    for c in m.classes:
        for p in c.properties:
            if p.opposite is not None:
                (c1, p1), (c2, p2) = canonical_ends(m, c.name, p)
                name = f"{c1}_{p1.name}_{c2}_{p2.name}"
                if p1.kind == SEQ and p2.kind == SEQ:
                    raise SchemaError(f"{name}: seq-to-seq associations are not supported")
                if p1.name == p2.name:
                    raise SchemaError(f"{name}: both association ends are named {p1.name!r}")
                if name in tm.assoc_tables:
                    continue
                has_index = SEQ in (p1.kind, p2.kind)
                cols = [_oid_column(),
                        ColumnSpec(p1.name, INTEGER), ColumnSpec(p2.name, INTEGER)]
                if has_index:
                    cols.append(ColumnSpec("index", INTEGER))
                uniques = []
                # row (p1=b, p2=a) links a in class c1 to b in class c2
                for (own_c, own_p), (_, opp_p) in (((c1, p1), (c2, p2)), ((c2, p2), (c1, p1))):
                    if own_p.kind in (ONE, OPTIONAL):
                        uniques.append((opp_p.name,))
                    elif own_p.kind == SEQ:
                        uniques.append((opp_p.name, "index"))
                if p1.is_collection and p2.is_collection:
                    uniques.append((p1.name, p2.name))
                spec = TableSpec(name, tuple(cols), ("oid",), tuple(uniques))
                tm.assoc_tables[name] = AssocTable(
                    spec, AssocEnd(c1, p1.name, p1.kind), AssocEnd(c2, p2.name, p2.kind))
                for (own_c, own_p), (_, opp_p) in (((c1, p1), (c2, p2)), ((c2, p2), (c1, p1))):
                    tm.storage[(own_c, own_p.name)] = Storage(
                        "assoc", name, owner_col=opp_p.name, value_col=own_p.name,
                        index_col="index" if own_p.kind == SEQ else None,
                        opp_index_col="index" if opp_p.kind == SEQ else None)
            elif p.kind in (SET, SEQ):
                name = f"{c.name}_{p.name}"
                cols = [ColumnSpec("oid", INTEGER, nullable=False),
                        ColumnSpec(p.name, sql_type(p.target), nullable=False)]
                if p.kind == SEQ:
                    cols.append(ColumnSpec("index", INTEGER, nullable=False))
                    tm.seq_tables[name] = TableSpec(name, tuple(cols), ("oid", "index"))
                    tm.storage[(c.name, p.name)] = Storage("seq", name, "oid", p.name, index_col="index")
                else:
                    tm.set_tables[name] = TableSpec(name, tuple(cols), ("oid", p.name))
                    tm.storage[(c.name, p.name)] = Storage("set", name, "oid", p.name)
    return tm


class ReflectiveQueries(NamedTuple):
    bi_assoc: Set[Tuple[str, str]]
    class_tables: Set[Tuple[str, str]]
    set_tables: Set[Tuple[str, str]]
    seq_tables: Set[Tuple[str, str]]


def reflective_queries(tm: TableModel) -> ReflectiveQueries:
    buckets = {"assoc": set(), "class": set(), "set": set(), "seq": set()}
    for key, st in tm.storage.items():
        buckets[st.kind].add(key)
    return ReflectiveQueries(buckets["assoc"], buckets["class"], buckets["set"], buckets["seq"])


def _q(name: str) -> str:
    return f"`{name}`"


def _create_table(spec: TableSpec) -> str:
    parts = []
    key_done = False
    for col in spec.columns:
        text = f"{_q(col.name)} {col.type}"
        if col.auto_increment:
            text += " AUTO_INCREMENT"
        parts.append(text)
        if not key_done and col.name == spec.key[-1]:
            parts.append("PRIMARY KEY (" + ", ".join(_q(k) for k in spec.key) + ")")
            key_done = True
    return f"CREATE TABLE {_q(spec.name)}(" + ", ".join(parts) + ");"


def emit_ddl(tm: TableModel) -> List[str]:
    stmts = [_create_table(t) for t in tm.all_tables()]
    for name in sorted(tm.assoc_tables):
        spec = tm.assoc_tables[name].spec
        for cols in spec.uniques:
            stmts.append(f"ALTER TABLE {_q(name)} ADD UNIQUE (" + ", ".join(_q(c) for c in cols) + ");")
    return stmts
