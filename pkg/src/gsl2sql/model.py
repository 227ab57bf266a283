"""Static object-model vocabulary shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

OPTIONAL = "optional"
ONE = "one"
SET = "set"
SEQ = "seq"
KINDS = (OPTIONAL, ONE, SET, SEQ)


@dataclass(frozen=True)
class ClassBase:
    name: str


@dataclass(frozen=True)
class SetBase:
    name: str


@dataclass(frozen=True)
class IntBase:
    pass


@dataclass(frozen=True)
class StrBase:
    pass


@dataclass(frozen=True)
class BoolBase:
    pass


Base = Union[ClassBase, SetBase, IntBase, StrBase, BoolBase]

BUILTIN_TYPES = {"Int": IntBase(), "String": StrBase(), "Bool": BoolBase()}


def base_name(base: Base) -> str:
    if isinstance(base, (ClassBase, SetBase)):
        return base.name
    for name, b in BUILTIN_TYPES.items():
        if b == base:
            return name
    raise TypeError(base)


@dataclass(frozen=True)
class IdenProperty:
    cls: str
    prop: str

    def __str__(self) -> str:
        return f"{self.cls}.{self.prop}"


@dataclass(frozen=True)
class PropertyDecl:
    name: str
    kind: str
    target: Base
    opposite: Optional[IdenProperty] = None

    @property
    def is_collection(self) -> bool:
        return self.kind in (SET, SEQ)

    @property
    def is_class_valued(self) -> bool:
        return isinstance(self.target, ClassBase)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    properties: Tuple[PropertyDecl, ...] = ()
    # (operation-name, Substitution) pairs, declaration order kept for printing
    operations: Tuple[tuple, ...] = ()

    def property(self, name: str) -> Optional[PropertyDecl]:
        for p in self.properties:
            if p.name == name:
                return p
        return None

    def operation(self, name: str):
        for op_name, body in self.operations:
            if op_name == name:
                return body
        return None


@dataclass(frozen=True)
class BoosterModel:
    name: str = "Model"
    classes: Tuple[ClassDecl, ...] = ()
    value_sets: Tuple[Tuple[str, Tuple[str, ...]], ...] = ()

    def cls(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def class_names(self) -> List[str]:
        return [c.name for c in self.classes]

    def prop(self, cls: str, prop: str) -> Optional[PropertyDecl]:
        c = self.cls(cls)
        return c.property(prop) if c is not None else None

    def value_set(self, name: str) -> Optional[Tuple[str, ...]]:
        for n, members in self.value_sets:
            if n == name:
                return members
        return None

    def enum_member(self, member: str) -> Optional[str]:
        """Name of the value-set declaring ``member``, if any."""
        for n, members in self.value_sets:
            if member in members:
                return n
        return None

    def opposite(self, cls: str, prop: str) -> Optional[PropertyDecl]:
        p = self.prop(cls, prop)
        if p is None or p.opposite is None:
            return None
        return self.prop(p.opposite.cls, p.opposite.prop)

    def stored_roles(self) -> List[Tuple[str, PropertyDecl]]:
        return [(c.name, p) for c in self.classes for p in c.properties]


@dataclass(frozen=True)
class Diagnostic:
    location: str
    reason: str

    def __str__(self) -> str:
        return f"{self.location}: {self.reason}"


def validate_model(m: BoosterModel) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    seen_classes: Dict[str, int] = {}
    for c in m.classes:
        seen_classes[c.name] = seen_classes.get(c.name, 0) + 1
    for name, count in seen_classes.items():
        if count > 1:
            diags.append(Diagnostic(name, "class declared more than once"))
    set_names = [n for n, _ in m.value_sets]
    for n in set_names:
        if set_names.count(n) > 1 or n in seen_classes or n in BUILTIN_TYPES:
            diags.append(Diagnostic(n, "value-set name clashes with another declaration"))
            break

    for c in m.classes:
        names = [p.name for p in c.properties]
        for n in sorted(set(names)):
            if names.count(n) > 1:
                diags.append(Diagnostic(f"{c.name}.{n}", "property declared more than once"))
        for p in c.properties:
            loc = f"{c.name}.{p.name}"
            if p.kind not in KINDS:
                diags.append(Diagnostic(loc, f"unknown multiplicity kind {p.kind!r}"))
            t = p.target
            if isinstance(t, ClassBase) and m.cls(t.name) is None:
                diags.append(Diagnostic(loc, f"unknown class {t.name}"))
            if isinstance(t, SetBase) and m.value_set(t.name) is None:
                diags.append(Diagnostic(loc, f"unknown value-set {t.name}"))
            if p.opposite is None:
                continue
            if not isinstance(t, ClassBase):
                diags.append(Diagnostic(loc, "opposite given for a property that is not class-valued"))
                continue
            if p.opposite.cls != t.name:
                diags.append(Diagnostic(loc, f"opposite class {p.opposite.cls} differs from target {t.name}"))
                continue
            q = m.prop(p.opposite.cls, p.opposite.prop)
            if q is None:
                diags.append(Diagnostic(loc, f"unknown opposite {p.opposite}"))
                continue
            if q.opposite != IdenProperty(c.name, p.name):
                diags.append(Diagnostic(loc, f"asymmetric opposition with {p.opposite}"))
    return diags


def check_model(m: BoosterModel) -> BoosterModel:
    diags = validate_model(m)
    if diags:
        raise ModelError(diags)
    return m


class ModelError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))
