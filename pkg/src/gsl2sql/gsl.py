"""Stage-polymorphic program representation.

One ``Substitution`` grammar serves the Booster, Object and Table stages; the
stages differ only in the kind of path held by ``PathExpr`` and ``Assign``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, is_dataclass, replace
from typing import Any, Callable, Iterator, Mapping, Optional, Tuple, Union

from .model import Base, IdenProperty

# --------------------------------------------------------------------------
# Paths
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    name: str
    deco: str = ""  # "", "?" or "!"
    index: Optional["Expression"] = None

    @property
    def full_name(self) -> str:
        return self.name + self.deco


@dataclass(frozen=True)
class BPath:
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("BPATH must be nonempty")


@dataclass(frozen=True)
class ThisRef:
    base: Base


@dataclass(frozen=True)
class SCRef:
    prop: IdenProperty
    index: "Expression"
    base: Base


@dataclass(frozen=True)
class VarRef:
    name: str
    base: Base


@dataclass(frozen=True)
class IoRef:
    name: str
    base: Base


RefStart = Union[ThisRef, SCRef, VarRef, IoRef]


@dataclass(frozen=True)
class EntityTarget:
    prop: IdenProperty


@dataclass(frozen=True)
class SCTarget:
    prop: IdenProperty
    index: "Expression"


Target = Union[EntityTarget, SCTarget]


@dataclass(frozen=True)
class BaseOPath:
    start: RefStart


@dataclass(frozen=True)
class RecOPath:
    prefix: "OPATH"
    target: Target


OPATH = Union[BaseOPath, RecOPath]


@dataclass(frozen=True)
class OPath:
    opath: OPATH


@dataclass(frozen=True)
class ClassTAccess:
    prop: IdenProperty


@dataclass(frozen=True)
class AssocTAccess:
    prop: IdenProperty


@dataclass(frozen=True)
class SetTAccess:
    prop: IdenProperty


@dataclass(frozen=True)
class SeqTAccess:
    prop: IdenProperty


@dataclass(frozen=True)
class SeqTCAccess:
    prop: IdenProperty
    index: "Expression"


TAccess = Union[ClassTAccess, AssocTAccess, SetTAccess, SeqTAccess, SeqTCAccess]


@dataclass(frozen=True)
class BaseTPath:
    start: RefStart


@dataclass(frozen=True)
class RecTPath:
    prefix: "TPATH"
    access: TAccess


TPATH = Union[BaseTPath, RecTPath]


@dataclass(frozen=True)
class TPath:
    tpath: TPATH


Path = Union[BPath, OPath, TPath]


def path_start(p) -> RefStart:
    """Starting reference of an OPATH/TPATH tree (or wrapper)."""
    if isinstance(p, OPath):
        p = p.opath
    elif isinstance(p, TPath):
        p = p.tpath
    while isinstance(p, (RecOPath, RecTPath)):
        p = p.prefix
    return p.start


def path_steps(p) -> list:
    """Targets (OPATH) or accesses (TPATH), outermost last."""
    if isinstance(p, OPath):
        p = p.opath
    elif isinstance(p, TPath):
        p = p.tpath
    steps = []
    while isinstance(p, RecOPath):
        steps.append(p.target)
        p = p.prefix
    while isinstance(p, RecTPath):
        steps.append(p.access)
        p = p.prefix
    steps.reverse()
    return steps


def path_prefix(p):
    """Wrapper path minus its final step, or None at the base."""
    if isinstance(p, OPath) and isinstance(p.opath, RecOPath):
        return OPath(p.opath.prefix)
    if isinstance(p, TPath) and isinstance(p.tpath, RecTPath):
        return TPath(p.tpath.prefix)
    return None


def path_last(p):
    if isinstance(p, OPath) and isinstance(p.opath, RecOPath):
        return p.opath.target
    if isinstance(p, TPath) and isinstance(p.tpath, RecTPath):
        return p.tpath.access
    return None


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Union[int, str, bool]


@dataclass(frozen=True)
class EnumLit:
    set_name: str
    member: str


@dataclass(frozen=True)
class Undefined:
    pass


@dataclass(frozen=True)
class PathExpr:
    path: Path


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "-"
    operand: "Expression"


ARITH_OPS = ("+", "-", "*")
COMPARE_OPS = ("=", "/=", "<", "<=", ">", ">=")
MEMBER_OPS = (":", "/:")
BOOL_OPS = ("&", "or", "=>")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Card:
    operand: "Expression"


@dataclass(frozen=True)
class Union_:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Concat:
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class SeqDisplay:
    items: Tuple["Expression", ...] = ()


@dataclass(frozen=True)
class Ins:
    seq: "Expression"
    index: "Expression"
    elem: "Expression"


@dataclass(frozen=True)
class Extent:
    cls: str


@dataclass(frozen=True)
class SetOf:
    name: str


@dataclass(frozen=True)
class SeqOf:
    name: str


@dataclass(frozen=True)
class TypeName:
    name: str


Expression = Union[
    Lit, EnumLit, Undefined, PathExpr, Unary, Binary, Card, Union_, Concat,
    SeqDisplay, Ins, Extent, SetOf, SeqOf, TypeName,
]
Predicate = Expression

TRUE = Lit(True)
FALSE = Lit(False)


def conj(*ps: Expression) -> Expression:
    ps = [p for p in ps if p != TRUE]
    if not ps:
        return TRUE
    out = ps[0]
    for p in ps[1:]:
        out = Binary("&", out, p)
    return out


def conjuncts(p: Expression) -> list:
    if isinstance(p, Binary) and p.op == "&":
        return conjuncts(p.left) + conjuncts(p.right)
    return [p]


# --------------------------------------------------------------------------
# Substitutions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    target: Path
    source: Expression


@dataclass(frozen=True)
class Guard:
    cond: Predicate
    body: "Substitution"


@dataclass(frozen=True)
class Par:
    left: "Substitution"
    right: "Substitution"


@dataclass(frozen=True)
class Seq:
    left: "Substitution"
    right: "Substitution"


@dataclass(frozen=True)
class Choice:
    left: "Substitution"
    right: "Substitution"


@dataclass(frozen=True)
class All:
    var: str
    range: Expression
    body: "Substitution"


@dataclass(frozen=True)
class Any_:
    var: str
    range: Expression
    body: "Substitution"


Substitution = Union[Skip, Assign, Guard, Par, Seq, Choice, All, Any_]

_HANDLER_NAMES = {
    Skip: "skip", Assign: "assign", Guard: "guard", Par: "par",
    Seq: "seq", Choice: "choice", All: "all", Any_: "any",
}


def fold_substitution(s: Substitution, algebra: Mapping[str, Callable]) -> Any:
    """Structural catamorphism over a substitution.

    ``algebra`` maps a constructor name (skip, assign, guard, par, seq,
    choice, all, any) to a handler called with the node's fields, where
    each child substitution has already been replaced by its folded value.
    """
    handler = algebra[_HANDLER_NAMES[type(s)]]
    if isinstance(s, Skip):
        return handler()
    if isinstance(s, Assign):
        return handler(s.target, s.source)
    if isinstance(s, Guard):
        return handler(s.cond, fold_substitution(s.body, algebra))
    if isinstance(s, (Par, Seq, Choice)):
        return handler(fold_substitution(s.left, algebra), fold_substitution(s.right, algebra))
    return handler(s.var, s.range, fold_substitution(s.body, algebra))


IDENTITY_ALGEBRA = {
    "skip": Skip, "assign": Assign, "guard": Guard, "par": Par,
    "seq": Seq, "choice": Choice, "all": All, "any": Any_,
}


def count_nodes(s: Substitution) -> int:
    """Substitution nodes, with each guard predicate counted as one node."""
    return fold_substitution(s, {
        "skip": lambda: 1,
        "assign": lambda t, e: 1,
        "guard": lambda c, b: 2 + b,
        "par": lambda l, r: 1 + l + r,
        "seq": lambda l, r: 1 + l + r,
        "choice": lambda l, r: 1 + l + r,
        "all": lambda v, e, b: 1 + b,
        "any": lambda v, e, b: 1 + b,
    })


def assignments(s: Substitution) -> list:
    return fold_substitution(s, {
        "skip": lambda: [],
        "assign": lambda t, e: [Assign(t, e)],
        "guard": lambda c, b: b,
        "par": lambda l, r: l + r,
        "seq": lambda l, r: l + r,
        "choice": lambda l, r: l + r,
        "all": lambda v, e, b: b,
        "any": lambda v, e, b: b,
    })


def par_branches(s: Substitution) -> list:
    if isinstance(s, Par):
        return par_branches(s.left) + par_branches(s.right)
    return [s]


def par_of(branches) -> Substitution:
    branches = list(branches)
    if not branches:
        return Skip()
    out = branches[-1]
    for b in reversed(branches[:-1]):
        out = Par(b, out)
    return out


# --------------------------------------------------------------------------
# Generic traversal (used for stage discipline and path rewriting)
# --------------------------------------------------------------------------


def walk(node) -> Iterator:
    """Pre-order walk over every dataclass node reachable from ``node``."""
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, tuple):
            stack.extend(reversed(n))
            continue
        if not is_dataclass(n):
            continue
        yield n
        for f in reversed(fields(n)):
            stack.append(getattr(n, f.name))


def map_paths(node, fn: Callable):
    """Rebuild ``node`` with every top-level Path ``p`` replaced by ``fn(p)``."""
    if isinstance(node, (BPath, OPath, TPath)):
        return fn(node)
    if isinstance(node, tuple):
        return tuple(map_paths(x, fn) for x in node)
    if not is_dataclass(node):
        return node
    changes = {}
    for f in fields(node):
        v = getattr(node, f.name)
        nv = map_paths(v, fn)
        if nv is not v:
            changes[f.name] = nv
    return replace(node, **changes) if changes else node


class StageError(Exception):
    pass


def stage_of(node) -> Optional[str]:
    """'B', 'O' or 'T' for the kind of paths in ``node``; None if it has none."""
    kinds = set()
    for n in walk(node):
        if isinstance(n, BPath):
            kinds.add("B")
        elif isinstance(n, OPath):
            kinds.add("O")
        elif isinstance(n, TPath):
            kinds.add("T")
    if len(kinds) > 1:
        raise StageError(f"mixed path stages {sorted(kinds)}")
    return kinds.pop() if kinds else None


# --------------------------------------------------------------------------
# Printer for Booster-stage terms (inverse of the frontend parser)
# --------------------------------------------------------------------------

# Expression precedence levels, loosest first.
_P_IMPLIES, _P_OR, _P_AND, _P_NOT, _P_CMP, _P_UNION, _P_ADD, _P_MUL, _P_UNARY, _P_ATOM = range(10)

_BIN_PREC = {
    "=>": _P_IMPLIES, "or": _P_OR, "&": _P_AND,
    "=": _P_CMP, "/=": _P_CMP, "<": _P_CMP, "<=": _P_CMP, ">": _P_CMP, ">=": _P_CMP,
    ":": _P_CMP, "/:": _P_CMP,
    "+": _P_ADD, "-": _P_ADD, "*": _P_MUL,
}


def _str_lit(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def print_path(p: BPath) -> str:
    out = []
    for seg in p.segments:
        text = seg.full_name
        if seg.index is not None:
            text += "[" + print_expr(seg.index) + "]"
        out.append(text)
    return ".".join(out)


def _expr(e: Expression) -> Tuple[str, int]:
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return ("true" if e.value else "false"), _P_ATOM
        if isinstance(e.value, int):
            if e.value < 0:
                return f"-{-e.value}", _P_UNARY
            return str(e.value), _P_ATOM
        return _str_lit(e.value), _P_ATOM
    if isinstance(e, EnumLit):
        return e.member, _P_ATOM
    if isinstance(e, Undefined):
        return "undefined", _P_ATOM
    if isinstance(e, PathExpr):
        if not isinstance(e.path, BPath):
            raise TypeError("only Booster-stage paths are printable")
        return print_path(e.path), _P_ATOM
    if isinstance(e, Unary):
        if e.op == "not":
            return "not " + _wrap(e.operand, _P_NOT), _P_NOT
        if isinstance(e.operand, Lit) and isinstance(e.operand.value, int) \
                and not isinstance(e.operand.value, bool):
            # "-5" would read back as a negative literal
            return f"-({_expr(e.operand)[0]})", _P_UNARY
        return "-" + _wrap(e.operand, _P_ATOM), _P_UNARY
    if isinstance(e, Binary):
        prec = _BIN_PREC[e.op]
        if e.op == "=>":
            # right-associative
            return f"{_wrap(e.left, prec + 1)} => {_wrap(e.right, prec)}", prec
        if prec == _P_CMP:
            return f"{_wrap(e.left, prec + 1)} {e.op} {_wrap(e.right, prec + 1)}", prec
        return f"{_wrap(e.left, prec)} {e.op} {_wrap(e.right, prec + 1)}", prec
    if isinstance(e, Union_):
        return f"{_wrap(e.left, _P_UNION)} \\/ {_wrap(e.right, _P_UNION + 1)}", _P_UNION
    if isinstance(e, Concat):
        return f"{_wrap(e.left, _P_UNION)} ^ {_wrap(e.right, _P_UNION + 1)}", _P_UNION
    if isinstance(e, Card):
        return "#" + _wrap(e.operand, _P_ATOM), _P_UNARY
    if isinstance(e, SeqDisplay):
        return "<" + ", ".join(_wrap(i, _P_ADD) for i in e.items) + ">", _P_ATOM
    if isinstance(e, Ins):
        return f"ins({print_expr(e.seq)}, {print_expr(e.index)}, {print_expr(e.elem)})", _P_ATOM
    if isinstance(e, Extent):
        return f"extent({e.cls})", _P_ATOM
    if isinstance(e, SetOf):
        return f"set({e.name})", _P_ATOM
    if isinstance(e, SeqOf):
        return f"seq({e.name})", _P_ATOM
    if isinstance(e, TypeName):
        return e.name, _P_ATOM
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expression, min_prec: int) -> str:
    text, prec = _expr(e)
    return text if prec >= min_prec else f"({text})"


def print_expr(e: Expression) -> str:
    return _expr(e)[0]


# Substitution precedence levels, loosest first.
_S_SEQ, _S_CHOICE, _S_GUARD, _S_PAR, _S_ATOM = range(5)


def _subst(s: Substitution) -> Tuple[str, int]:
    if isinstance(s, Skip):
        return "skip", _S_ATOM
    if isinstance(s, Assign):
        if not isinstance(s.target, BPath):
            raise TypeError("only Booster-stage paths are printable")
        return f"{print_path(s.target)} := {print_expr(s.source)}", _S_ATOM
    if isinstance(s, Seq):
        return f"{_swrap(s.left, _S_SEQ)} ; {_swrap(s.right, _S_CHOICE)}", _S_SEQ
    if isinstance(s, Choice):
        return f"{_swrap(s.left, _S_CHOICE)} [] {_swrap(s.right, _S_GUARD)}", _S_CHOICE
    if isinstance(s, Par):
        return f"{_swrap(s.left, _S_PAR)} || {_swrap(s.right, _S_ATOM)}", _S_PAR
    if isinstance(s, Guard):
        return f"{print_expr(s.cond)} ==> {_swrap(s.body, _S_GUARD)}", _S_GUARD
    if isinstance(s, (All, Any_)):
        sym = "!" if isinstance(s, All) else "@"
        return f"{sym} {s.var} : {print_expr(s.range)} @ {_swrap(s.body, _S_GUARD)}", _S_GUARD
    raise TypeError(f"not a substitution: {s!r}")


def _swrap(s: Substitution, min_prec: int) -> str:
    text, prec = _subst(s)
    return text if prec >= min_prec else f"({text})"


def print_substitution(s: Substitution) -> str:
    return _subst(s)[0]
