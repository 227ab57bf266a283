"""Relational semantics of GSL over object states.

A program denotes a finite set of (state, io) results; ``eval_gsl`` computes
that set extensionally. ``this`` is passed through the io map as ``this?``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from . import gsl as g
from .model import (
    ONE, OPTIONAL, SEQ, SET,
    BoolBase, BoosterModel, ClassBase, IntBase, PropertyDecl, SetBase, StrBase,
)
from .paths import is_io_decl, io_decl_name

THIS = "this?"


@dataclass(frozen=True, order=True)
class Obj:
    cls: str
    n: int

    def __str__(self):
        return f"{self.cls}#{self.n}"


# Values: None (undefined), int, str, bool, Obj, frozenset, tuple


class EvalError(Exception):
    pass


class UndefinedDereference(EvalError):
    pass


class IndexOutOfRange(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class WriteConflict(EvalError):
    pass


class RangeError(EvalError):
    pass


def default_value(pd: PropertyDecl):
    if pd.kind == SET:
        return frozenset()
    if pd.kind == SEQ:
        return ()
    return None


class ObjState:
    """Object extents plus property valuations; treated as an immutable value."""

    __slots__ = ("model", "extent", "values", "_key")

    def __init__(self, model: BoosterModel, extent: Mapping[str, FrozenSet[Obj]],
                 values: Mapping[Obj, Mapping[str, object]]):
        self.model = model
        self.extent = dict(extent)
        self.values = {o: dict(v) for o, v in values.items()}
        self._key = None

    @classmethod
    def empty(cls, model: BoosterModel) -> "ObjState":
        return cls(model, {c.name: frozenset() for c in model.classes}, {})

    def key(self):
        if self._key is None:
            ext = tuple(sorted((c, tuple(sorted(os))) for c, os in self.extent.items()))
            vals = tuple(sorted((o, tuple(sorted(v.items()))) for o, v in self.values.items()))
            self._key = (ext, vals)
        return self._key

    def __eq__(self, other):
        return isinstance(other, ObjState) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"ObjState({dump_state(self)!r})"

    def objects(self) -> List[Obj]:
        return sorted(self.values)

    def get(self, o: Obj, prop: str):
        try:
            return self.values[o][prop]
        except KeyError:
            raise EvalError(f"{o} has no property {prop!r}") from None

    def set(self, o: Obj, prop: str, v) -> "ObjState":
        if o not in self.values:
            raise EvalError(f"{o} is not a live object")
        values = dict(self.values)
        values[o] = dict(values[o])
        values[o][prop] = v
        return ObjState._raw(self.model, self.extent, values)

    @classmethod
    def _raw(cls, model, extent, values) -> "ObjState":
        s = cls.__new__(cls)
        s.model = model
        s.extent = extent
        s.values = values
        s._key = None
        return s

    def fresh_id(self, cls_name: str) -> int:
        ids = [o.n for o in self.extent.get(cls_name, ())]
        return max(ids, default=0) + 1

    def add_object(self, cls_name: str, n: Optional[int] = None, **props) -> Tuple["ObjState", Obj]:
        c = self.model.cls(cls_name)
        if c is None:
            raise EvalError(f"unknown class {cls_name}")
        o = Obj(cls_name, self.fresh_id(cls_name) if n is None else n)
        if o in self.values:
            raise EvalError(f"{o} already exists")
        extent = dict(self.extent)
        extent[cls_name] = extent.get(cls_name, frozenset()) | {o}
        values = dict(self.values)
        values[o] = {pd.name: default_value(pd) for pd in c.properties}
        for k, v in props.items():
            if k not in values[o]:
                raise EvalError(f"{cls_name} has no property {k!r}")
            values[o][k] = v
        return ObjState._raw(self.model, extent, values), o


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass
class _Ctx:
    s: ObjState
    io: Mapping[str, object]
    locals: Mapping[str, object]


def _elements(v) -> FrozenSet:
    if v is None:
        return frozenset()
    if isinstance(v, frozenset):
        return v
    if isinstance(v, tuple):
        return frozenset(v)
    return frozenset([v])


def _seq_index(seq, i) -> object:
    if not isinstance(seq, tuple):
        raise TypeMismatch(f"indexing a non-sequence {seq!r}")
    if not isinstance(i, int) or isinstance(i, bool):
        raise TypeMismatch(f"sequence index {i!r} is not an integer")
    if not 1 <= i <= len(seq):
        raise IndexOutOfRange(f"index {i} outside 1..{len(seq)}")
    return seq[i - 1]


def _start_value(ctx: _Ctx, start):
    if isinstance(start, g.ThisRef):
        if THIS not in ctx.io:
            raise EvalError("no current object bound to this?")
        return ctx.io[THIS]
    if isinstance(start, g.IoRef):
        if start.name not in ctx.io:
            raise EvalError(f"unbound input/output {start.name}")
        return ctx.io[start.name]
    if isinstance(start, g.VarRef):
        if start.name not in ctx.locals:
            raise EvalError(f"unbound variable {start.name}")
        return ctx.locals[start.name]
    if isinstance(start, g.SCRef):
        this = _start_value(ctx, g.ThisRef(start.base))
        return _seq_index(ctx.s.get(this, start.prop.prop), _eval(ctx, start.index))
    raise TypeMismatch(f"bad path start {start!r}")


def _deref(ctx: _Ctx, v, step) -> object:
    if v is None:
        raise UndefinedDereference(f"dereferencing undefined at {step.prop}")
    if not isinstance(v, Obj):
        raise TypeMismatch(f"navigation from non-object {v!r}")
    if v not in ctx.s.values:
        raise EvalError(f"{v} is not a live object")
    val = ctx.s.get(v, step.prop.prop)
    if isinstance(step, (g.SCTarget, g.SeqTCAccess)):
        return _seq_index(val, _eval(ctx, step.index))
    return val


def _path_value(ctx: _Ctx, p):
    if isinstance(p, g.BPath):
        raise TypeMismatch("Booster-stage paths must be resolved before evaluation")
    v = _start_value(ctx, g.path_start(p))
    for step in g.path_steps(p):
        v = _deref(ctx, v, step)
    return v


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeMismatch(f"expected an integer, got {v!r}")
    return v


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise TypeMismatch(f"expected a boolean, got {v!r}")
    return v


def _coll(v):
    if not isinstance(v, (frozenset, tuple)):
        raise TypeMismatch(f"expected a collection, got {v!r}")
    return v


def _eval(ctx: _Ctx, e: g.Expression):
    if isinstance(e, g.Lit):
        return e.value
    if isinstance(e, g.EnumLit):
        return e.member
    if isinstance(e, g.Undefined):
        return None
    if isinstance(e, g.PathExpr):
        return _path_value(ctx, e.path)
    if isinstance(e, g.Unary):
        v = _eval(ctx, e.operand)
        return (not _bool(v)) if e.op == "not" else -_int(v)
    if isinstance(e, g.Binary):
        return _binary(ctx, e)
    if isinstance(e, g.Card):
        return len(_coll(_eval(ctx, e.operand)))
    if isinstance(e, g.Union_):
        a, b = _eval(ctx, e.left), _eval(ctx, e.right)
        if not isinstance(a, frozenset) or not isinstance(b, frozenset):
            raise TypeMismatch("union of non-sets")
        return a | b
    if isinstance(e, g.Concat):
        a, b = _eval(ctx, e.left), _eval(ctx, e.right)
        if not isinstance(a, tuple) or not isinstance(b, tuple):
            raise TypeMismatch("concatenation of non-sequences")
        return a + b
    if isinstance(e, g.SeqDisplay):
        return tuple(_eval(ctx, x) for x in e.items)
    if isinstance(e, g.Ins):
        s = _eval(ctx, e.seq)
        i = _int(_eval(ctx, e.index))
        v = _eval(ctx, e.elem)
        if not isinstance(s, tuple):
            raise TypeMismatch("ins on a non-sequence")
        if not 1 <= i <= len(s) + 1:
            raise IndexOutOfRange(f"insertion index {i} outside 1..{len(s) + 1}")
        return s[:i - 1] + (v,) + s[i - 1:]
    if isinstance(e, g.Extent):
        return frozenset(ctx.s.extent.get(e.cls, ()))
    if isinstance(e, g.SetOf):
        members = ctx.s.model.value_set(e.name)
        if members is None:
            raise RangeError(f"set({e.name}) is not a finite value-set")
        return frozenset(members)
    raise TypeMismatch(f"cannot evaluate {e!r}")


def _binary(ctx: _Ctx, e: g.Binary):
    op = e.op
    if op == "&":
        return _bool(_eval(ctx, e.left)) and _bool(_eval(ctx, e.right))
    if op == "or":
        return _bool(_eval(ctx, e.left)) or _bool(_eval(ctx, e.right))
    if op == "=>":
        return (not _bool(_eval(ctx, e.left))) or _bool(_eval(ctx, e.right))
    if is_io_decl(e):
        # typing declaration of an input; outputs are handled by the guard
        return True
    a = _eval(ctx, e.left)
    b = _eval(ctx, e.right)
    if op in ("+", "-", "*"):
        x, y = _int(a), _int(b)
        return x + y if op == "+" else x - y if op == "-" else x * y
    if op == "=":
        return a == b and type(a) is type(b) or (a is None and b is None)
    if op == "/=":
        return not (a == b and type(a) is type(b) or (a is None and b is None))
    if op in (":", "/:"):
        inside = a in _coll(b)
        return inside if op == ":" else not inside
    x, y = a, b
    if not (isinstance(x, int) and isinstance(y, int)) or isinstance(x, bool) or isinstance(y, bool):
        raise TypeMismatch(f"ordering {op!r} on non-integers")
    return {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op]


def eval_expr(s: ObjState, io: Mapping[str, object], locals: Mapping[str, object], e: g.Expression):
    return _eval(_Ctx(s, io, locals), e)


# --------------------------------------------------------------------------
# Substitutions
# --------------------------------------------------------------------------

Result = Tuple[ObjState, Dict[str, object]]
Observer = Callable[[g.Substitution, ObjState, FrozenSet[Obj]], None]


def _io_key(io: Mapping[str, object]):
    return tuple(sorted(io.items()))


def _dedupe(results: Iterable["_Run"]) -> List["_Run"]:
    # equal outcomes reached with different write sets keep the union of them
    seen = {}
    for s, io, w in results:
        k = (s, _io_key(io))
        if k in seen:
            s, io, w0 = seen[k]
            w = w | w0
        seen[k] = (s, io, w)
    return list(seen.values())


def _check_kind(pd: PropertyDecl, v):
    if pd.kind == SET:
        ok = isinstance(v, frozenset)
    elif pd.kind == SEQ:
        ok = isinstance(v, tuple)
    elif pd.kind == ONE:
        ok = v is not None and not isinstance(v, (frozenset, tuple))
    else:
        ok = not isinstance(v, (frozenset, tuple))
    if not ok:
        raise TypeMismatch(f"value {v!r} does not fit {pd.kind} property {pd.name!r}")


def _remove_link(s: ObjState, y: Obj, prop: str, x: Obj) -> ObjState:
    cur = s.get(y, prop)
    if isinstance(cur, frozenset):
        return s.set(y, prop, cur - {x})
    if isinstance(cur, tuple):
        return s.set(y, prop, tuple(e for e in cur if e != x))
    return s.set(y, prop, None) if cur == x else s


def assign_effect(s: ObjState, o: Obj, prop: str, v) -> ObjState:
    """Set ``o.prop`` to ``v`` and restore opposition consistency."""
    pd = s.model.prop(o.cls, prop)
    if pd is None:
        raise EvalError(f"{o.cls} has no property {prop!r}")
    _check_kind(pd, v)
    old = s.get(o, prop)
    if pd.opposite is None:
        return s.set(o, prop, v)
    if isinstance(v, tuple) and len(set(v)) != len(v):
        raise EvalError(f"duplicate element in association sequence {o}.{prop}")
    for y in _elements(v):
        if not isinstance(y, Obj) or y not in s.values or y.cls != pd.opposite.cls:
            raise TypeMismatch(f"{y!r} is not a live {pd.opposite.cls}")
    if old == v:
        return s
    q = pd.opposite.prop
    qd = s.model.prop(pd.opposite.cls, q)
    new = s.set(o, prop, v)
    old_els, new_els = _elements(old), _elements(v)
    for y in sorted(old_els - new_els):
        new = _remove_link(new, y, q, o)
    for y in sorted(new_els - old_els):
        cur = new.get(y, q)
        if qd.kind in (ONE, OPTIONAL):
            if cur is not None and cur != o:
                new = _remove_link(new, cur, prop, y)
            new = new.set(y, q, o)
        elif qd.kind == SET:
            new = new.set(y, q, cur | {o})
        else:
            new = new.set(y, q, cur + (o,))
    return new


def _diff(base: ObjState, s: ObjState) -> Dict[Tuple[Obj, str], object]:
    out = {}
    for o, vals in s.values.items():
        bvals = base.values.get(o)
        for p, v in vals.items():
            if bvals is None or p not in bvals or bvals[p] != v or type(bvals[p]) is not type(v):
                out[(o, p)] = v
    return out


def _merge(base: Result, parts: List["_Run"]) -> "_Run":
    """Combine independent branches; writing one location twice needs equal values.

    A write counts even when it leaves the value unchanged, so the write
    sets carried with each branch decide conflicts rather than state diffs.
    """
    s0, io0 = base
    writes: Dict[Tuple[Obj, str], object] = {}
    new_objs = {}
    io = dict(io0)
    touched: FrozenSet[Tuple[Obj, str]] = frozenset()
    for s, pio, pw in parts:
        for o in s.values:
            if o not in s0.values:
                new_objs[o] = s.values[o]
        changed = _diff(s0, s)
        for k in sorted(set(changed) | pw):
            v = s.values[k[0]][k[1]]
            if k in writes and (writes[k] != v or type(writes[k]) is not type(v)):
                raise WriteConflict(f"parallel branches write different values to {k[0]}.{k[1]}")
            writes[k] = v
        touched = touched | pw | frozenset(changed)
        for n, v in pio.items():
            if n in io0 and io0[n] == v:
                continue
            if n in io and n not in io0 and io[n] != v:
                raise WriteConflict(f"parallel branches bind {n} differently")
            io[n] = v
    extent = dict(s0.extent)
    values = dict(s0.values)
    for o, vals in new_objs.items():
        extent[o.cls] = extent.get(o.cls, frozenset()) | {o}
        values[o] = dict(vals)
    for (o, p), v in writes.items():
        if values[o] is s0.values.get(o):
            values[o] = dict(values[o])
        values[o][p] = v
    return ObjState._raw(s0.model, extent, values), io, touched


# internal outcome: state, io and the locations written on the way
_Run = Tuple[ObjState, Dict[str, object], FrozenSet[Tuple[Obj, str]]]


class _Interp:
    def __init__(self, observer: Optional[Observer]):
        self.observer = observer
        self.created: set = set()

    def run(self, s: ObjState, io: Dict[str, object], locals: Dict[str, object],
            prog: g.Substitution) -> List[_Run]:
        out = self._run(s, io, locals, prog)
        if self.observer is not None:
            for rs, _, _ in out:
                self.observer(prog, rs, frozenset(self.created))
        return out

    def _run(self, s, io, locals, prog) -> List[_Run]:
        if isinstance(prog, g.Skip):
            return [(s, io, frozenset())]
        if isinstance(prog, g.Assign):
            ctx = _Ctx(s, io, locals)
            prefix = g.path_prefix(prog.target)
            last = g.path_last(prog.target)
            if prefix is None or isinstance(last, (g.SCTarget, g.SeqTCAccess)):
                raise EvalError("assignment target must end in a property")
            o = _path_value(ctx, prefix)
            if o is None:
                raise UndefinedDereference(f"assignment through undefined at {last.prop}")
            if not isinstance(o, Obj):
                raise TypeMismatch(f"assignment to a property of non-object {o!r}")
            v = _eval(ctx, prog.source)
            s1 = assign_effect(s, o, last.prop.prop, v)
            return [(s1, io, frozenset(_diff(s, s1)) | {(o, last.prop.prop)})]
        if isinstance(prog, g.Guard):
            return self._guard(s, io, locals, prog)
        if isinstance(prog, g.Par):
            lefts = self.run(s, io, locals, prog.left)
            rights = self.run(s, io, locals, prog.right)
            return _dedupe(_merge((s, io), [a, b]) for a, b in product(lefts, rights))
        if isinstance(prog, g.Seq):
            out = []
            for s1, io1, w1 in self.run(s, io, locals, prog.left):
                out += [(s2, io2, w1 | w2) for s2, io2, w2 in self.run(s1, io1, locals, prog.right)]
            return _dedupe(out)
        if isinstance(prog, g.Choice):
            return _dedupe(self.run(s, io, locals, prog.left) + self.run(s, io, locals, prog.right))
        if isinstance(prog, (g.All, g.Any_)):
            rng = _eval(_Ctx(s, io, locals), prog.range)
            if not isinstance(rng, (frozenset, tuple)):
                raise RangeError(f"range of {prog.var} is not a finite collection")
            elems = sorted(set(rng), key=_value_key)
            per = [self.run(s, io, {**locals, prog.var: x}, prog.body) for x in elems]
            if isinstance(prog, g.All):
                return _dedupe(_merge((s, io), list(combo)) for combo in product(*per))
            if not elems:
                return [(s, io, frozenset())]
            return _dedupe([r for rs in per for r in rs])
        raise EvalError(f"not a substitution: {prog!r}")

    def _guard(self, s, io, locals, prog: g.Guard) -> List[_Run]:
        creates = []
        rest = []
        for c in g.conjuncts(prog.cond):
            if is_io_decl(c) and io_decl_name(c).endswith("!"):
                if not isinstance(c.right, g.Extent):
                    raise EvalError(f"output {io_decl_name(c)} must be declared as a new object")
                creates.append((io_decl_name(c), c.right.cls))
            else:
                rest.append(c)
        if not _bool(_eval(_Ctx(s, io, locals), g.conj(*rest))):
            return [(s, io, frozenset())]
        io2 = dict(io)
        for name, cls_name in creates:
            s, o = s.add_object(cls_name)
            self.created.add(o)
            io2[name] = o
        return self.run(s, io2, locals, prog.body)


def _value_key(v):
    if v is None:
        return (0, "")
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, int):
        return (2, v)
    if isinstance(v, str):
        return (3, v)
    if isinstance(v, Obj):
        return (4, v.cls, v.n)
    return (5, repr(v))


def eval_gsl(s: ObjState, io: Mapping[str, object], prog: g.Substitution,
             observer: Optional[Observer] = None) -> List[Result]:
    """All (state, io) pairs reachable by ``prog`` from ``(s, io)``."""
    return [(rs, rio) for rs, rio, _ in _Interp(observer).run(s, dict(io), {}, prog)]


# --------------------------------------------------------------------------
# State invariants
# --------------------------------------------------------------------------


def _base_ok(s: ObjState, pd: PropertyDecl, x) -> bool:
    t = pd.target
    if isinstance(t, ClassBase):
        return isinstance(x, Obj) and x.cls == t.name
    if isinstance(t, IntBase):
        return isinstance(x, int) and not isinstance(x, bool)
    if isinstance(t, BoolBase):
        return isinstance(x, bool)
    if isinstance(t, StrBase):
        return isinstance(x, str)
    if isinstance(t, SetBase):
        return isinstance(x, str) and x in (s.model.value_set(t.name) or ())
    return False


def check_state(s: ObjState, under_construction: FrozenSet[Obj] = frozenset()) -> List[str]:
    """Violated state invariants, each prefixed by its category.

    Objects in ``under_construction`` may still lack a value for ``one``
    properties (they are being built by the running operation).
    """
    m = s.model
    bad: List[str] = []
    if set(s.extent) != set(m.class_names()):
        bad.append(f"extent-domain: extent covers {sorted(s.extent)}, classes are {sorted(m.class_names())}")
    live = set()
    for c, objs in s.extent.items():
        for o in objs:
            if o.cls != c:
                bad.append(f"extent-domain: {o} listed under {c}")
            live.add(o)
    if live != set(s.values):
        bad.append("extent-domain: valuation and extents disagree on live objects")
    for o in sorted(s.values):
        c = m.cls(o.cls)
        if c is None:
            continue
        vals = s.values[o]
        if set(vals) != {pd.name for pd in c.properties}:
            bad.append(f"valuation-domain: {o} has properties {sorted(vals)}")
            continue
        for pd in c.properties:
            v = vals[pd.name]
            where = f"{o}.{pd.name}"
            if pd.kind == SET:
                if not isinstance(v, frozenset):
                    bad.append(f"kind: {where} is not a set")
                    continue
                els = list(v)
            elif pd.kind == SEQ:
                if not isinstance(v, tuple):
                    bad.append(f"kind: {where} is not a sequence")
                    continue
                els = list(v)
                if pd.opposite is not None and len(set(v)) != len(v):
                    bad.append(f"kind: {where} repeats an associated object")
            else:
                if v is None:
                    if pd.kind == ONE and o not in under_construction:
                        bad.append(f"kind: {where} is undefined but required")
                    els = []
                elif isinstance(v, (frozenset, tuple)):
                    bad.append(f"kind: {where} holds a collection")
                    continue
                else:
                    els = [v]
            for x in els:
                if not _base_ok(s, pd, x):
                    bad.append(f"kind: {where} holds {x!r}")
                elif isinstance(x, Obj) and x not in live:
                    bad.append(f"referential: {where} refers to dead {x}")
            if pd.opposite is not None:
                q = pd.opposite.prop
                for x in els:
                    if isinstance(x, Obj) and x in live and o not in _elements(s.values[x].get(q)):
                        bad.append(f"opposition: {o} in {where} but not in {x}.{q}")
    return bad


# --------------------------------------------------------------------------
# Line-oriented serialization
# --------------------------------------------------------------------------


def format_value(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, Obj):
        return str(v)
    if isinstance(v, frozenset):
        return "{" + ", ".join(format_value(x) for x in sorted(v, key=_value_key)) + "}"
    if isinstance(v, tuple):
        return "<" + ", ".join(format_value(x) for x in v) + ">"
    raise TypeError(v)


def dump_state(s: ObjState) -> str:
    lines = []
    for c in sorted(s.extent):
        ids = " ".join(str(o.n) for o in sorted(s.extent[c]))
        lines.append(f"extent {c}" + (f" {ids}" if ids else ""))
    for o in sorted(s.values):
        for p in sorted(s.values[o]):
            lines.append(f"{o}.{p} = {format_value(s.values[o][p])}")
    return "\n".join(lines)


def dump_io(io: Mapping[str, object]) -> str:
    return "\n".join(f"io {n} = {format_value(v)}" for n, v in sorted(io.items()))


_VAL_TOKEN = re.compile(r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<obj>[A-Za-z_]\w*#\d+)|(?P<int>-?\d+)'
                        r'|(?P<word>[A-Za-z_]\w*)|(?P<sym>[{}<>,]))')


def parse_value(text: str):
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _VAL_TOKEN.match(text, pos)
        if m is None:
            raise ValueError(f"bad value text {text!r} at {pos}")
        toks.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    val, i = _parse_val(toks, 0)
    if i != len(toks):
        raise ValueError(f"trailing text in value {text!r}")
    return val


def _parse_val(toks, i):
    kind, t = toks[i]
    if kind == "str":
        return json.loads(t), i + 1
    if kind == "obj":
        c, n = t.split("#")
        return Obj(c, int(n)), i + 1
    if kind == "int":
        return int(t), i + 1
    if kind == "word":
        if t in ("true", "false"):
            return t == "true", i + 1
        if t == "undefined":
            return None, i + 1
        raise ValueError(f"unknown word {t!r}")
    close = {"{": "}", "<": ">"}.get(t)
    if close is None:
        raise ValueError(f"unexpected {t!r}")
    items = []
    i += 1
    if toks[i][1] != close:
        while True:
            v, i = _parse_val(toks, i)
            items.append(v)
            if toks[i][1] == ",":
                i += 1
                continue
            break
    if toks[i][1] != close:
        raise ValueError(f"expected {close!r}")
    return (frozenset(items) if t == "{" else tuple(items)), i + 1


def load_state(text: str, model: BoosterModel) -> Tuple[ObjState, Dict[str, object]]:
    """Parse a state dump (and any ``io`` lines) against ``model``."""
    s = ObjState.empty(model)
    io: Dict[str, object] = {}
    pending = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        if line.startswith("extent "):
            parts = line.split()
            for n in parts[2:]:
                s, _ = s.add_object(parts[1], int(n))
        elif line.startswith("io "):
            name, _, val = line[3:].partition("=")
            io[name.strip()] = parse_value(val)
        else:
            lhs, _, val = line.partition("=")
            obj, _, prop = lhs.strip().partition(".")
            c, n = obj.split("#")
            pending.append((Obj(c, int(n)), prop, parse_value(val)))
    for o, p, v in pending:
        if o not in s.values or p not in s.values[o]:
            raise ValueError(f"{o}.{p} is not a declared property of a live object")
        s = s.set(o, p, v)
    return s, io
