"""Textual front end: the ``.boo`` model language and GSL operation bodies."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

from . import gsl as g
from .model import (
    BUILTIN_TYPES, OPTIONAL, ONE, SET, SEQ,
    BoosterModel, ClassBase, ClassDecl, IdenProperty, PropertyDecl, SetBase,
    base_name,
)


@dataclass(frozen=True)
class SourceUnit:
    text: str
    origin: str = "<memory>"


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, origin: str = "<memory>"):
        self.message = message
        self.line = line
        self.col = col
        self.origin = origin
        super().__init__(f"{origin}:{line}:{col}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str  # INT, STR, ID, SYM, EOF
    text: str
    value: object
    pos: int


_SYMBOLS = sorted([
    "==>", "-->", ":=", "||", "[]", "\\/", "/=", "/:", "<=", ">=", "=>",
    "(", ")", "[", "]", "{", "}", "<", ">", "=", ":", ";", ".", ",", "#",
    "^", "+", "-", "*", "&", "!", "@",
], key=len, reverse=True)

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+|//[^\n]*)"
    r"|(?P<int>\d+)"
    r'|(?P<str>"(?:[^"\\\n]|\\.)*")'
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*[?!]?)"
    r"|(?P<sym>" + "|".join(re.escape(s) for s in _SYMBOLS) + ")"
)


def tokenize(src: SourceUnit) -> List[Token]:
    text = src.text
    out: List[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = _line_col(text, pos)
            raise ParseError(f"unexpected character {text[pos]!r}", line, col, src.origin)
        kind = m.lastgroup
        tok = m.group()
        if kind == "int":
            out.append(Token("INT", tok, int(tok), pos))
        elif kind == "str":
            body = re.sub(r"\\(.)", r"\1", tok[1:-1])
            out.append(Token("STR", tok, body, pos))
        elif kind == "id":
            # A trailing '!' followed directly by '=' would be an operator we do not
            # support; decorations are always glued to the name.
            out.append(Token("ID", tok, tok, pos))
        elif kind == "sym":
            out.append(Token("SYM", tok, tok, pos))
        pos = m.end()
    out.append(Token("EOF", "", None, len(text)))
    return out


def _line_col(text: str, pos: int) -> Tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


_KEYWORDS = {
    "skip", "this", "not", "or", "and", "true", "false", "undefined", "card",
    "ins", "extent", "set", "seq", "class", "attributes", "operations", "model",
}


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, src: SourceUnit):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0
        self.furthest: Optional[Tuple[int, str]] = None

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("SYM", "ID") and t.text in texts

    def fail(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        if self.furthest is None or tok.pos >= self.furthest[0]:
            self.furthest = (tok.pos, message)
        line, col = _line_col(self.src.text, tok.pos)
        raise ParseError(message, line, col, self.src.origin)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            self.fail(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, allow_deco: bool = False, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "ID" or t.text in _KEYWORDS:
            self.fail(f"expected {what}, found {t.text or 'end of input'!r}")
        if not allow_deco and t.text[-1] in "?!":
            self.fail(f"unexpected decoration on {t.text!r}")
        self.i += 1
        return t.text

    # -- model --------------------------------------------------------------

    def model(self) -> BoosterModel:
        name = "Model"
        if self.accept("model"):
            name = self.ident(what="model name")
        classes: List[ClassDecl] = []
        sets: List[Tuple[str, Tuple[str, ...]]] = []
        while self.tok.kind != "EOF":
            if self.at("set"):
                sets.append(self.value_set())
            elif self.at("class"):
                classes.append(self.class_decl())
            else:
                self.fail(f"expected 'class' or 'set', found {self.tok.text!r}")
        return BoosterModel(name, tuple(classes), tuple(sets))

    def value_set(self) -> Tuple[str, Tuple[str, ...]]:
        self.expect("set")
        name = self.ident(what="value-set name")
        self.expect("=")
        self.expect("{")
        members = [self.ident(what="value-set member")]
        while self.accept(","):
            members.append(self.ident(what="value-set member"))
        self.expect("}")
        return name, tuple(members)

    def class_decl(self) -> ClassDecl:
        self.expect("class")
        name = self.ident(what="class name")
        self.expect("{")
        props: List[PropertyDecl] = []
        ops: List[tuple] = []
        if self.accept("attributes"):
            while self.tok.kind == "ID" and not self.at("operations") and self.peek().text == ":":
                props.append(self.attribute())
        if self.accept("operations"):
            while self.tok.kind == "ID":
                op_name = self.ident(what="operation name")
                self.expect("{")
                body = self.substitution()
                self.expect("}")
                ops.append((op_name, body))
        self.expect("}")
        return ClassDecl(name, tuple(props), tuple(ops))

    def attribute(self) -> PropertyDecl:
        name = self.ident(what="attribute name")
        self.expect(":")
        if self.accept("["):
            target, opp = self.type_ref()
            self.expect("]")
            kind = OPTIONAL
        elif self.at("set", "seq") and self.peek().text == "(":
            kind = SET if self.tok.text == "set" else SEQ
            self.i += 1
            self.expect("(")
            target, opp = self.type_ref()
            self.expect(")")
            self.accept("*")
        else:
            target, opp = self.type_ref()
            kind = SET if self.accept("*") else ONE
        return PropertyDecl(name, kind, target, opp)

    def type_ref(self):
        t = self.tok
        if t.kind != "ID" or t.text in _KEYWORDS or t.text[-1] in "?!":
            self.fail(f"expected a type, found {t.text or 'end of input'!r}")
        self.i += 1
        if t.text in BUILTIN_TYPES:
            return BUILTIN_TYPES[t.text], None
        if self.accept("."):
            prop = self.ident(what="opposite property")
            return ClassBase(t.text), IdenProperty(t.text, prop)
        # Class or value-set: resolved against the declarations afterwards.
        return _Unresolved(t.text), None

    # -- substitutions -------------------------------------------------------

    def substitution(self) -> g.Substitution:
        left = self.choice()
        while self.accept(";"):
            left = g.Seq(left, self.choice())
        return left

    def choice(self) -> g.Substitution:
        left = self.guard_level()
        while self.accept("[]"):
            left = g.Choice(left, self.guard_level())
        return left

    def guard_level(self) -> g.Substitution:
        if self.at("!", "@"):
            all_ = self.tok.text == "!"
            self.i += 1
            var = self.ident(what="bound variable")
            self.expect(":")
            rng = self.expr()
            self.expect("@")
            body = self.guard_level()
            return g.All(var, rng, body) if all_ else g.Any_(var, rng, body)
        if not self._starts_assignment():
            save = self.i
            try:
                cond = self.expr()
                if self.at("==>", "-->"):
                    self.i += 1
                    return g.Guard(cond, self.guard_level())
                self.fail("expected '==>'")
            except ParseError:
                self.i = save
        return self.par()

    def _starts_assignment(self) -> bool:
        # path followed by ':=' with no intervening brackets
        j = self.i
        toks = self.toks
        if toks[j].kind != "ID":
            return False
        depth = 0
        while True:
            t = toks[j]
            if t.kind == "EOF":
                return False
            if t.text == "[" and t.kind == "SYM":
                depth += 1
            elif t.text == "]" and t.kind == "SYM":
                depth -= 1
            elif depth == 0:
                if t.text == ":=":
                    return True
                if t.kind == "ID" or t.text == ".":
                    pass
                else:
                    return False
            j += 1

    def par(self) -> g.Substitution:
        left = self.atom_subst()
        while self.accept("||"):
            left = g.Par(left, self.atom_subst())
        return left

    def atom_subst(self) -> g.Substitution:
        if self.accept("skip"):
            return g.Skip()
        if self.accept("("):
            s = self.substitution()
            self.expect(")")
            return s
        if self.tok.kind == "ID":
            target = self.path()
            self.expect(":=")
            return g.Assign(target, self.expr())
        self.fail(f"expected a substitution, found {self.tok.text or 'end of input'!r}")

    # -- expressions ----------------------------------------------------------

    def expr(self) -> g.Expression:
        return self.implies()

    def implies(self) -> g.Expression:
        left = self.or_()
        if self.accept("=>"):
            return g.Binary("=>", left, self.implies())
        return left

    def or_(self) -> g.Expression:
        left = self.and_()
        while self.accept("or"):
            left = g.Binary("or", left, self.and_())
        return left

    def and_(self) -> g.Expression:
        left = self.not_()
        while self.at("&", "and"):
            self.i += 1
            left = g.Binary("&", left, self.not_())
        return left

    def not_(self) -> g.Expression:
        if self.accept("not"):
            return g.Unary("not", self.not_())
        return self.comparison()

    def comparison(self) -> g.Expression:
        left = self.union()
        if self.at(*g.COMPARE_OPS, *g.MEMBER_OPS):
            op = self.tok.text
            self.i += 1
            return g.Binary(op, left, self.union())
        return left

    def union(self) -> g.Expression:
        left = self.additive()
        while self.at("\\/", "^"):
            op = self.tok.text
            self.i += 1
            right = self.additive()
            left = g.Union_(left, right) if op == "\\/" else g.Concat(left, right)
        return left

    def additive(self) -> g.Expression:
        left = self.mult()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            left = g.Binary(op, left, self.mult())
        return left

    def mult(self) -> g.Expression:
        left = self.unary()
        while self.accept("*"):
            left = g.Binary("*", left, self.unary())
        return left

    def unary(self) -> g.Expression:
        if self.accept("-"):
            if self.tok.kind == "INT":
                v = self.tok.value
                self.i += 1
                return g.Lit(-v)
            return g.Unary("-", self.atom())
        if self.accept("#"):
            return g.Card(self.atom())
        return self.atom()

    def atom(self) -> g.Expression:
        t = self.tok
        if t.kind == "INT":
            self.i += 1
            return g.Lit(t.value)
        if t.kind == "STR":
            self.i += 1
            return g.Lit(t.value)
        if self.accept("true"):
            return g.Lit(True)
        if self.accept("false"):
            return g.Lit(False)
        if self.accept("undefined"):
            return g.Undefined()
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("<"):
            items = []
            if not self.at(">"):
                items.append(self.additive())
                while self.accept(","):
                    items.append(self.additive())
            self.expect(">")
            return g.SeqDisplay(tuple(items))
        if self.at("card") and self.peek().text == "(":
            self.i += 2
            e = self.expr()
            self.expect(")")
            return g.Card(e)
        if self.at("ins") and self.peek().text == "(":
            self.i += 2
            s = self.expr()
            self.expect(",")
            i = self.expr()
            self.expect(",")
            v = self.expr()
            self.expect(")")
            return g.Ins(s, i, v)
        if self.at("extent", "set", "seq") and self.peek().text == "(":
            kw = t.text
            self.i += 2
            name = self.ident(what="type name")
            self.expect(")")
            return {"extent": g.Extent, "set": g.SetOf, "seq": g.SeqOf}[kw](name)
        if t.kind == "ID":
            return g.PathExpr(self.path())
        self.fail(f"expected an expression, found {t.text or 'end of input'!r}")

    def path(self) -> g.BPath:
        segs = [self.segment(first=True)]
        while self.accept("."):
            segs.append(self.segment(first=False))
        return g.BPath(tuple(segs))

    def segment(self, first: bool) -> g.Segment:
        t = self.tok
        if t.kind != "ID" or (t.text in _KEYWORDS and not (first and t.text == "this")):
            self.fail(f"expected a path segment, found {t.text or 'end of input'!r}")
        self.i += 1
        name, deco = t.text, ""
        if name[-1] in "?!":
            name, deco = name[:-1], name[-1]
        index = None
        if self.accept("["):
            index = self.expr()
            self.expect("]")
        return g.Segment(name, deco, index)


@dataclass(frozen=True)
class _Unresolved:
    name: str


def _as_source(src: Union[SourceUnit, str]) -> SourceUnit:
    return src if isinstance(src, SourceUnit) else SourceUnit(src)


def _finish(p: _Parser, result):
    if p.tok.kind != "EOF":
        p.fail(f"unexpected {p.tok.text!r}")
    return result


def parse_model(src: Union[SourceUnit, str]) -> BoosterModel:
    """Parse a model; unresolved names are left for ``validate_model``."""
    p = _Parser(_as_source(src))
    m = _finish(p, p.model())
    set_names = {n for n, _ in m.value_sets}
    classes = []
    for c in m.classes:
        props = []
        for pd in c.properties:
            t = pd.target
            if isinstance(t, _Unresolved):
                t = SetBase(t.name) if t.name in set_names else ClassBase(t.name)
                pd = PropertyDecl(pd.name, pd.kind, t, pd.opposite)
            props.append(pd)
        classes.append(ClassDecl(c.name, tuple(props), c.operations))
    return BoosterModel(m.name, tuple(classes), m.value_sets)


def parse_substitution(src: Union[SourceUnit, str], context: Optional[str] = None) -> g.Substitution:
    p = _Parser(_as_source(src))
    return _finish(p, p.substitution())


def parse_expression(src: Union[SourceUnit, str]) -> g.Expression:
    p = _Parser(_as_source(src))
    return _finish(p, p.expr())


def print_model(m: BoosterModel) -> str:
    lines = [f"model {m.name}", ""]
    for name, members in m.value_sets:
        lines.append(f"set {name} = {{ {', '.join(members)} }}")
    if m.value_sets:
        lines.append("")
    for c in m.classes:
        lines.append(f"class {c.name} {{")
        if c.properties:
            lines.append("  attributes")
            for pd in c.properties:
                lines.append(f"    {pd.name} : {_print_type(pd)}")
        if c.operations:
            lines.append("  operations")
            for op_name, body in c.operations:
                lines.append(f"    {op_name} {{ {g.print_substitution(body)} }}")
        lines.append("}")
        lines.append("")
    return "\n".join(lines)


def _print_type(pd: PropertyDecl) -> str:
    ref = str(pd.opposite) if pd.opposite is not None else base_name(pd.target)
    if pd.kind == OPTIONAL:
        return f"[{ref}]"
    if pd.kind == ONE:
        return ref
    return f"{pd.kind}({ref}) *"
