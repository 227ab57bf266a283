"""Small independent parser for the emitted SQL subset, used only by the tests.

Backquoted names in expression position are variables when declared (procedure
parameter or DECLARE) and columns otherwise.
"""

import re

from gsl2sql import sql as S

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<qid>`[^`]*`)
  | (?P<num>\d+)
  | (?P<str>'(?:[^'\\]|\\.|'')*')
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<sym><>|<=|>=|[(),;=<>+\-*])
""", re.VERBOSE)

_PREC = {"OR": 1, "AND": 2, "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "+": 5, "-": 5, "*": 6}


def tokenize(text):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SyntaxError(f"bad character at {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    out.append(("eof", ""))
    return out


def _unstr(tok):
    body = tok[1:-1]
    return re.sub(r"\\(.)|''", lambda m: m.group(1) or "'", body)


class _P:
    def __init__(self, text, variables=()):
        self.toks = tokenize(text)
        self.i = 0
        self.vars = set(variables)

    def peek(self, k=0):
        return self.toks[self.i + k]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text, k=0):
        kind, val = self.peek(k)
        return kind in ("word", "sym") and val.upper() == text

    def accept(self, text):
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            raise SyntaxError(f"expected {text}, found {self.peek()[1]!r}")

    def name(self):
        kind, val = self.next()
        if kind != "qid":
            raise SyntaxError(f"expected a quoted name, found {val!r}")
        return val[1:-1]

    # expressions

    def expr(self, min_prec=0):
        left = self.prefix()
        while True:
            kind, val = self.peek()
            op = val.upper() if kind in ("word", "sym") else None
            if op in _PREC and _PREC[op] >= min_prec:
                self.next()
                left = S.Bin(op, left, self.expr(_PREC[op] + 1))
            elif op == "IS" and 4 >= min_prec:
                self.next()
                neg = self.accept("NOT")
                self.expect("NULL")
                left = S.IsNull(left, neg)
            elif (op == "IN" or (op == "NOT" and self.at("IN", 1))) and 4 >= min_prec:
                neg = self.accept("NOT")
                self.expect("IN")
                self.expect("(")
                q = self.select()
                self.expect(")")
                left = S.In(left, q, neg)
            else:
                return left

    def prefix(self):
        if self.accept("NOT"):
            return S.Not(self.expr(3))
        if self.accept("-"):
            kind, val = self.peek()
            if kind == "num":
                self.next()
                return S.Lit(-int(val))
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return S.Neg(e)
        return self.atom()

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return S.Lit(int(val))
        if kind == "str":
            return S.Lit(_unstr(val))
        if kind == "qid":
            n = val[1:-1]
            return S.Var(n) if n in self.vars else S.Col(n)
        up = val.upper()
        if up == "TRUE":
            return S.TRUE
        if up == "FALSE":
            return S.FALSE
        if up == "NULL":
            return S.Null()
        if up == "COUNT":
            self.expect("(")
            self.expect("*")
            self.expect(")")
            return S.Count()
        if val == "last_insert_id":
            self.expect("(")
            self.expect(")")
            return S.LastInsertId()
        if val == "(":
            if self.at("SELECT"):
                q = self.select()
            else:
                q = self.expr()
            self.expect(")")
            return q
        raise SyntaxError(f"unexpected {val!r} in expression")

    def projection(self):
        if self.accept("*"):
            return ()
        cols = [self.expr()]
        while self.accept(","):
            cols.append(self.expr())
        return tuple(cols)

    def source(self):
        if self.accept("("):
            q = self.select()
            self.expect(")")
            self.expect("AS")
            kind, alias = self.next()
            return S.Derived(q, alias)
        return S.Table(self.name())

    def select(self, into=False):
        self.expect("SELECT")
        cols = self.projection()
        targets = None
        if into and self.accept("INTO"):
            targets = [self.name()]
            while self.accept(","):
                targets.append(self.name())
        self.expect("FROM")
        src = self.source()
        self.expect("WHERE")
        where = self.expr()
        if targets is not None:
            return S.SelectInto(cols, tuple(targets), src, where)
        order = []
        if self.accept("ORDER"):
            self.expect("BY")
            order.append(self.name())
            while self.accept(","):
                order.append(self.name())
        return S.Select(cols, src, where, tuple(order))

    # statements

    def type_text(self):
        kind, val = self.next()
        if self.accept("("):
            n = self.next()[1]
            self.expect(")")
            return f"{val}({n})"
        return val

    def block(self, *enders):
        out = []
        while not any(self.at(e) for e in enders):
            out.append(self.statement())
        return tuple(out)

    def statement(self):
        if self.accept("UPDATE"):
            t = self.name()
            self.expect("SET")
            sets = []
            while True:
                c = self.name()
                self.expect("=")
                sets.append((c, self.expr()))
                if not self.accept(","):
                    break
            self.expect("WHERE")
            st = S.Update(t, tuple(sets), self.expr())
        elif self.accept("INSERT"):
            self.expect("INTO")
            t = self.name()
            self.expect("(")
            cols = []
            while not self.accept(")"):
                cols.append(self.name())
                self.accept(",")
            self.expect("VALUE")
            self.expect("(")
            vals = []
            while not self.accept(")"):
                vals.append(self.expr())
                self.accept(",")
            st = S.Insert(t, tuple(cols), tuple(vals))
        elif self.accept("DELETE"):
            self.expect("FROM")
            t = self.name()
            self.expect("WHERE")
            st = S.Delete(t, self.expr())
        elif self.at("SELECT"):
            st = self.select(into=True)
        elif self.accept("CREATE"):
            self.expect("TEMPORARY")
            self.expect("TABLE")
            n = self.name()
            self.expect("AS")
            st = S.CreateTempTableAs(n, self.select())
        elif self.accept("DROP"):
            for w in ("TEMPORARY", "TABLE", "IF", "EXISTS"):
                self.expect(w)
            st = S.DropTempTableIfExists(self.name())
        elif self.accept("DECLARE"):
            n = self.name()
            if self.accept("CURSOR"):
                self.expect("FOR")
                self.expect("(")
                q = self.select()
                self.expect(")")
                st = S.DeclareCursor(n, q)
            else:
                self.vars.add(n)
                st = S.DeclareVar(n, self.type_text())
        elif self.accept("OPEN"):
            st = S.OpenCursor(self.name())
        elif self.accept("FETCH"):
            c = self.name()
            self.expect("INTO")
            st = S.FetchInto(c, self.name())
        elif self.accept("CLOSE"):
            st = S.CloseCursor(self.name())
        elif self.accept("SET"):
            n = self.name()
            self.expect("=")
            st = S.SetVar(n, self.expr())
        elif self.accept("IF"):
            cond = self.expr()
            self.expect("THEN")
            then = self.block("ELSE", "END")
            orelse = self.block("END") if self.accept("ELSE") else ()
            self.expect("END")
            self.expect("IF")
            st = S.IfThenElse(cond, then, orelse)
        elif self.accept("WHILE"):
            cond = self.expr()
            self.expect("DO")
            body = self.block("END")
            self.expect("END")
            self.expect("WHILE")
            st = S.While(cond, body)
        elif self.accept("SIGNAL"):
            self.expect("SQLSTATE")
            self.next()
            self.expect("SET")
            self.expect("MESSAGE_TEXT")
            self.expect("=")
            st = S.Signal(_unstr(self.next()[1]))
        else:
            raise SyntaxError(f"unexpected {self.peek()[1]!r} at statement start")
        self.expect(";")
        return st

    def procedure(self):
        self.expect("CREATE")
        self.expect("PROCEDURE")
        name = self.name()
        self.expect("(")
        ins, outs = [], []
        while not self.accept(")"):
            mode = self.next()[1].upper()
            n = self.name()
            self.vars.add(n)
            (ins if mode == "IN" else outs).append((n, self.type_text()))
            self.accept(",")
        self.expect("BEGIN")
        body = self.block("END")
        self.expect("END")
        self.expect(";")
        return S.SqlProcedure(name, tuple(ins), tuple(outs), body)

    def done(self, result):
        if self.peek()[0] != "eof":
            raise SyntaxError(f"trailing input at {self.peek()[1]!r}")
        return result


def parse_procedure(text):
    p = _P(text)
    return p.done(p.procedure())


def parse_statements(text, variables=()):
    p = _P(text, variables)
    return p.done(_all_statements(p))


def _all_statements(p):
    out = []
    while p.peek()[0] != "eof":
        out.append(p.statement())
    return tuple(out)


def parse_expr(text, variables=()):
    p = _P(text, variables)
    return p.done(p.expr())
