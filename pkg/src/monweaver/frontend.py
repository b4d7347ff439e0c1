"""Parsing, desugaring and validation for .imon / .emon sources.

``parse_monitor`` accepts the implicit language (with structured ``if`` /
``while`` sugar and ``x++`` / ``x--``), ``parse_explicit`` the explicit one.
``desugar`` lowers sugar to labeled goto form and gives guardless leading
statements an implicit ``waituntil(true)`` region.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    ArrayAssign,
    Assign,
    AtomicGet,
    AtomicUpdate,
    Binary,
    BoolLit,
    Ccr,
    CondGoto,
    CondVarDecl,
    CondVarOp,
    Expr,
    ExplicitMethod,
    ExplicitMonitorAst,
    FieldDecl,
    Goto,
    If,
    ImplicitMethod,
    IncDec,
    Index,
    IntLit,
    Labeled,
    Len,
    LockDecl,
    LockOp,
    MonitorAst,
    Name,
    Param,
    SignalDirective,
    Skip,
    Stmt,
    TRUE,
    Unary,
    Waituntil,
    While,
)


class ParseError(Exception):
    """Syntax or validation error with source position."""

    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\.\.|\+\+|--|->|:=|==|!=|<=|>=|&&|\|\||[-+*/%<>!=(){}\[\],;:.])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "monitor",
    "int",
    "array",
    "of",
    "waituntil",
    "skip",
    "goto",
    "if",
    "else",
    "while",
    "true",
    "false",
    "len",
    "signal",
    "broadcast",
    "Lock",
    "CondVar",
    "Atomic",
    "new",
}


@dataclass
class Token:
    kind: str  # "num" | "id" | "op" | "eof"
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(Token(kind, text, line, m.start() - line_start + 1))
        line += text.count("\n")
        if "\n" in text:
            line_start = m.start() + text.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, src: str, explicit: bool):
        self.toks = tokenize(src)
        self.i = 0
        self.explicit = explicit

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return self.next()

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "id" or t.text in KEYWORDS:
            raise ParseError(f"expected identifier, found {t.text!r}", t.line, t.col)
        return self.next().text

    def err(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    # -- types --------------------------------------------------------------

    def domain(self) -> tuple[int, int]:
        self.expect("int")
        self.expect("[")
        lo = int(self.expect_num())
        self.expect("..")
        hi = int(self.expect_num())
        self.expect("]")
        if lo > hi:
            raise self.err(f"empty domain int[{lo}..{hi}]")
        return lo, hi

    def expect_num(self) -> str:
        neg = self.accept("-")
        t = self.peek()
        if t.kind != "num":
            raise ParseError(f"expected integer, found {t.text!r}", t.line, t.col)
        self.next()
        return ("-" if neg else "") + t.text

    # -- expressions (precedence climbing) ----------------------------------

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.at("||"):
            self.next()
            e = Binary("||", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.cmp_expr()
        while self.at("&&"):
            self.next()
            e = Binary("&&", e, self.cmp_expr())
        return e

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        if self.peek().text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.next().text
            e = Binary(op, e, self.add_expr())
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = Binary(op, e, self.mul_expr())
        return e

    def mul_expr(self) -> Expr:
        e = self.unary_expr()
        while self.peek().text in ("*", "/", "%"):
            op = self.next().text
            e = Binary(op, e, self.unary_expr())
        return e

    def unary_expr(self) -> Expr:
        if self.at("-"):
            self.next()
            return Unary("-", self.unary_expr())
        if self.at("!"):
            self.next()
            return Unary("!", self.unary_expr())
        return self.primary()

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return IntLit(int(t.text))
        if t.text == "true":
            self.next()
            return BoolLit(True)
        if t.text == "false":
            self.next()
            return BoolLit(False)
        if t.text == "len":
            self.next()
            self.expect("(")
            arr = self.ident()
            self.expect(")")
            return Len(arr)
        if t.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id" and t.text not in KEYWORDS:
            name = self.ident()
            if self.at("["):
                self.next()
                idx = self.expr()
                self.expect("]")
                return Index(name, idx)
            if self.explicit and self.at(".") and self.peek(1).text == "get":
                self.next()
                self.next()
                self.expect("(")
                self.expect(")")
                return AtomicGet(name)
            return Name(name)
        raise ParseError(f"expected expression, found {t.text!r}", t.line, t.col)

    # -- statements ----------------------------------------------------------

    def block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        out = []
        while not self.at("}"):
            out.append(self.stmt(top_level=False))
        self.expect("}")
        return tuple(out)

    def stmt(self, top_level: bool) -> Stmt:
        t = self.peek()
        if t.text == "skip":
            self.next()
            self.expect(";")
            return Skip()
        if t.text == "waituntil":
            if not top_level or self.explicit:
                raise ParseError("waituntil only heads a CCR", t.line, t.col)
            self.next()
            self.expect("(")
            pred = self.expr()
            self.expect(")")
            self.expect(";")
            return Waituntil(pred)
        if t.text == "goto":
            self.next()
            label = self.ident()
            self.expect(";")
            return Goto(label)
        if t.text == "if":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            if self.at("goto"):
                self.next()
                label = self.ident()
                self.expect(";")
                return CondGoto(cond, label)
            then = self.block()
            els: tuple[Stmt, ...] = ()
            if self.accept("else"):
                els = self.block()
            return If(cond, then, els)
        if t.text == "while":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.block()
            return While(cond, body)
        if t.text in ("signal", "broadcast"):
            self.next()
            self.expect("(")
            pred = self.expr()
            self.expect(",")
            cond = self.expr()
            self.expect(")")
            self.expect(";")
            return SignalDirective(t.text, pred, cond)
        if t.kind == "id" and t.text not in KEYWORDS:
            # label, assignment, ++/--, array store, or explicit-only calls
            nxt = self.peek(1).text
            if nxt == ":":
                label = self.ident()
                self.next()
                inner = self.stmt(top_level=False)
                if isinstance(inner, (Labeled, Waituntil)):
                    raise ParseError("label must prefix a plain statement", t.line, t.col)
                return Labeled(label, inner)
            if nxt == "++" or nxt == "--":
                name = self.ident()
                delta = 1 if self.next().text == "++" else -1
                self.expect(";")
                return IncDec(name, delta)
            if nxt == "[":
                arr = self.ident()
                self.expect("[")
                idx = self.expr()
                self.expect("]")
                self.expect(":=")
                val = self.expr()
                self.expect(";")
                return ArrayAssign(arr, idx, val)
            if nxt == "." and self.explicit:
                obj = self.ident()
                self.expect(".")
                op = self.ident_or_kw()
                self.expect("(")
                self.expect(")")
                self.expect(";")
                if op in ("lock", "unlock"):
                    return LockOp(obj, op)
                if op in ("await", "signal", "signalAll"):
                    return CondVarOp(obj, op)
                raise ParseError(f"unknown method call .{op}()", t.line, t.col)
            if nxt == ":=":
                dest = self.ident()
                self.expect(":=")
                if (
                    self.explicit
                    and self.peek().kind == "id"
                    and self.peek(1).text == "."
                    and self.peek(2).text == "update"
                ):
                    name = self.ident()
                    self.expect(".")
                    self.next()  # update
                    self.expect("(")
                    param = self.ident()
                    self.expect("->")
                    body = self.expr()
                    self.expect(")")
                    self.expect(";")
                    return AtomicUpdate(dest, name, param, body)
                val = self.expr()
                self.expect(";")
                return Assign(dest, val)
        raise ParseError(f"expected statement, found {t.text!r}", t.line, t.col)

    def ident_or_kw(self) -> str:
        t = self.peek()
        if t.kind != "id":
            raise ParseError(f"expected name, found {t.text!r}", t.line, t.col)
        return self.next().text

    # -- declarations --------------------------------------------------------

    def field_decl(self, atomic: bool) -> FieldDecl:
        if self.accept("array"):
            self.expect("[")
            length = int(self.expect_num())
            self.expect("]")
            self.expect("of")
            lo, hi = self.domain()
            if atomic:
                raise self.err("arrays cannot be atomic")
        else:
            lo, hi = self.domain()
            length = None
        if atomic:
            self.expect("]")
        name = self.ident()
        self.expect(":=")
        init = int(self.expect_num())
        self.expect(";")
        if not (lo <= init <= hi):
            raise self.err(f"initial value {init} outside domain of {name}")
        return FieldDecl(name, lo, hi, length, init, atomic)

    def params(self) -> tuple[Param, ...]:
        self.expect("(")
        out = []
        while not self.at(")"):
            if out:
                self.expect(",")
            lo, hi = self.domain()
            out.append(Param(self.ident(), lo, hi))
        self.expect(")")
        return tuple(out)

    def implicit_method(self) -> ImplicitMethod:
        name = self.ident()
        params = self.params()
        self.expect("{")
        # split the body into CCRs at top-level waituntils
        ccrs: list[tuple[Expr | None, list[Stmt]]] = []
        current: tuple[Expr | None, list[Stmt]] | None = None
        while not self.at("}"):
            s = self.stmt(top_level=True)
            if isinstance(s, Waituntil):
                if current is not None:
                    ccrs.append(current)
                current = (s.pred, [])
            else:
                if current is None:
                    current = (None, [])  # implicit true guard
                current[1].append(s)
        if current is not None:
            ccrs.append(current)
        self.expect("}")
        if not ccrs:
            raise self.err(f"method {name} has an empty body")
        return ImplicitMethod(
            name,
            params,
            tuple(Ccr(g if g is not None else TRUE, tuple(body)) for g, body in ccrs),
        )

    def explicit_method(self) -> ExplicitMethod:
        name = self.ident()
        params = self.params()
        body = self.block()
        return ExplicitMethod(name, params, body)

    # -- monitors -------------------------------------------------------------

    def implicit_monitor(self) -> MonitorAst:
        self.expect("monitor")
        name = self.ident()
        self.expect("{")
        fields: list[FieldDecl] = []
        methods: list[ImplicitMethod] = []
        while not self.at("}"):
            if self.peek().text in ("int", "array"):
                fields.append(self.field_decl(atomic=False))
            else:
                methods.append(self.implicit_method())
        self.expect("}")
        self.expect_eof()
        return MonitorAst(name, tuple(fields), tuple(methods))

    def explicit_monitor(self) -> ExplicitMonitorAst:
        self.expect("monitor")
        name = self.ident()
        self.expect("{")
        locks: list[LockDecl] = []
        condvars: list[CondVarDecl] = []
        fields: list[FieldDecl] = []
        methods: list[ExplicitMethod] = []
        while not self.at("}"):
            if self.accept("Lock"):
                lname = self.ident()
                self.expect(":=")
                self.expect("new")
                self.expect("Lock")
                self.expect("(")
                self.expect(")")
                self.expect(";")
                locks.append(LockDecl(lname))
            elif self.accept("CondVar"):
                cname = self.ident()
                self.expect(":=")
                lname = self.ident()
                self.expect(".")
                kw = self.ident_or_kw()
                if kw != "newCondVar":
                    raise self.err("expected newCondVar()")
                self.expect("(")
                self.expect(")")
                self.expect(";")
                condvars.append(CondVarDecl(cname, lname))
            elif self.accept("Atomic"):
                self.expect("[")
                fields.append(self.field_decl(atomic=True))
            elif self.peek().text in ("int", "array"):
                fields.append(self.field_decl(atomic=False))
            else:
                methods.append(self.explicit_method())
        self.expect("}")
        self.expect_eof()
        return ExplicitMonitorAst(name, tuple(locks), tuple(condvars), tuple(fields), tuple(methods))

    def expect_eof(self) -> None:
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input {t.text!r}", t.line, t.col)


def parse_monitor(src: str) -> MonitorAst:
    """Parse implicit-monitor source.  Raises ParseError with position."""
    return _Parser(src, explicit=False).implicit_monitor()


def parse_explicit(src: str) -> ExplicitMonitorAst:
    """Parse explicit-monitor source (.emon)."""
    ast = _Parser(src, explicit=True).explicit_monitor()
    _validate_explicit(ast)
    return ast


# ---------------------------------------------------------------------------
# Desugaring
# ---------------------------------------------------------------------------


class _FreshLabels:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.n = 0

    def fresh(self, hint: str) -> str:
        while True:
            cand = f"__{hint}{self.n}"
            self.n += 1
            if cand not in self.taken:
                self.taken.add(cand)
                return cand


def _collect_labels(stmts: tuple[Stmt, ...]) -> set[str]:
    out: set[str] = set()
    for s in stmts:
        if isinstance(s, Labeled):
            out.add(s.label)
            s = s.stmt
        if isinstance(s, (If, While)):
            for sub in (s.then, s.els) if isinstance(s, If) else (s.body,):
                out |= _collect_labels(sub)
    return out


def _lower(stmts: tuple[Stmt, ...], fresh: _FreshLabels) -> list[Stmt]:
    out: list[Stmt] = []
    for s in stmts:
        label = None
        if isinstance(s, Labeled):
            label, s = s.label, s.stmt
        lowered = _lower_one(s, fresh)
        if label is not None:
            lowered[0] = Labeled(label, lowered[0])
        out.extend(lowered)
    return out


def _negate(e: Expr) -> Expr:
    return Unary("!", e)


def _lower_one(s: Stmt, fresh: _FreshLabels) -> list[Stmt]:
    if isinstance(s, IncDec):
        op = "+" if s.delta > 0 else "-"
        return [Assign(s.target, Binary(op, Name(s.target), IntLit(1)))]
    if isinstance(s, If):
        # if (!c) goto else; then...; goto end; else: ...; end: skip
        if s.els:
            l_else = fresh.fresh("else")
            l_end = fresh.fresh("fi")
            out = [CondGoto(_negate(s.cond), l_else)]
            out += _lower(s.then, fresh)
            out.append(Goto(l_end))
            els = _lower(s.els, fresh) or [Skip()]
            els[0] = Labeled(l_else, els[0])
            out += els
            out.append(Labeled(l_end, Skip()))
            return out
        l_end = fresh.fresh("fi")
        out = [CondGoto(_negate(s.cond), l_end)]
        out += _lower(s.then, fresh)
        out.append(Labeled(l_end, Skip()))
        return out
    if isinstance(s, While):
        l_head = fresh.fresh("loop")
        l_end = fresh.fresh("done")
        out: list[Stmt] = [Labeled(l_head, CondGoto(_negate(s.cond), l_end))]
        out += _lower(s.body, fresh)
        out.append(Goto(l_head))
        out.append(Labeled(l_end, Skip()))
        return out
    if isinstance(s, (If, While, IncDec)):  # pragma: no cover - handled above
        raise AssertionError
    return [s]


def desugar(ast: MonitorAst) -> MonitorAst:
    """Lower structured sugar to goto form and validate the result.

    Postconditions: every CCR has an explicit guard, bodies contain only
    skip / assignments / gotos / signal directives, goto targets resolve
    within their own CCR, and all statements are reachable.
    """
    methods = []
    for m in ast.methods:
        ccrs = []
        for ccr in m.ccrs:
            fresh = _FreshLabels(_collect_labels(ccr.body))
            body = tuple(_lower(ccr.body, fresh))
            ccrs.append(Ccr(ccr.guard, body))
        methods.append(ImplicitMethod(m.name, m.params, tuple(ccrs)))
    lowered = MonitorAst(ast.name, ast.fields, tuple(methods))
    validate(lowered)
    return lowered


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _expr_names(e: Expr) -> set[str]:
    if isinstance(e, (IntLit, BoolLit)):
        return set()
    if isinstance(e, Name):
        return {e.ident}
    if isinstance(e, (Len, AtomicGet)):
        return {e.array if isinstance(e, Len) else e.name}
    if isinstance(e, Index):
        return {e.array} | _expr_names(e.index)
    if isinstance(e, Unary):
        return _expr_names(e.operand)
    if isinstance(e, Binary):
        return _expr_names(e.left) | _expr_names(e.right)
    raise TypeError(repr(e))


def _check_names(e: Expr, known: set[str], arrays: set[str], where: str) -> None:
    for n in _expr_names(e):
        if n not in known:
            raise ParseError(f"unknown name {n!r} in {where}")
    if isinstance(e, Index) and e.array not in arrays:
        raise ParseError(f"{e.array!r} indexed but not an array in {where}")
    if isinstance(e, Len) and e.array not in arrays:
        raise ParseError(f"len() of non-array {e.array!r} in {where}")
    for sub in _subexprs(e):
        _check_names(sub, known, arrays, where)


def _subexprs(e: Expr) -> list[Expr]:
    if isinstance(e, Index):
        return [e.index]
    if isinstance(e, Unary):
        return [e.operand]
    if isinstance(e, Binary):
        return [e.left, e.right]
    return []


def method_locals(m: ImplicitMethod, field_names: set[str]) -> set[str]:
    """Names assigned anywhere in the method that are not fields."""
    out: set[str] = set()
    for ccr in m.ccrs:
        for s in ccr.body:
            if isinstance(s, Labeled):
                s = s.stmt
            if isinstance(s, Assign) and s.target not in field_names:
                out.add(s.target)
    return out


def validate(ast: MonitorAst) -> None:
    """Check a desugared monitor: name resolution, goto targets, domains."""
    field_names = {f.name for f in ast.fields}
    arrays = {f.name for f in ast.fields if f.is_array}
    if len(field_names) != len(ast.fields):
        raise ParseError("duplicate field name")
    if len({m.name for m in ast.methods}) != len(ast.methods):
        raise ParseError("duplicate method name")
    for m in ast.methods:
        params = {p.name for p in m.params}
        if params & field_names:
            raise ParseError(f"parameter shadows field in {m.name}")
        locals_ = method_locals(m, field_names)
        known = field_names | params | locals_
        for k, ccr in enumerate(m.ccrs):
            where = f"{m.name} ccr {k + 1}"
            _check_names(ccr.guard, known, arrays, where)
            labels: set[str] = set()
            for s in ccr.body:
                if isinstance(s, Labeled):
                    if s.label in labels:
                        raise ParseError(f"duplicate label {s.label!r} in {where}")
                    labels.add(s.label)
            for s in ccr.body:
                if isinstance(s, Labeled):
                    s = s.stmt
                if isinstance(s, (Goto, CondGoto)) and s.label not in labels:
                    raise ParseError(f"goto target {s.label!r} does not resolve within {where}")
                if isinstance(s, Assign):
                    _check_names(s.value, known, arrays, where)
                elif isinstance(s, ArrayAssign):
                    if s.array not in arrays:
                        raise ParseError(f"store to non-array {s.array!r} in {where}")
                    _check_names(s.index, known, arrays, where)
                    _check_names(s.value, known, arrays, where)
                elif isinstance(s, CondGoto):
                    _check_names(s.cond, known, arrays, where)
                elif isinstance(s, SignalDirective):
                    _check_names(s.pred, known, arrays, where)
                    _check_names(s.cond, known, arrays, where)
                elif isinstance(s, (If, While, IncDec, Waituntil)):
                    raise ParseError(f"unlowered statement in {where}; run desugar first")


def _validate_explicit(ast: ExplicitMonitorAst) -> None:
    lock_names = {l.name for l in ast.locks}
    cv_names = {c.name for c in ast.condvars}
    for c in ast.condvars:
        if c.lock not in lock_names:
            raise ParseError(f"condvar {c.name} references unknown lock {c.lock}")
    for m in ast.methods:
        for s in m.body:
            if isinstance(s, Labeled):
                s = s.stmt
            if isinstance(s, LockOp) and s.lock not in lock_names:
                raise ParseError(f"unknown lock {s.lock!r} in {m.name}")
            if isinstance(s, CondVarOp) and s.cv not in cv_names:
                raise ParseError(f"unknown condvar {s.cv!r} in {m.name}")
            if isinstance(s, AtomicUpdate):
                f = ast.field(s.name)
                if f is None or not f.atomic:
                    raise ParseError(f"update of non-atomic {s.name!r} in {m.name}")


# ---------------------------------------------------------------------------
# Access paths and read/write sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccessPath:
    """A monitor-state location: a scalar field or an array cell.

    ``index`` is None for scalars, an int for a constant cell, or "*" when
    the cell is determined only at run time.
    """

    base: str
    index: int | str | None = None

    def __str__(self) -> str:
        if self.index is None:
            return self.base
        return f"{self.base}[{self.index}]"

    def overlaps(self, other: "AccessPath") -> bool:
        if self.base != other.base:
            return False
        if self.index is None or other.index is None:
            return self.index == other.index
        if self.index == "*" or other.index == "*":
            return True
        return self.index == other.index


def _expr_reads(e: Expr, field_names: set[str]) -> set[AccessPath]:
    out: set[AccessPath] = set()
    if isinstance(e, Name):
        if e.ident in field_names:
            out.add(AccessPath(e.ident))
    elif isinstance(e, AtomicGet):
        out.add(AccessPath(e.name))
    elif isinstance(e, Index):
        idx = e.index.value if isinstance(e.index, IntLit) else "*"
        out.add(AccessPath(e.array, idx))
        out |= _expr_reads(e.index, field_names)
    elif isinstance(e, Unary):
        out |= _expr_reads(e.operand, field_names)
    elif isinstance(e, Binary):
        out |= _expr_reads(e.left, field_names)
        out |= _expr_reads(e.right, field_names)
    # IntLit, BoolLit, Len read nothing (len is a compile-time constant)
    return out


def read_write_sets(s: Stmt, field_names: set[str]) -> tuple[set[AccessPath], set[AccessPath]]:
    """Field-level reads and writes of one statement.  Locals and params
    are thread-private and excluded."""
    if isinstance(s, Labeled):
        s = s.stmt
    reads: set[AccessPath] = set()
    writes: set[AccessPath] = set()
    if isinstance(s, Assign):
        reads |= _expr_reads(s.value, field_names)
        if s.target in field_names:
            writes.add(AccessPath(s.target))
    elif isinstance(s, ArrayAssign):
        reads |= _expr_reads(s.index, field_names)
        reads |= _expr_reads(s.value, field_names)
        idx = s.index.value if isinstance(s.index, IntLit) else "*"
        writes.add(AccessPath(s.array, idx))
    elif isinstance(s, AtomicUpdate):
        reads |= _expr_reads(s.expr, field_names)
        reads.add(AccessPath(s.name))
        writes.add(AccessPath(s.name))
    elif isinstance(s, (CondGoto, Waituntil)):
        e = s.cond if isinstance(s, CondGoto) else s.pred
        reads |= _expr_reads(e, field_names)
    elif isinstance(s, SignalDirective):
        reads |= _expr_reads(s.cond, field_names)
        # the predicate itself is not evaluated by the directive
    return reads, writes


def expr_fields(e: Expr, field_names: set[str]) -> set[str]:
    """Free monitor fields of an expression (base names)."""
    return {p.base for p in _expr_reads(e, field_names)}
