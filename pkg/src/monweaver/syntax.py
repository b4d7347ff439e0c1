"""AST for the implicit (.imon) and explicit (.emon) monitor languages.

The implicit language is a monitor with integer fields over declared finite
domains and methods made of conditional critical regions: a ``waituntil``
guard followed by a non-blocking body in goto form.  The explicit language
adds locks, condition variables and atomic fields, and its methods are plain
statement lists.  Both share the expression and statement core defined here.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Name(Expr):
    """A scalar field, parameter, or local variable reference."""

    ident: str


@dataclass(frozen=True)
class Index(Expr):
    """Array cell read ``arr[idx]``."""

    array: str
    index: Expr


@dataclass(frozen=True)
class Len(Expr):
    """``len(arr)``: the declared length of an array field."""

    array: str


@dataclass(frozen=True)
class AtomicGet(Expr):
    """``a.get()``: read of an atomic field (explicit language only)."""

    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-" or "!"
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # + - * / % == != < <= > >= && ||
    left: Expr
    right: Expr


TRUE = BoolLit(True)
FALSE = BoolLit(False)


def is_trivially_true(e: Expr) -> bool:
    return isinstance(e, BoolLit) and e.value


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


class Stmt:
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Assign(Stmt):
    """``x := e`` where x is a local or a scalar field."""

    target: str
    value: Expr


@dataclass(frozen=True)
class ArrayAssign(Stmt):
    """``arr[i] := e``."""

    array: str
    index: Expr
    value: Expr


@dataclass(frozen=True)
class Goto(Stmt):
    label: str


@dataclass(frozen=True)
class CondGoto(Stmt):
    cond: Expr
    label: str


@dataclass(frozen=True)
class Labeled(Stmt):
    label: str
    stmt: Stmt


@dataclass(frozen=True)
class Waituntil(Stmt):
    """CCR guard; only legal at the head of a CCR."""

    pred: Expr


@dataclass(frozen=True)
class SignalDirective(Stmt):
    """``signal(p, c)`` / ``broadcast(p, c)``: notify waiters of predicate
    p when condition c holds.  Inserted by signal placement; a no-op on
    monitor state."""

    kind: str  # "signal" | "broadcast"
    pred: Expr
    cond: Expr


# Structured sugar, removed by desugaring.


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: tuple[Stmt, ...]
    els: tuple[Stmt, ...] = ()


@dataclass(frozen=True)
class While(Stmt):
    cond: Expr
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class IncDec(Stmt):
    """``x++`` / ``x--``."""

    target: str
    delta: int


# Explicit-language statements.


@dataclass(frozen=True)
class LockOp(Stmt):
    lock: str
    op: str  # "lock" | "unlock"


@dataclass(frozen=True)
class CondVarOp(Stmt):
    cv: str
    op: str  # "await" | "signal" | "signalAll"


@dataclass(frozen=True)
class AtomicUpdate(Stmt):
    """``dest := a.update(x -> e)``: atomically replace a's value with
    e[x := old] and store the pre-value in the local ``dest``."""

    dest: str
    name: str
    param: str
    expr: Expr


# ---------------------------------------------------------------------------
# Declarations and monitors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldDecl:
    name: str
    lo: int
    hi: int
    length: int | None = None  # None for scalars, array length otherwise
    init: int = 0
    atomic: bool = False

    @property
    def is_array(self) -> bool:
        return self.length is not None


@dataclass(frozen=True)
class Param:
    name: str
    lo: int
    hi: int


@dataclass(frozen=True)
class Ccr:
    """One conditional critical region: guard + non-blocking body."""

    guard: Expr
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class ImplicitMethod:
    name: str
    params: tuple[Param, ...]
    ccrs: tuple[Ccr, ...]


@dataclass(frozen=True)
class MonitorAst:
    name: str
    fields: tuple[FieldDecl, ...]
    methods: tuple[ImplicitMethod, ...]

    def field(self, name: str) -> FieldDecl | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def method(self, name: str) -> ImplicitMethod:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


@dataclass(frozen=True)
class LockDecl:
    name: str


@dataclass(frozen=True)
class CondVarDecl:
    name: str
    lock: str


@dataclass(frozen=True)
class ExplicitMethod:
    name: str
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class ExplicitMonitorAst:
    name: str
    locks: tuple[LockDecl, ...]
    condvars: tuple[CondVarDecl, ...]
    fields: tuple[FieldDecl, ...]
    methods: tuple[ExplicitMethod, ...]

    def field(self, name: str) -> FieldDecl | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def method(self, name: str) -> ExplicitMethod:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def cv_owner(self, cv: str) -> str:
        for c in self.condvars:
            if c.name == cv:
                return c.lock
        raise KeyError(cv)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

_PREC = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 3,
    "<=": 3,
    ">": 3,
    ">=": 3,
    "+": 4,
    "-": 4,
    "*": 5,
    "/": 5,
    "%": 5,
}
_UNARY_PREC = 6


def expr_text(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Index):
        return f"{e.array}[{expr_text(e.index)}]"
    if isinstance(e, Len):
        return f"len({e.array})"
    if isinstance(e, AtomicGet):
        return f"{e.name}.get()"
    if isinstance(e, Unary):
        inner = expr_text(e.operand, _UNARY_PREC)
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        # left-associative: right child needs higher precedence to stay bare
        left = expr_text(e.left, prec)
        right = expr_text(e.right, prec + 1)
        text = f"{left} {e.op} {right}"
        if prec < parent_prec:
            return f"({text})"
        return text
    raise TypeError(f"unknown expression {e!r}")


def stmt_text(s: Stmt) -> str:
    if isinstance(s, Labeled):
        return f"{s.label}: {stmt_text(s.stmt)}"
    if isinstance(s, Skip):
        return "skip;"
    if isinstance(s, Assign):
        return f"{s.target} := {expr_text(s.value)};"
    if isinstance(s, ArrayAssign):
        return f"{s.array}[{expr_text(s.index)}] := {expr_text(s.value)};"
    if isinstance(s, Goto):
        return f"goto {s.label};"
    if isinstance(s, CondGoto):
        return f"if ({expr_text(s.cond)}) goto {s.label};"
    if isinstance(s, Waituntil):
        return f"waituntil({expr_text(s.pred)});"
    if isinstance(s, SignalDirective):
        return f"{s.kind}({expr_text(s.pred)}, {expr_text(s.cond)});"
    if isinstance(s, LockOp):
        return f"{s.lock}.{s.op}();"
    if isinstance(s, CondVarOp):
        return f"{s.cv}.{s.op}();"
    if isinstance(s, AtomicUpdate):
        return f"{s.dest} := {s.name}.update({s.param} -> {expr_text(s.expr)});"
    raise TypeError(f"cannot print sugared statement {s!r}")


def _field_text(f: FieldDecl) -> str:
    dom = f"int[{f.lo}..{f.hi}]"
    if f.is_array:
        dom = f"array[{f.length}] of {dom}"
    if f.atomic:
        return f"Atomic[{dom}] {f.name} := {f.init};"
    return f"{dom} {f.name} := {f.init};"


def _params_text(params: tuple[Param, ...]) -> str:
    return ", ".join(f"int[{p.lo}..{p.hi}] {p.name}" for p in params)


def monitor_text(m: MonitorAst) -> str:
    """Deterministic .imon rendering of a (possibly signaled) monitor."""
    out = [f"monitor {m.name} {{"]
    for f in m.fields:
        out.append(f"  {_field_text(f)}")
    for meth in m.methods:
        out.append("")
        out.append(f"  {meth.name}({_params_text(meth.params)}) {{")
        for ccr in meth.ccrs:
            out.append(f"    waituntil({expr_text(ccr.guard)});")
            for s in ccr.body:
                out.append(f"    {stmt_text(s)}")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def explicit_text(m: ExplicitMonitorAst) -> str:
    """Deterministic .emon rendering: locks, then condvars, then fields,
    then methods."""
    out = [f"monitor {m.name} {{"]
    for l in m.locks:
        out.append(f"  Lock {l.name} := new Lock();")
    for c in m.condvars:
        out.append(f"  CondVar {c.name} := {c.lock}.newCondVar();")
    for f in m.fields:
        out.append(f"  {_field_text(f)}")
    for meth in m.methods:
        out.append("")
        out.append(f"  {meth.name}({_params_text(meth.params)}) {{")
        for s in meth.body:
            out.append(f"    {stmt_text(s)}")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"
