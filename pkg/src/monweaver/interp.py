"""Shared evaluator: bounded-domain monitor state, expressions, statements.

Both the analysis (fragment replay) and the simulators (implicit CCR steps,
explicit statement steps) execute through this module so that arithmetic,
domain checks and access-path recording agree everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .frontend import AccessPath
from .syntax import (
    ArrayAssign,
    Assign,
    AtomicGet,
    AtomicUpdate,
    Binary,
    BoolLit,
    Ccr,
    CondGoto,
    CondVarOp,
    Expr,
    FieldDecl,
    Goto,
    ImplicitMethod,
    Index,
    IntLit,
    Labeled,
    Len,
    LockOp,
    Name,
    SignalDirective,
    Skip,
    Stmt,
    Unary,
    Waituntil,
)


class EvalFault(Exception):
    """Runtime diagnostic: domain overflow, bad index, arithmetic fault,
    uninitialized local, or exhausted step fuel."""

    def __init__(self, kind: str, msg: str):
        super().__init__(msg)
        self.kind = kind


# state is a flat tuple, one slot per field; array slots hold tuples
MonState = tuple


class Schema:
    """Field layout of a monitor: maps names to state-tuple slots."""

    __slots__ = ("fields", "slot")

    def __init__(self, fields: tuple[FieldDecl, ...]):
        self.fields = fields
        self.slot = {f.name: i for i, f in enumerate(fields)}

    def decl(self, name: str) -> FieldDecl:
        return self.fields[self.slot[name]]

    def initial(self) -> MonState:
        vals = []
        for f in self.fields:
            vals.append((f.init,) * f.length if f.is_array else f.init)
        return tuple(vals)

    def is_field(self, name: str) -> bool:
        return name in self.slot

    def state_dict(self, state: MonState) -> dict[str, int | tuple[int, ...]]:
        return {f.name: state[i] for i, f in enumerate(self.fields)}

    def from_dict(self, values: dict) -> MonState:
        vals = []
        for f in self.fields:
            v = values.get(f.name, f.init if not f.is_array else None)
            if f.is_array:
                if v is None:
                    v = (f.init,) * f.length
                else:
                    v = tuple(v)
                    if len(v) != f.length:
                        raise EvalFault("domain", f"array {f.name} needs {f.length} cells")
                for c in v:
                    _check_domain(f, c)
            else:
                _check_domain(f, v)
            vals.append(v)
        return tuple(vals)

    def iter_states(self):
        """Every state in the declared domain product.  Exponential; only
        for tiny oracles."""
        import itertools

        axes = []
        for f in self.fields:
            dom = range(f.lo, f.hi + 1)
            if f.is_array:
                axes.append(itertools.product(dom, repeat=f.length))
            else:
                axes.append(dom)
        yield from itertools.product(*axes)


def _check_domain(f: FieldDecl, v) -> None:
    if not isinstance(v, int) or isinstance(v, bool):
        raise EvalFault("type", f"non-integer value for {f.name}: {v!r}")
    if not (f.lo <= v <= f.hi):
        raise EvalFault("domain", f"{f.name} := {v} leaves domain [{f.lo}..{f.hi}]")


def write_scalar(schema: Schema, state: MonState, name: str, value: int) -> MonState:
    f = schema.decl(name)
    _check_domain(f, value)
    i = schema.slot[name]
    return state[:i] + (value,) + state[i + 1 :]


def write_cell(schema: Schema, state: MonState, name: str, idx: int, value: int) -> MonState:
    f = schema.decl(name)
    if not (0 <= idx < (f.length or 0)):
        raise EvalFault("index", f"{name}[{idx}] out of bounds (length {f.length})")
    _check_domain(f, value)
    i = schema.slot[name]
    arr = state[i]
    new = arr[:idx] + (value,) + arr[idx + 1 :]
    return state[:i] + (new,) + state[i + 1 :]


@dataclass
class Footprint:
    """Concrete access paths touched during a recorded run."""

    reads: set[AccessPath] = field(default_factory=set)
    writes: set[AccessPath] = field(default_factory=set)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


def eval_expr(e: Expr, schema: Schema, state: MonState, env: dict, fp: Footprint | None = None):
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, Name):
        n = e.ident
        if schema.is_field(n):
            if fp is not None:
                fp.reads.add(AccessPath(n))
            return state[schema.slot[n]]
        if n not in env:
            raise EvalFault("local", f"read of unassigned local {n!r}")
        return env[n]
    if isinstance(e, AtomicGet):
        if fp is not None:
            fp.reads.add(AccessPath(e.name))
        return state[schema.slot[e.name]]
    if isinstance(e, Len):
        return schema.decl(e.array).length
    if isinstance(e, Index):
        idx = _as_int(eval_expr(e.index, schema, state, env, fp), "index")
        f = schema.decl(e.array)
        if not (0 <= idx < (f.length or 0)):
            raise EvalFault("index", f"{e.array}[{idx}] out of bounds")
        if fp is not None:
            fp.reads.add(AccessPath(e.array, idx))
        return state[schema.slot[e.array]][idx]
    if isinstance(e, Unary):
        v = eval_expr(e.operand, schema, state, env, fp)
        if e.op == "-":
            return -_as_int(v, "unary -")
        return not _as_bool(v, "!")
    if isinstance(e, Binary):
        lv = eval_expr(e.left, schema, state, env, fp)
        if e.op == "&&":
            return _as_bool(lv, "&&") and _as_bool(eval_expr(e.right, schema, state, env, fp), "&&")
        if e.op == "||":
            return _as_bool(lv, "||") or _as_bool(eval_expr(e.right, schema, state, env, fp), "||")
        rv = eval_expr(e.right, schema, state, env, fp)
        if e.op in ("==", "!="):
            return (lv == rv) if e.op == "==" else (lv != rv)
        li, ri = _as_int(lv, e.op), _as_int(rv, e.op)
        if e.op == "+":
            return li + ri
        if e.op == "-":
            return li - ri
        if e.op == "*":
            return li * ri
        if e.op in ("/", "%"):
            if ri == 0:
                raise EvalFault("arith", "division by zero")
            return li // ri if e.op == "/" else li % ri
        if e.op == "<":
            return li < ri
        if e.op == "<=":
            return li <= ri
        if e.op == ">":
            return li > ri
        if e.op == ">=":
            return li >= ri
    raise TypeError(f"cannot evaluate {e!r}")


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise EvalFault("type", f"integer required for {where}, got {v!r}")
    return v


def _as_bool(v, where: str) -> bool:
    if not isinstance(v, bool):
        raise EvalFault("type", f"boolean required for {where}, got {v!r}")
    return v


def eval_bool(e: Expr, schema: Schema, state: MonState, env: dict, fp: Footprint | None = None) -> bool:
    return _as_bool(eval_expr(e, schema, state, env, fp), "predicate")


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


def exec_data_stmt(
    s: Stmt, schema: Schema, state: MonState, env: dict, fp: Footprint | None = None
) -> tuple[MonState, dict]:
    """Execute one non-control, non-sync statement.  Returns new state/env."""
    if isinstance(s, Labeled):
        s = s.stmt
    if isinstance(s, (Skip, SignalDirective)):
        # signaling directives carry no data semantics here
        return state, env
    if isinstance(s, Assign):
        v = eval_expr(s.value, schema, state, env, fp)
        if schema.is_field(s.target):
            if fp is not None:
                fp.writes.add(AccessPath(s.target))
            return write_scalar(schema, state, s.target, _as_int(v, s.target)), env
        env = dict(env)
        env[s.target] = v
        return state, env
    if isinstance(s, ArrayAssign):
        idx = _as_int(eval_expr(s.index, schema, state, env, fp), "index")
        val = _as_int(eval_expr(s.value, schema, state, env, fp), s.array)
        if fp is not None:
            fp.writes.add(AccessPath(s.array, idx))
        return write_cell(schema, state, s.array, idx, val), env
    if isinstance(s, AtomicUpdate):
        pre = state[schema.slot[s.name]]
        if fp is not None:
            fp.reads.add(AccessPath(s.name))
            fp.writes.add(AccessPath(s.name))
        inner = dict(env)
        inner[s.param] = pre
        post = _as_int(eval_expr(s.expr, schema, state, inner, fp), s.name)
        state = write_scalar(schema, state, s.name, post)
        env = dict(env)
        env[s.dest] = pre  # update returns the pre-value
        return state, env
    raise TypeError(f"not a data statement: {s!r}")


def label_map(body: tuple[Stmt, ...]) -> dict[str, int]:
    return {s.label: i for i, s in enumerate(body) if isinstance(s, Labeled)}


DEFAULT_FUEL = 100_000


def run_body(
    body: tuple[Stmt, ...],
    schema: Schema,
    state: MonState,
    env: dict,
    fp: Footprint | None = None,
    fuel: int = DEFAULT_FUEL,
) -> tuple[MonState, dict]:
    """Run a goto-form statement list to completion (fall off the end)."""
    labels = label_map(body)
    pc = 0
    while pc < len(body):
        if fuel <= 0:
            raise EvalFault("fuel", "statement budget exhausted (diverging loop?)")
        fuel -= 1
        s = body[pc]
        if isinstance(s, Labeled):
            s = s.stmt
        if isinstance(s, Goto):
            pc = labels[s.label]
            continue
        if isinstance(s, CondGoto):
            if eval_bool(s.cond, schema, state, env, fp):
                pc = labels[s.label]
                continue
            pc += 1
            continue
        if isinstance(s, (LockOp, CondVarOp, Waituntil)):
            raise EvalFault("sync", f"synchronization statement outside a scheduler: {s!r}")
        state, env = exec_data_stmt(s, schema, state, env, fp)
        pc += 1
    return state, env


class Blocked(Exception):
    """A CCR guard evaluated false; the implicit step cannot fire."""


def exec_ccr(
    ccr: Ccr, schema: Schema, state: MonState, env: dict, fp: Footprint | None = None
) -> tuple[MonState, dict]:
    """One atomic implicit step: check the guard, then run the body."""
    if not eval_bool(ccr.guard, schema, state, env, fp):
        raise Blocked
    return run_body(ccr.body, schema, state, env, fp)


def run_method_seq(
    m: ImplicitMethod, schema: Schema, state: MonState, args: dict, fp: Footprint | None = None
) -> tuple[MonState, dict]:
    """Run a whole method sequentially (every guard must hold at its turn)."""
    env = dict(args)
    for ccr in m.ccrs:
        state, env = exec_ccr(ccr, schema, state, env, fp)
    return state, env
