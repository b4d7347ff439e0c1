"""Explicit-monitor generation: signal placement and lock instrumentation.

Signal placement appends a conservative broadcast to every CCR that writes a
field some waituntil predicate reads.  Instrumentation then lowers the
synthesized protocol onto the statement list: lock acquisitions at method
entry (ascending), release/acquire pairs on fragment-crossing edges
(releases descending, then acquisitions ascending), full release across CCR
boundaries, wait loops around non-trivial guards, and lock/notify/unlock
blocks for broadcasts.  Atomic fields are rewritten to get()/update() form.

Each CCR region is labeled ``__ccr_<method>_<k>`` so a re-parsed explicit
monitor can still be segmented for concretization.
"""

from __future__ import annotations

from dataclasses import replace

from .fdg import Fdg, Fragment
from .frontend import expr_fields, read_write_sets
from .maxsat import Protocol, SynthesisResult
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
    ImplicitMethod,
    Index,
    Labeled,
    Len,
    LockDecl,
    LockOp,
    MonitorAst,
    Name,
    SignalDirective,
    Skip,
    Stmt,
    TRUE,
    Unary,
    Waituntil,
    expr_text,
    is_trivially_true,
)


class CodegenError(Exception):
    pass


def lock_name(i: int) -> str:
    return f"l{i}"


def cv_name(j: int) -> str:
    return f"cv{j}"


# ---------------------------------------------------------------------------
# Signal placement
# ---------------------------------------------------------------------------


def place_signals(ast: MonitorAst) -> MonitorAst:
    """Broadcast every predicate whose fields a CCR writes, at CCR end.
    Self-signals are kept: the rule is direction-insensitive on purpose."""
    field_names = {f.name for f in ast.fields}
    registry: list[Expr] = []
    seen: set[str] = set()
    for m in ast.methods:
        for ccr in m.ccrs:
            if is_trivially_true(ccr.guard):
                continue
            text = expr_text(ccr.guard)
            if text not in seen:
                seen.add(text)
                registry.append(ccr.guard)

    methods = []
    for m in ast.methods:
        ccrs = []
        for ccr in m.ccrs:
            writes: set[str] = set()
            for s in ccr.body:
                _, w = read_write_sets(s, field_names)
                writes |= {p.base for p in w}
            extra = [
                SignalDirective("broadcast", pred, TRUE)
                for pred in registry
                if writes & expr_fields(pred, field_names)
            ]
            ccrs.append(Ccr(ccr.guard, tuple(ccr.body) + tuple(extra)))
        methods.append(ImplicitMethod(m.name, m.params, tuple(ccrs)))
    return MonitorAst(ast.name, ast.fields, tuple(methods))


# ---------------------------------------------------------------------------
# Instrumentation
# ---------------------------------------------------------------------------


def instrument(signaled: MonitorAst, fdg: Fdg, protocol: Protocol) -> ExplicitMonitorAst:
    cvs = {text: cv_name(j + 1) for j, text in enumerate(protocol.cv_order)}
    locks = tuple(LockDecl(lock_name(i)) for i in range(1, protocol.num_locks + 1))
    condvars = tuple(
        CondVarDecl(cvs[text], lock_name(protocol.cv_locks[text])) for text in protocol.cv_order
    )
    fields = tuple(
        replace(f, atomic=f.name in protocol.atomics) for f in signaled.fields
    )
    gen = _MethodGen(signaled, fdg, protocol, cvs)
    methods = tuple(gen.lower(m) for m in signaled.methods)
    return ExplicitMonitorAst(signaled.name, locks, condvars, fields, methods)


def build_explicit(res: SynthesisResult) -> ExplicitMonitorAst:
    return instrument(res.signaled, res.fdg, res.protocol)


class _MethodGen:
    def __init__(self, ast: MonitorAst, fdg: Fdg, protocol: Protocol, cvs: dict[str, str]):
        self.ast = ast
        self.fdg = fdg
        self.proto = protocol
        self.cvs = cvs
        self.atomics = protocol.atomics

    def locks_of(self, frag: Fragment) -> frozenset[int]:
        return self.proto.locksets[frag.id]

    def lower(self, m: ImplicitMethod) -> ExplicitMethod:
        cfg = self.fdg.cfgs[m.name]
        fragof = [self.fdg.frag_of_block(m.name, b) for b in range(len(cfg.stmts))]
        out: list[Stmt] = []
        pending: list[str] = []
        fresh = _Counter()
        trampolines: dict[tuple[int, int], str] = {}
        tramp_stmts: list[Stmt] = []

        def emit(s: Stmt) -> None:
            while len(pending) > 1:
                out.append(Labeled(pending.pop(0), Skip()))
            if pending:
                s = Labeled(pending.pop(), s)
            out.append(s)

        def emit_ops(ops: list[Stmt]) -> None:
            for op in ops:
                emit(op)

        def reroute(src: Fragment, dst_block: int, target: str) -> str:
            """Label for a jump from src to dst, inserting lock ops if the
            fragments differ.  Same fragment: original label."""
            dst = fragof[dst_block]
            ops = self._edge_ops(src, dst)
            if not ops:
                return target
            key = (src.id, dst.id)
            if key not in trampolines:
                lab = f"__edge_{src.id}_{dst.id}"
                trampolines[key] = lab
                body: list[Stmt] = list(ops) + [Goto(target)]
                body[0] = Labeled(lab, body[0])
                tramp_stmts.extend(body)
            return trampolines[key]

        prev: int | None = None
        for b in range(len(cfg.stmts)):
            frag = fragof[b]
            raw = cfg.stmts[b]
            labels: list[str] = []
            s = raw
            while isinstance(s, Labeled):
                labels.append(s.label)
                s = s.stmt
            falls_in = (
                prev is not None
                and b in cfg.succs[prev]
                and not isinstance(cfg.stmt(prev), Goto)
            )
            if b == cfg.entry:
                pending.append(f"__ccr_{m.name}_0")
                emit_ops(_acquire(sorted(self.locks_of(frag))))
            elif isinstance(s, Waituntil):
                # waituntil boundary: release everything while still inside
                # the previous CCR region, so a thread paused between CCRs
                # holds no locks; the region label starts at the acquires
                if falls_in:
                    emit_ops(_release(sorted(self.locks_of(fragof[prev]), reverse=True)))
                pending.append(f"__ccr_{m.name}_{frag.ccr_index}")
                emit_ops(_acquire(sorted(self.locks_of(frag))))
            elif falls_in:
                emit_ops(self._edge_ops(fragof[prev], frag))
            pending.extend(labels)

            if isinstance(s, Waituntil):
                for w in self._wait_loop(s.pred, frag, fresh):
                    emit(w)
            elif isinstance(s, SignalDirective):
                for w in self._signal_block(s, frag, fresh):
                    emit(w)
            elif isinstance(s, Goto):
                emit(Goto(self._retarget(s.label, b, frag, cfg, fragof, reroute)))
            elif isinstance(s, CondGoto):
                emit(
                    CondGoto(
                        self._rw(s.cond),
                        self._retarget(s.label, b, frag, cfg, fragof, reroute),
                    )
                )
            else:
                emit(self._lower_data(s, fresh))
            prev = b

        exit_frag = fragof[len(cfg.stmts) - 1]
        for ef in cfg.exit_blocks:
            if self.locks_of(fragof[ef]) != self.locks_of(exit_frag):
                raise CodegenError(f"diverging exit locksets in {m.name}")
        emit_ops(_release(sorted(self.locks_of(exit_frag), reverse=True)))
        if tramp_stmts:
            done = f"__ret_{m.name}"
            emit(Goto(done))
            out.extend(tramp_stmts)
            out.append(Labeled(done, Skip()))
        elif pending:
            emit(Skip())
        return ExplicitMethod(m.name, m.params, tuple(out))

    def _retarget(self, label: str, b: int, frag: Fragment, cfg, fragof, reroute) -> str:
        # resolve the label to its block to learn the destination fragment
        target_block = None
        for tb in range(len(cfg.stmts)):
            s = cfg.stmts[tb]
            while isinstance(s, Labeled):
                if s.label == label:
                    target_block = tb
                    break
                s = s.stmt
            if target_block is not None:
                break
        assert target_block is not None, label
        return reroute(frag, target_block, label)

    def _edge_ops(self, u: Fragment, v: Fragment) -> list[Stmt]:
        if u.id == v.id:
            return []
        lu, lv = self.locks_of(u), self.locks_of(v)
        if u.ccr_index != v.ccr_index:
            rel, acq = lu, lv  # waituntil boundary: full handoff
        else:
            rel, acq = lu - lv, lv - lu
        return _release(sorted(rel, reverse=True)) + _acquire(sorted(acq))

    def _wait_loop(self, pred: Expr, frag: Fragment, fresh: _Counter) -> list[Stmt]:
        if is_trivially_true(pred):
            return []
        text = expr_text(pred)
        cv = self.cvs[text]
        lp = self.proto.cv_locks[text]
        held = self.locks_of(frag)
        if lp not in held:
            raise CodegenError(f"waiter does not hold the condvar lock for {text!r}")
        others = sorted(held - {lp})
        n = fresh.next("w")
        top, done = f"__w{n}", f"__w{n}_exit"
        body: list[Stmt] = [Labeled(top, CondGoto(self._rw(pred), done))]
        body += _release(sorted(others, reverse=True))
        body.append(CondVarOp(cv, "await"))
        body += _acquire(others)
        body.append(Goto(top))
        body.append(Labeled(done, Skip()))
        return body

    def _signal_block(self, s: SignalDirective, frag: Fragment, fresh: _Counter) -> list[Stmt]:
        text = expr_text(s.pred)
        cv = self.cvs[text]
        lp = self.proto.cv_locks[text]
        held = self.locks_of(frag)
        notify = "signalAll" if s.kind == "broadcast" else "signal"
        core: list[Stmt] = []
        if lp not in held:
            core.append(LockOp(lock_name(lp), "lock"))
        core.append(CondVarOp(cv, notify))
        if lp not in held:
            core.append(LockOp(lock_name(lp), "unlock"))
        if is_trivially_true(s.cond):
            return core
        skip = f"__skip{fresh.next('skip')}"
        out: list[Stmt] = [CondGoto(Unary("!", self._rw(s.cond)), skip)]
        out += core
        out.append(Labeled(skip, Skip()))
        return out

    def _lower_data(self, s: Stmt, fresh: _Counter) -> Stmt:
        if isinstance(s, Assign):
            if s.target in self.atomics:
                param = "x"
                return AtomicUpdate(
                    dest=f"__pre{fresh.next('pre')}",
                    name=s.target,
                    param=param,
                    expr=self._rw(s.value, subst={s.target: Name(param)}),
                )
            return Assign(s.target, self._rw(s.value))
        if isinstance(s, ArrayAssign):
            return ArrayAssign(s.array, self._rw(s.index), self._rw(s.value))
        return s

    def _rw(self, e: Expr, subst: dict[str, Expr] | None = None) -> Expr:
        """Rewrite atomic-field reads to get(); apply an optional name
        substitution first (for the update lambda's parameter)."""
        if isinstance(e, Name):
            if subst and e.ident in subst:
                return subst[e.ident]
            if e.ident in self.atomics:
                return AtomicGet(e.ident)
            return e
        if isinstance(e, Unary):
            return Unary(e.op, self._rw(e.operand, subst))
        if isinstance(e, Binary):
            return Binary(e.op, self._rw(e.left, subst), self._rw(e.right, subst))
        if isinstance(e, Index):
            return Index(e.array, self._rw(e.index, subst))
        return e


class _Counter:
    def __init__(self):
        self.counts: dict[str, int] = {}

    def next(self, kind: str) -> int:
        self.counts[kind] = self.counts.get(kind, 0) + 1
        return self.counts[kind]


def _acquire(locks) -> list[Stmt]:
    return [LockOp(lock_name(i), "lock") for i in locks]


def _release(locks) -> list[Stmt]:
    return [LockOp(lock_name(i), "unlock") for i in locks]


# ---------------------------------------------------------------------------
# Static lock discipline check
# ---------------------------------------------------------------------------


def check_lock_discipline(em: ExplicitMonitorAst) -> list[str]:
    """Abstract interpretation of held-lock sets over each method.

    Flags: double lock, unlock while free, acquisition against the global
    lock order, await/notify without the condvar's lock, inconsistent held
    sets at a join point, and a nonempty held set at method exit.  Release
    order is not constrained (it cannot deadlock)."""
    problems: list[str] = []
    order = {l.name: i for i, l in enumerate(em.locks, start=1)}
    owner = {c.name: c.lock for c in em.condvars}

    for m in em.methods:
        stmts = list(m.body)
        labels: dict[str, int] = {}
        for i, s in enumerate(stmts):
            while isinstance(s, Labeled):
                labels[s.label] = i
                s = s.stmt
        states: dict[int, frozenset[str]] = {0: frozenset()}
        work = [0]
        exit_seen: set[frozenset[str]] = set()
        while work:
            i = work.pop()
            held = states[i]
            s = stmts[i]
            while isinstance(s, Labeled):
                s = s.stmt
            nxt: list[int] = []
            if isinstance(s, LockOp):
                if s.op == "lock":
                    if s.lock in held:
                        problems.append(f"{m.name}: {s.lock} locked twice")
                    elif held and order[s.lock] < max(order[x] for x in held):
                        problems.append(f"{m.name}: {s.lock} acquired out of order")
                    held = held | {s.lock}
                else:
                    if s.lock not in held:
                        problems.append(f"{m.name}: {s.lock} unlocked while free")
                    held = held - {s.lock}
                nxt = [i + 1]
            elif isinstance(s, CondVarOp):
                if owner[s.cv] not in held:
                    problems.append(f"{m.name}: {s.cv}.{s.op}() without {owner[s.cv]}")
                nxt = [i + 1]
            elif isinstance(s, Goto):
                nxt = [labels[s.label]]
            elif isinstance(s, CondGoto):
                nxt = [labels[s.label], i + 1]
            else:
                nxt = [i + 1]
            for j in nxt:
                if j >= len(stmts):
                    if held:
                        exit_seen.add(held)
                    continue
                if j in states:
                    if states[j] != held:
                        problems.append(f"{m.name}: inconsistent held set at stmt {j}")
                else:
                    states[j] = held
                    work.append(j)
        for held in sorted(exit_seen, key=sorted):
            problems.append(f"{m.name}: returns holding {sorted(held)}")
    return problems


# ---------------------------------------------------------------------------
# Pseudo-Java rendering
# ---------------------------------------------------------------------------


def render_pseudo_java(em: ExplicitMonitorAst) -> str:
    """Readable Java-flavored rendering.  Goto-form control flow is kept
    symbolic (labels render as comments), so this is documentation output,
    not compilable source."""
    L: list[str] = [f"class {em.name} {{"]
    for lk in em.locks:
        L.append(f"    final ReentrantLock {lk.name} = new ReentrantLock();")
    for cv in em.condvars:
        L.append(f"    final Condition {cv.name} = {cv.lock}.newCondition();")
    for f in em.fields:
        if f.atomic:
            L.append(f"    final AtomicInteger {f.name} = new AtomicInteger({f.init});")
        elif f.is_array:
            L.append(f"    final int[] {f.name} = new int[{f.length}];  // cells start at {f.init}")
        else:
            L.append(f"    int {f.name} = {f.init};")
    for m in em.methods:
        args = ", ".join(f"int {p.name}" for p in m.params)
        L.append("")
        L.append(f"    void {m.name}({args}) {{")
        for s in m.body:
            L.extend(_pj_stmt(s, "        "))
        L.append("    }")
    L.append("}")
    return "\n".join(L) + "\n"


def _pj_stmt(s: Stmt, ind: str) -> list[str]:
    while isinstance(s, Labeled):
        out = [f"{ind}// {s.label}:"]
        return out + _pj_stmt(s.stmt, ind)
    if isinstance(s, LockOp):
        return [f"{ind}{s.lock}.{s.op}();"]
    if isinstance(s, CondVarOp):
        return [f"{ind}{s.cv}.{s.op}();"]
    if isinstance(s, AtomicUpdate):
        return [f"{ind}int {s.dest} = {s.name}.getAndUpdate({s.param} -> {_pj_expr(s.expr)});"]
    if isinstance(s, Assign):
        return [f"{ind}{s.target} = {_pj_expr(s.value)};"]
    if isinstance(s, ArrayAssign):
        return [f"{ind}{s.array}[{_pj_expr(s.index)}] = {_pj_expr(s.value)};"]
    if isinstance(s, Goto):
        return [f"{ind}/* goto {s.label} */"]
    if isinstance(s, CondGoto):
        return [f"{ind}if ({_pj_expr(s.cond)}) {{ /* goto {s.label} */ }}"]
    if isinstance(s, Skip):
        return [f"{ind};"]
    return [f"{ind}// {type(s).__name__}"]


def _pj_expr(e: Expr) -> str:
    if isinstance(e, AtomicGet):
        return f"{e.name}.get()"
    if isinstance(e, Len):
        return f"{e.array}.length"
    if isinstance(e, Unary):
        return f"{e.op}{_pj_expr(e.operand)}"
    if isinstance(e, Binary):
        return f"({_pj_expr(e.left)} {e.op} {_pj_expr(e.right)})"
    if isinstance(e, Index):
        return f"{e.array}[{_pj_expr(e.index)}]"
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.ident
    return expr_text(e)
