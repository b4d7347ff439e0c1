"""Operational simulation of implicit and explicit monitors.

Implicit histories execute one CCR per event.  Explicit monitors run under
the fine-grained rules: per-statement interleaving, lock hand-off that
notifies exactly one blocked thread per release (all choices explored),
condition variables with explicit wait sets, and single-word atomics.
Blocked states are classified as DEADLOCK when the waits-for relation has a
cycle and STUCK otherwise (lost wakeups, runtime faults).

Correctness checking follows the two-sided contract: (1) every complete
implicit history concretizes to a sequential explicit history that runs to
completion with an equal monitor state, and (2) every explicit final state
equals some implicit one (per-thread operation projections are fixed by the
workload, so state inclusion is the whole condition).

Exploration is a DFS memoized on (fields, thread positions/locals, sync
state).  Statements that touch no field, atomic, lock, or condition
variable are folded into the preceding visible step.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .interp import Blocked, EvalFault, Schema, eval_bool, exec_ccr, exec_data_stmt
from .syntax import (
    ArrayAssign,
    Assign,
    AtomicGet,
    AtomicUpdate,
    Binary,
    CondGoto,
    CondVarOp,
    ExplicitMonitorAst,
    Expr,
    Goto,
    Index,
    IntLit,
    BoolLit,
    Labeled,
    Len,
    LockOp,
    MonitorAst,
    Name,
    SignalDirective,
    Skip,
    Stmt,
    Unary,
    Waituntil,
    stmt_text,
)

DEFAULT_MAX_STATES = 1_000_000
DEFAULT_MAX_HISTORIES = 200_000


# ---------------------------------------------------------------------------
# Workloads
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Op:
    method: str
    args: tuple[tuple[str, int], ...] = ()

    def env(self) -> dict:
        return dict(self.args)


@dataclass(frozen=True)
class Workload:
    threads: tuple[tuple[Op, ...], ...]
    initial: tuple[tuple[str, object], ...] = ()
    mode: str = "exhaustive"  # "exhaustive" | "random"
    samples: int = 0
    seed: int = 0


def load_workload(doc: dict) -> Workload:
    threads = []
    for ops in doc.get("threads", []):
        threads.append(
            tuple(
                Op(o["method"], tuple(sorted((k, int(v)) for k, v in o.get("args", {}).items())))
                for o in ops
            )
        )
    init = tuple(
        sorted((k, tuple(v) if isinstance(v, list) else int(v)) for k, v in doc.get("initial", {}).items())
    )
    ex = doc.get("explore", {})
    return Workload(
        threads=tuple(threads),
        initial=init,
        mode=ex.get("mode", "exhaustive"),
        samples=int(ex.get("samples", 0)),
        seed=int(ex.get("seed", 0)),
    )


def workload_json(wl: Workload) -> dict:
    return {
        "threads": [
            [{"method": o.method, "args": dict(o.args)} for o in ops] for ops in wl.threads
        ],
        "initial": {k: (list(v) if isinstance(v, tuple) else v) for k, v in wl.initial},
        "explore": (
            {"mode": "random", "samples": wl.samples, "seed": wl.seed}
            if wl.mode == "random"
            else {"mode": "exhaustive"}
        ),
    }


def initial_state(schema: Schema, wl: Workload):
    base = schema.state_dict(schema.initial())
    for k, v in wl.initial:
        base[k] = list(v) if isinstance(v, tuple) else v
    return schema.from_dict(base)


# ---------------------------------------------------------------------------
# Implicit side
# ---------------------------------------------------------------------------

# an implicit event: (thread, operation index, ccr index)
EventI = tuple[int, int, int]


@dataclass
class ImplicitRun:
    status: str  # "OK" | "BLOCKED" | "FAULT"
    state: tuple | None
    detail: str = ""


def run_implicit(
    ast: MonitorAst, history: tuple[EventI, ...], wl: Workload, sigma0=None
) -> ImplicitRun:
    """Execute one implicit history; BLOCKED if a guard fails at its turn."""
    from .frontend import desugar

    ast = desugar(ast)
    schema = Schema(ast.fields)
    state = sigma0 if sigma0 is not None else initial_state(schema, wl)
    pos = [(0, 0) for _ in wl.threads]
    envs: list[dict] = [{} for _ in wl.threads]
    for t, op_i, ccr_i in history:
        if pos[t] != (op_i, ccr_i):
            raise ValueError(f"history violates thread {t} program order")
        op = wl.threads[t][op_i]
        method = ast.method(op.method)
        if ccr_i == 0:
            envs[t] = op.env()
        try:
            state, envs[t] = exec_ccr(method.ccrs[ccr_i], schema, state, envs[t])
        except Blocked:
            return ImplicitRun("BLOCKED", state, f"guard false at {op.method}[{ccr_i}]")
        except EvalFault as e:
            return ImplicitRun("FAULT", state, f"{e.kind}: {e}")
        if ccr_i + 1 < len(method.ccrs):
            pos[t] = (op_i, ccr_i + 1)
        else:
            pos[t] = (op_i + 1, 0)
    return ImplicitRun("OK", state)


@dataclass
class ImplicitSummary:
    finals: frozenset
    completes: list[tuple[tuple[EventI, ...], tuple]]  # (history, final state)
    blocked: list[tuple[tuple[EventI, ...], tuple]]
    faults: list[str]
    truncated: bool


def enumerate_implicit(
    ast: MonitorAst, wl: Workload, sigma0=None, max_histories: int = DEFAULT_MAX_HISTORIES
) -> ImplicitSummary:
    """All CCR-granular interleavings of the workload, by path enumeration."""
    from .frontend import desugar

    ast = desugar(ast)
    schema = Schema(ast.fields)
    start = sigma0 if sigma0 is not None else initial_state(schema, wl)
    methods = {m.name: m for m in ast.methods}
    completes: list = []
    blocked: list = []
    faults: list[str] = []
    truncated = False
    seen_paths = 0

    def done(pos_t: tuple[int, int], t: int) -> bool:
        return pos_t[0] >= len(wl.threads[t])

    def walk(state, pos, envs, path) -> None:
        nonlocal truncated, seen_paths
        if seen_paths >= max_histories:
            truncated = True
            return
        stepped = False
        all_done = True
        for t in range(len(wl.threads)):
            if done(pos[t], t):
                continue
            all_done = False
            op_i, ccr_i = pos[t]
            op = wl.threads[t][op_i]
            method = methods[op.method]
            env = op.env() if ccr_i == 0 else dict(envs[t])
            try:
                nstate, nenv = exec_ccr(method.ccrs[ccr_i], schema, state, env)
            except Blocked:
                continue
            except EvalFault as e:
                faults.append(f"thread {t} {op.method}[{ccr_i}]: {e}")
                stepped = True
                continue
            stepped = True
            npos = list(pos)
            if ccr_i + 1 < len(method.ccrs):
                npos[t] = (op_i, ccr_i + 1)
            else:
                npos[t] = (op_i + 1, 0)
            nenvs = list(envs)
            nenvs[t] = nenv
            walk(nstate, tuple(npos), tuple(nenvs), path + ((t, op_i, ccr_i),))
        if all_done:
            seen_paths += 1
            completes.append((path, state))
        elif not stepped:
            seen_paths += 1
            blocked.append((path, state))

    walk(start, tuple((0, 0) for _ in wl.threads), tuple({} for _ in wl.threads), ())
    return ImplicitSummary(
        finals=frozenset(s for _, s in completes),
        completes=completes,
        blocked=blocked,
        faults=faults,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Explicit program preprocessing
# ---------------------------------------------------------------------------


def _unwrap(s: Stmt) -> Stmt:
    while isinstance(s, Labeled):
        s = s.stmt
    return s


def _reads_shared(e: Expr, fields: set[str]) -> bool:
    if isinstance(e, (IntLit, BoolLit, Len)):
        return False
    if isinstance(e, Name):
        return e.ident in fields
    if isinstance(e, (Index, AtomicGet)):
        return True
    if isinstance(e, Unary):
        return _reads_shared(e.operand, fields)
    if isinstance(e, Binary):
        return _reads_shared(e.left, fields) or _reads_shared(e.right, fields)
    return True


class _Prog:
    """Preprocessed explicit monitor: bodies, labels, region starts."""

    def __init__(self, em: ExplicitMonitorAst):
        self.em = em
        self.schema = Schema(em.fields)
        self.fields = {f.name for f in em.fields}
        self.bodies = {m.name: m.body for m in em.methods}
        self.methods = {m.name: m for m in em.methods}
        self.cv_owner = {c.name: c.lock for c in em.condvars}
        self.lock_ids = {l.name: i for i, l in enumerate(em.locks)}
        self.cv_ids = {c.name: i for i, c in enumerate(em.condvars)}
        self.labels: dict[str, dict[str, int]] = {}
        self.region_start: dict[str, dict[int, int]] = {}
        self.local: dict[str, list[bool]] = {}
        for m in em.methods:
            labs: dict[str, int] = {}
            regions: dict[int, int] = {}
            for i, s in enumerate(m.body):
                while isinstance(s, Labeled):
                    labs[s.label] = i
                    if s.label.startswith("__ccr_"):
                        _, k = s.label[len("__ccr_") :].rsplit("_", 1)
                        regions[int(k)] = i
                    s = s.stmt
            self.labels[m.name] = labs
            self.region_start[m.name] = regions
            self.local[m.name] = [self._is_local(_unwrap(s)) for s in m.body]

    def _is_local(self, s: Stmt) -> bool:
        if isinstance(s, (Skip, Goto)):
            return True
        if isinstance(s, CondGoto):
            return not _reads_shared(s.cond, self.fields)
        if isinstance(s, Assign):
            return s.target not in self.fields and not _reads_shared(s.value, self.fields)
        return False


# thread phases
_RUN, _CV, _REACQ, _DONE = "run", "cv", "reacq", "done"


@dataclass(frozen=True)
class _TState:
    op_i: int
    pc: int
    env: tuple
    phase: str
    extra: str = ""


@dataclass(frozen=True)
class Verdict:
    outcome: str  # "FINAL" | "STUCK" | "DEADLOCK"
    state: tuple | None = None
    reason: str = ""
    cycle: tuple[int, ...] = ()
    trace: tuple[str, ...] = ()


@dataclass
class ExploreResult:
    finals: frozenset
    verdicts: list[Verdict]
    deadlocks: list[Verdict]
    stuck: list[Verdict]
    visited: int
    truncated: bool


class _Sim:
    """Shared stepping machinery for explore/replay."""

    def __init__(self, prog: _Prog, wl: Workload):
        self.prog = prog
        self.wl = wl

    def init_threads(self) -> tuple[_TState, ...]:
        out = []
        for ops in self.wl.threads:
            if not ops:
                out.append(_TState(0, 0, (), _DONE))
            else:
                out.append(_TState(0, 0, tuple(sorted(ops[0].env().items())), _RUN))
        return tuple(out)

    def _advance(self, t: int, ts: _TState, state, steps: list[str]) -> tuple[_TState, tuple]:
        """Run op-boundary pops and purely local statements, logging each
        executed statement into `steps`.  May raise EvalFault (reported by
        the caller)."""
        ops = self.wl.threads[t]
        while ts.phase == _RUN:
            method = ops[ts.op_i].method
            body = self.prog.bodies[method]
            if ts.pc >= len(body):
                if ts.op_i + 1 >= len(ops):
                    return _TState(ts.op_i, 0, (), _DONE), state
                nxt = ops[ts.op_i + 1]
                ts = _TState(ts.op_i + 1, 0, tuple(sorted(nxt.env().items())), _RUN)
                continue
            if not self.prog.local[method][ts.pc]:
                return ts, state
            s = _unwrap(body[ts.pc])
            steps.append(f"t{t}:{stmt_text(s)}")
            env = dict(ts.env)
            if isinstance(s, Goto):
                pc = self.prog.labels[method][s.label]
            elif isinstance(s, CondGoto):
                pc = (
                    self.prog.labels[method][s.label]
                    if eval_bool(s.cond, self.prog.schema, state, env)
                    else ts.pc + 1
                )
            elif isinstance(s, Assign):
                state, env = exec_data_stmt(s, self.prog.schema, state, env)
                pc = ts.pc + 1
            else:  # Skip
                pc = ts.pc + 1
            ts = _TState(ts.op_i, pc, tuple(sorted(env.items())), _RUN)
        return ts, state

    def current_stmt(self, t: int, ts: _TState) -> Stmt:
        method = self.wl.threads[t][ts.op_i].method
        return _unwrap(self.prog.bodies[method][ts.pc])

    def lock_available(self, locks, name: str, t: int) -> bool:
        holder, reserved = locks[self.prog.lock_ids[name]]
        return holder < 0 and reserved in (-1, t)

    def release_choices(self, locks, cvs, threads, name: str):
        """Successor lock tables after t releases `name`: one per blocked
        thread that may be notified, or a single unreserved table."""
        li = self.prog.lock_ids[name]
        waiting = []
        for u, ts in enumerate(threads):
            if ts.phase == _REACQ and ts.extra == name:
                waiting.append(u)
            elif ts.phase == _RUN:
                s = self.current_stmt(u, ts)
                if isinstance(s, LockOp) and s.op == "lock" and s.lock == name:
                    if not self.lock_available(locks, name, u):
                        waiting.append(u)
        base = list(locks)
        if not waiting:
            base[li] = (-1, -1)
            return [tuple(base)]
        out = []
        for u in sorted(waiting):
            nxt = list(locks)
            nxt[li] = (-1, u)
            out.append(tuple(nxt))
        return out


def _waits_for(sim: _Sim, threads, locks) -> tuple[dict[int, int], list[int]]:
    """Edges t -> u: t needs a lock u holds (or is reserved for).  Returns
    (edges, one cycle if present)."""
    edges: dict[int, int] = {}
    for t, ts in enumerate(threads):
        need = None
        if ts.phase == _REACQ:
            need = ts.extra
        elif ts.phase == _RUN:
            s = sim.current_stmt(t, ts)
            if isinstance(s, LockOp) and s.op == "lock":
                need = s.lock
        if need is None:
            continue
        holder, reserved = locks[sim.prog.lock_ids[need]]
        if holder >= 0 and holder != t:
            edges[t] = holder
        elif reserved >= 0 and reserved != t:
            edges[t] = reserved
    for start in sorted(edges):
        seen: list[int] = []
        cur = start
        while cur in edges and cur not in seen:
            seen.append(cur)
            cur = edges[cur]
        if cur in seen:
            return edges, seen[seen.index(cur) :]
    return edges, []


def explore(
    em: ExplicitMonitorAst,
    wl: Workload,
    sigma0=None,
    max_states: int = DEFAULT_MAX_STATES,
) -> ExploreResult:
    """Exhaustive interleaving exploration; memoized DFS over full states."""
    prog = _Prog(em)
    sim = _Sim(prog, wl)
    state0 = sigma0 if sigma0 is not None else initial_state(prog.schema, wl)
    threads0 = sim.init_threads()
    root_steps: list[str] = []
    try:
        threads0, state0 = _advance_all(sim, threads0, state0, root_steps)
    except EvalFault as e:
        v = Verdict("STUCK", None, reason=f"fault: {e}")
        return ExploreResult(frozenset(), [v], [], [v], 0, False)
    locks0 = tuple((-1, -1) for _ in em.locks)
    cvs0 = tuple(frozenset() for _ in em.condvars)
    root = (state0, threads0, locks0, cvs0)

    visited = {root}
    parents: dict[tuple, tuple] = {root: (None, ())}
    stack = [root]
    finals: dict[tuple, tuple] = {}
    deadlock_keys: list[tuple[tuple, list[int], str]] = []
    stuck_keys: list[tuple[tuple, str]] = []
    truncated = False

    while stack:
        key = stack.pop()
        state, threads, locks, cvs = key
        succs, terminals = _successors(sim, key)
        if not succs and not terminals:
            if all(ts.phase == _DONE for ts in threads):
                finals.setdefault(state, key)
            else:
                edges, cycle = _waits_for(sim, threads, locks)
                if cycle:
                    deadlock_keys.append((key, cycle, _dead_reason(sim, threads, locks)))
                else:
                    stuck_keys.append((key, _stuck_reason(sim, threads, cvs)))
            continue
        for reason in terminals:
            stuck_keys.append((key, reason))
        for nkey, label in succs:
            if nkey not in visited:
                if len(visited) >= max_states:
                    truncated = True
                    continue
                visited.add(nkey)
                parents[nkey] = (key, label)
                stack.append(nkey)

    def trace_of(key) -> tuple[str, ...]:
        out: list[str] = []
        while parents[key][0] is not None:
            key, labels = parents[key][0], parents[key][1]
            out.extend(reversed(labels))
        return tuple(root_steps) + tuple(reversed(out))

    final_verdicts = [
        Verdict("FINAL", state=s, trace=trace_of(k)) for s, k in sorted(finals.items())
    ]
    deadlocks = [
        Verdict("DEADLOCK", reason=r, cycle=tuple(c), trace=trace_of(k))
        for k, c, r in deadlock_keys
    ]
    stuck = [Verdict("STUCK", reason=r, trace=trace_of(k)) for k, r in stuck_keys]
    return ExploreResult(
        finals=frozenset(finals),
        verdicts=final_verdicts + deadlocks + stuck,
        deadlocks=deadlocks,
        stuck=stuck,
        visited=len(visited),
        truncated=truncated,
    )


def _advance_all(sim: _Sim, threads, state, steps: list[str]):
    ts = list(threads)
    for t in range(len(ts)):
        ts[t], state = sim._advance(t, ts[t], state, steps)
    return tuple(ts), state


def _dead_reason(sim: _Sim, threads, locks) -> str:
    held = []
    for name, i in sim.prog.lock_ids.items():
        holder, _ = locks[i]
        if holder >= 0:
            held.append(f"{name} held by t{holder}")
    return "; ".join(held)


def _stuck_reason(sim: _Sim, threads, cvs) -> str:
    bits = []
    for t, ts in enumerate(threads):
        if ts.phase == _CV:
            bits.append(f"t{t} waiting on {ts.extra}")
        elif ts.phase == _REACQ:
            bits.append(f"t{t} reacquiring {ts.extra}")
        elif ts.phase == _RUN:
            bits.append(f"t{t} blocked at {stmt_text(sim.current_stmt(t, ts))!r}")
    return "; ".join(bits) or "no enabled thread"


def _successors(sim: _Sim, key) -> tuple[list[tuple[tuple, str]], list[str]]:
    """All (next state, event label) pairs, plus terminal fault reasons."""
    state, threads, locks, cvs = key
    prog = sim.prog
    out: list[tuple[tuple, str]] = []
    faults: list[str] = []

    def pack(nstate, nthreads, nlocks, ncvs, label):
        steps: list[str] = [label]
        try:
            nthreads, nstate = _advance_all(sim, nthreads, nstate, steps)
        except EvalFault as e:
            faults.append(f"fault: {e}")
            return
        out.append(((nstate, tuple(nthreads), nlocks, ncvs), tuple(steps)))

    for t, ts in enumerate(threads):
        if ts.phase == _DONE or ts.phase == _CV:
            continue
        if ts.phase == _REACQ:
            if sim.lock_available(locks, ts.extra, t):
                li = prog.lock_ids[ts.extra]
                nlocks = list(locks)
                nlocks[li] = (t, -1)
                nthreads = list(threads)
                nthreads[t] = _TState(ts.op_i, ts.pc + 1, ts.env, _RUN)
                pack(state, nthreads, tuple(nlocks), cvs, f"t{t}:{ts.extra}.lock();")
            continue
        s = sim.current_stmt(t, ts)
        label = f"t{t}:{stmt_text(s)}"
        if isinstance(s, LockOp):
            li = prog.lock_ids[s.lock]
            if s.op == "lock":
                if sim.lock_available(locks, s.lock, t):
                    nlocks = list(locks)
                    nlocks[li] = (t, -1)
                    nthreads = list(threads)
                    nthreads[t] = _TState(ts.op_i, ts.pc + 1, ts.env, _RUN)
                    pack(state, nthreads, tuple(nlocks), cvs, label)
            else:
                if locks[li][0] != t:
                    faults.append(f"t{t} unlocks {s.lock} while not holding it")
                    continue
                nthreads = list(threads)
                nthreads[t] = _TState(ts.op_i, ts.pc + 1, ts.env, _RUN)
                for nlocks in sim.release_choices(locks, cvs, threads, s.lock):
                    pack(state, list(nthreads), nlocks, cvs, label)
        elif isinstance(s, CondVarOp):
            ci = prog.cv_ids[s.cv]
            owner = prog.cv_owner[s.cv]
            li = prog.lock_ids[owner]
            if s.op == "await":
                if locks[li][0] != t:
                    faults.append(f"t{t} awaits {s.cv} without {owner}")
                    continue
                nthreads = list(threads)
                nthreads[t] = _TState(ts.op_i, ts.pc, ts.env, _CV, s.cv)
                ncvs = list(cvs)
                ncvs[ci] = cvs[ci] | {t}
                for nlocks in sim.release_choices(locks, cvs, threads, owner):
                    pack(state, list(nthreads), nlocks, tuple(ncvs), label)
            else:
                if locks[li][0] != t:
                    faults.append(f"t{t} signals {s.cv} without {owner}")
                    continue
                waiting = sorted(cvs[ci])
                nthreads_base = list(threads)
                nthreads_base[t] = _TState(ts.op_i, ts.pc + 1, ts.env, _RUN)
                if s.op == "signalAll" or not waiting:
                    nthreads = list(nthreads_base)
                    ncvs = list(cvs)
                    woken = waiting if s.op == "signalAll" else []
                    for u in woken:
                        tu = nthreads[u]
                        nthreads[u] = _TState(tu.op_i, tu.pc, tu.env, _REACQ, owner)
                    ncvs[ci] = frozenset() if s.op == "signalAll" else cvs[ci]
                    pack(state, nthreads, locks, tuple(ncvs), label)
                else:  # signal: branch on which waiter wakes
                    for u in waiting:
                        nthreads = list(nthreads_base)
                        tu = nthreads[u]
                        nthreads[u] = _TState(tu.op_i, tu.pc, tu.env, _REACQ, owner)
                        ncvs = list(cvs)
                        ncvs[ci] = cvs[ci] - {u}
                        pack(state, nthreads, locks, tuple(ncvs), label)
        else:
            env = dict(ts.env)
            method = sim.wl.threads[t][ts.op_i].method
            try:
                if isinstance(s, Goto):
                    npc = prog.labels[method][s.label]
                    nstate = state
                elif isinstance(s, CondGoto):
                    npc = (
                        prog.labels[method][s.label]
                        if eval_bool(s.cond, prog.schema, state, env)
                        else ts.pc + 1
                    )
                    nstate = state
                else:
                    nstate, env = exec_data_stmt(s, prog.schema, state, env)
                    npc = ts.pc + 1
            except EvalFault as e:
                faults.append(f"t{t} fault at {stmt_text(s)!r}: {e}")
                continue
            nthreads = list(threads)
            nthreads[t] = _TState(ts.op_i, npc, tuple(sorted(env.items())), _RUN)
            pack(nstate, nthreads, locks, cvs, label)
    return out, faults


def explore_random(
    em: ExplicitMonitorAst,
    wl: Workload,
    sigma0=None,
    samples: int = 100,
    seed: int = 0,
    max_steps: int = 100_000,
) -> ExploreResult:
    """Sample schedules uniformly at each choice point."""
    prog = _Prog(em)
    sim = _Sim(prog, wl)
    rng = random.Random(seed)
    finals: set = set()
    deadlocks: list[Verdict] = []
    stuck: list[Verdict] = []
    seen_reasons: set[str] = set()
    for _ in range(samples):
        state0 = sigma0 if sigma0 is not None else initial_state(prog.schema, wl)
        threads0 = sim.init_threads()
        trace: list[str] = []
        try:
            threads0, state0 = _advance_all(sim, threads0, state0, trace)
        except EvalFault as e:
            stuck.append(Verdict("STUCK", reason=f"fault: {e}"))
            continue
        key = (state0, threads0, tuple((-1, -1) for _ in em.locks), tuple(frozenset() for _ in em.condvars))
        for _ in range(max_steps):
            state, threads, locks, cvs = key
            succs, terms = _successors(sim, key)
            if terms and not succs:
                r = terms[0]
                if r not in seen_reasons:
                    seen_reasons.add(r)
                    stuck.append(Verdict("STUCK", reason=r, trace=tuple(trace)))
                break
            if not succs:
                if all(ts.phase == _DONE for ts in threads):
                    finals.add(state)
                else:
                    edges, cycle = _waits_for(sim, threads, locks)
                    v = (
                        Verdict("DEADLOCK", reason=_dead_reason(sim, threads, locks), cycle=tuple(cycle), trace=tuple(trace))
                        if cycle
                        else Verdict("STUCK", reason=_stuck_reason(sim, threads, cvs), trace=tuple(trace))
                    )
                    if v.reason not in seen_reasons:
                        seen_reasons.add(v.reason)
                        (deadlocks if cycle else stuck).append(v)
                break
            key, labels = succs[rng.randrange(len(succs))]
            trace.extend(labels)
    final_verdicts = [Verdict("FINAL", state=s) for s in sorted(finals)]
    return ExploreResult(
        finals=frozenset(finals),
        verdicts=final_verdicts + deadlocks + stuck,
        deadlocks=deadlocks,
        stuck=stuck,
        visited=0,
        truncated=False,
    )


# ---------------------------------------------------------------------------
# Concretization and replay
# ---------------------------------------------------------------------------


@dataclass
class Concretization:
    ok: bool
    events: list[tuple[int, str]]  # (thread, statement text)
    final: tuple | None
    reason: str = ""


def concretize(
    em: ExplicitMonitorAst, history: tuple[EventI, ...], wl: Workload, sigma0=None
) -> Concretization:
    """Sequential explicit history for one implicit history: each CCR's
    statement block runs contiguously in implicit order.  Region boundaries
    come from the __ccr labels; a single-CCR method needs none."""
    prog = _Prog(em)
    state = sigma0 if sigma0 is not None else initial_state(prog.schema, wl)
    pcs: dict[int, int] = {}
    envs: dict[int, dict] = {}
    held: dict[str, int] = {}
    events: list[tuple[int, str]] = []

    for t, op_i, ccr_k in history:
        op = wl.threads[t][op_i]
        body = prog.bodies[op.method]
        regions = prog.region_start[op.method]
        if ccr_k == 0:
            pcs[t] = 0
            envs[t] = op.env()
        else:
            expect = regions.get(ccr_k)
            if expect is None or pcs.get(t) != expect:
                return Concretization(False, events, None, f"thread {t} not at CCR {ccr_k} boundary")
        stop = regions.get(ccr_k + 1, len(body))
        pc = pcs[t]
        env = envs[t]
        fuel = 100_000
        while pc < stop:
            fuel -= 1
            if fuel <= 0:
                return Concretization(False, events, None, "statement budget exhausted")
            s = _unwrap(body[pc])
            events.append((t, stmt_text(s)))
            try:
                if isinstance(s, LockOp):
                    if s.op == "lock":
                        if s.lock in held:
                            return Concretization(
                                False, events, None, f"{s.lock} unavailable in sequential replay"
                            )
                        held[s.lock] = t
                    else:
                        if held.get(s.lock) != t:
                            return Concretization(False, events, None, f"{s.lock} not held")
                        del held[s.lock]
                    pc += 1
                elif isinstance(s, CondVarOp):
                    if s.op == "await":
                        return Concretization(
                            False, events, None, f"blocked at {s.cv}.await(): guard false at replay"
                        )
                    pc += 1  # notify with no sequential waiters: no-op
                elif isinstance(s, Goto):
                    pc = prog.labels[op.method][s.label]
                elif isinstance(s, CondGoto):
                    pc = (
                        prog.labels[op.method][s.label]
                        if eval_bool(s.cond, prog.schema, state, env)
                        else pc + 1
                    )
                else:
                    state, env = exec_data_stmt(s, prog.schema, state, env)
                    pc += 1
            except EvalFault as e:
                return Concretization(False, events, None, f"fault: {e}")
        pcs[t] = pc
        envs[t] = env
    return Concretization(True, events, state)


def run_explicit(
    em: ExplicitMonitorAst, events: list[tuple[int, str]], wl: Workload, sigma0=None
) -> Verdict:
    """Replay a fixed explicit history.  Notify choices resolve lazily: a
    released lock stays unreserved, so whichever blocked thread's event
    comes next may take it."""
    prog = _Prog(em)
    state = sigma0 if sigma0 is not None else initial_state(prog.schema, wl)
    n = len(wl.threads)
    pos = [(0, 0) for _ in range(n)]  # (op index, pc)
    envs: list[dict] = [wl.threads[t][0].env() if wl.threads[t] else {} for t in range(n)]
    held: dict[str, int] = {}
    waiting: dict[str, set[int]] = {c.name: set() for c in em.condvars}
    credits: dict[str, int] = {c.name: 0 for c in em.condvars}
    trace: list[str] = []

    def stuck(reason: str) -> Verdict:
        edges = {}
        for t in range(n):
            op_i, pc = pos[t]
            if op_i >= len(wl.threads[t]):
                continue
            body = prog.bodies[wl.threads[t][op_i].method]
            if pc < len(body):
                s = _unwrap(body[pc])
                if isinstance(s, LockOp) and s.op == "lock" and held.get(s.lock, t) != t:
                    edges[t] = held[s.lock]
        for start in sorted(edges):
            seen = []
            cur = start
            while cur in edges and cur not in seen:
                seen.append(cur)
                cur = edges[cur]
            if cur in seen:
                return Verdict("DEADLOCK", reason=reason, cycle=tuple(seen[seen.index(cur):]), trace=tuple(trace))
        return Verdict("STUCK", reason=reason, trace=tuple(trace))

    for t, text in events:
        parked = next((cv for cv, members in waiting.items() if t in members), None)
        if parked is not None:
            owner = prog.cv_owner[parked]
            if credits[parked] <= 0:
                return stuck(f"t{t} has an event but was never notified on {parked}")
            if owner in held:
                return stuck(f"t{t} resumes from {parked}.await() but {owner} is held")
            credits[parked] -= 1
            waiting[parked].discard(t)
            held[owner] = t
        op_i, pc = pos[t]
        if op_i >= len(wl.threads[t]):
            return stuck(f"event for finished thread t{t}")
        method = wl.threads[t][op_i].method
        body = prog.bodies[method]
        while pc >= len(body):
            op_i += 1
            pc = 0
            if op_i >= len(wl.threads[t]):
                return stuck(f"event for finished thread t{t}")
            method = wl.threads[t][op_i].method
            body = prog.bodies[method]
            envs[t] = wl.threads[t][op_i].env()
        s = _unwrap(body[pc])
        if stmt_text(s) != text:
            return stuck(f"t{t} event {text!r} does not match program point {stmt_text(s)!r}")
        env = envs[t]
        trace.append(f"t{t}:{text}")
        try:
            if isinstance(s, LockOp):
                if s.op == "lock":
                    if s.lock in held:
                        return stuck(f"t{t} blocked on {s.lock}")
                    held[s.lock] = t
                else:
                    if held.get(s.lock) != t:
                        return stuck(f"t{t} unlocks unheld {s.lock}")
                    del held[s.lock]
                pc += 1
            elif isinstance(s, CondVarOp):
                owner = prog.cv_owner[s.cv]
                if held.get(owner) != t:
                    return stuck(f"t{t} {s.cv}.{s.op}() without {owner}")
                if s.op == "await":
                    del held[owner]
                    waiting[s.cv].add(t)
                    # the resume (notified + reacquired) is validated when
                    # this thread's next event arrives
                    pc += 1
                else:
                    if s.op == "signalAll":
                        credits[s.cv] = len(waiting[s.cv])
                    elif waiting[s.cv]:
                        credits[s.cv] += 1
                    pc += 1
            elif isinstance(s, Goto):
                pc = prog.labels[method][s.label]
            elif isinstance(s, CondGoto):
                pc = prog.labels[method][s.label] if eval_bool(s.cond, prog.schema, state, env) else pc + 1
            else:
                state, env = exec_data_stmt(s, prog.schema, state, env)
                pc += 1
        except EvalFault as e:
            return stuck(f"fault: {e}")
        envs[t] = env
        pos[t] = (op_i, pc)
    for cv, members in waiting.items():
        if members:
            return stuck(f"threads {sorted(members)} still parked on {cv}")
    for t in range(n):
        op_i, pc = pos[t]
        if op_i < len(wl.threads[t]):
            body = prog.bodies[wl.threads[t][op_i].method]
            if pc < len(body) or op_i + 1 < len(wl.threads[t]):
                return stuck(f"t{t} did not finish its operations")
    return Verdict("FINAL", state=state, trace=tuple(trace))


# ---------------------------------------------------------------------------
# Correctness checking
# ---------------------------------------------------------------------------


@dataclass
class CorrectnessReport:
    ok: bool
    cond1_ok: bool
    cond2_ok: bool
    implicit_finals: frozenset
    explicit_finals: frozenset
    histories: int
    failures: list[dict] = field(default_factory=list)
    deadlocks: list[Verdict] = field(default_factory=list)
    stuck: list[Verdict] = field(default_factory=list)
    implicit_blocked: int = 0
    truncated: bool = False

    def to_json(self, schema: Schema) -> dict:
        return {
            "ok": self.ok,
            "concretizations_ok": self.cond1_ok,
            "final_state_inclusion_ok": self.cond2_ok,
            "implicit_histories": self.histories,
            "implicit_final_states": [schema.state_dict(s) for s in sorted(self.implicit_finals)],
            "explicit_final_states": [schema.state_dict(s) for s in sorted(self.explicit_finals)],
            "implicit_blocked_schedules": self.implicit_blocked,
            "failures": self.failures,
            "deadlocks": [
                {"cycle": list(v.cycle), "reason": v.reason, "trace": list(v.trace)}
                for v in self.deadlocks
            ],
            "stuck": [{"reason": v.reason, "trace": list(v.trace)} for v in self.stuck],
            "truncated": self.truncated,
        }


def check_correctness(
    ast: MonitorAst,
    em: ExplicitMonitorAst,
    wl: Workload,
    sigma0=None,
    max_histories: int = DEFAULT_MAX_HISTORIES,
    max_states: int = DEFAULT_MAX_STATES,
) -> CorrectnessReport:
    """Both correctness conditions plus liveness diagnostics.

    A STUCK explicit schedule only fails the check when the implicit
    monitor has no blocked schedule itself (an unbalanced workload blocks
    either way; that is the workload's fault, not the translation's)."""
    imp = enumerate_implicit(ast, wl, sigma0, max_histories=max_histories)
    failures: list[dict] = []
    for hist, final in imp.completes:
        c = concretize(em, hist, wl, sigma0)
        if not c.ok:
            failures.append({"kind": "concretize", "history": _hist_json(hist, wl), "reason": c.reason})
            continue
        verdict = run_explicit(em, c.events, wl, sigma0)
        if verdict.outcome != "FINAL":
            failures.append(
                {"kind": "replay", "history": _hist_json(hist, wl), "reason": verdict.reason}
            )
        elif verdict.state != final:
            failures.append(
                {
                    "kind": "final-state",
                    "history": _hist_json(hist, wl),
                    "implicit": Schema(ast.fields).state_dict(final),
                    "explicit": Schema(ast.fields).state_dict(verdict.state),
                }
            )
    cond1 = not failures

    if wl.mode == "random":
        exp = explore_random(em, wl, sigma0, samples=wl.samples or 100, seed=wl.seed)
    else:
        exp = explore(em, wl, sigma0, max_states=max_states)
    bad_finals = sorted(exp.finals - imp.finals)
    for s in bad_finals:
        failures.append({"kind": "unmatched-final", "state": Schema(ast.fields).state_dict(s)})
    cond2 = not bad_finals

    stuck_fatal = bool(exp.stuck) and not imp.blocked
    ok = cond1 and cond2 and not exp.deadlocks and not stuck_fatal
    return CorrectnessReport(
        ok=ok,
        cond1_ok=cond1,
        cond2_ok=cond2,
        implicit_finals=imp.finals,
        explicit_finals=exp.finals,
        histories=len(imp.completes),
        failures=failures,
        deadlocks=exp.deadlocks,
        stuck=exp.stuck,
        implicit_blocked=len(imp.blocked),
        truncated=imp.truncated or exp.truncated,
    )


def _hist_json(hist: tuple[EventI, ...], wl: Workload) -> list:
    return [
        {"thread": t, "op": wl.threads[t][op_i].method, "ccr": ccr_i} for t, op_i, ccr_i in hist
    ]
