"""Weighted partial MaxSAT encoding of lock assignment, and its solver.

Variables: h[v][l] (fragment v holds lock l) and a[f] (field f becomes an
atomic register).  Hard rules make the protocol safe; soft rules trade
parallelism against lock and atomic count.  The embedded solver is an exact
deterministic branch-and-bound over the h/a decision variables; auxiliary
variables (mutex witnesses and soft-rule indicators) are fully determined by
unit propagation.  A WCNF export plus external-solver hook is provided for
larger instances.
"""

from __future__ import annotations

import itertools
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from .analysis import Analyzer, atomic_eligible
from .fdg import Fdg, build_fdg
from .frontend import AccessPath
from .syntax import MonitorAst, expr_text, is_trivially_true

DEFAULT_SOLVER_TIMEOUT = 30.0


class SolverTimeout(Exception):
    pass


@dataclass(frozen=True)
class Weights:
    par: int = 8
    lock: int = 4
    atom: int = 2


@dataclass
class Encoding:
    num_locks: int
    nvars: int
    hard: list[list[int]]
    soft: list[tuple[str, object, int, int]]  # (kind, key, weight, lit)
    varmap: dict[str, int]
    h: dict[tuple[int, int], int]
    a: dict[str, int]
    signal_ids: frozenset[int]
    eligible: frozenset[str]
    weights: Weights

    @property
    def total_soft(self) -> int:
        return sum(w for _, _, w, _ in self.soft)


@dataclass
class SolveResult:
    status: str  # "OPTIMUM" | "UNSAT"
    model: dict[int, bool] | None
    satisfied: int
    penalty: int


@dataclass
class Protocol:
    num_locks: int
    locksets: dict[int, frozenset[int]]
    atomics: frozenset[str]
    cv_locks: dict[str, int]  # predicate text -> lock owning its condvar
    cv_order: tuple[str, ...]
    objective: int  # satisfied soft weight
    penalty: int


@dataclass
class SynthesisResult:
    signaled: MonitorAst
    fdg: Fdg
    races: dict[tuple[int, int], frozenset[AccessPath]]
    refined_pairs: tuple[tuple[int, int], ...]
    safe_interleavings: frozenset
    eligible: frozenset[str]
    protocol: Protocol
    iterations: list[tuple[int, int, int]]  # (num_locks, penalty, satisfied)
    max_locks_bound: int
    timed_out: bool
    budget_exceeded: bool


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def compute_max_locks(races: dict[tuple[int, int], frozenset]) -> int:
    """Upper bound on useful lock count from the conflict graph: no edge
    clique cover is larger than min(|E|, n^2/4)."""
    edges = [p for p, paths in races.items() if paths]
    verts = {v for p in edges for v in p}
    n = len(verts)
    if not edges:
        return 1
    return max(1, min(len(edges), (n * n) // 4))


def encode(
    fdg: Fdg,
    *,
    eligible: frozenset[str],
    races: dict[tuple[int, int], frozenset],
    safe: frozenset,
    num_locks: int,
    weights: Weights = Weights(),
) -> Encoding:
    n = len(fdg.vertices)
    locks = range(1, num_locks + 1)
    varmap: dict[str, int] = {}
    counter = itertools.count(1)

    def newvar(name: str) -> int:
        i = next(counter)
        varmap[name] = i
        return i

    h = {(v, l): newvar(f"h_{v}_{l}") for v in range(1, n + 1) for l in locks}
    a = {f: newvar(f"a_{f}") for f in sorted(eligible)}

    hard: list[list[int]] = []
    soft: list[tuple[str, object, int, int]] = []
    mux: dict[tuple[frozenset, int], int] = {}
    signal_ids = frozenset(v.id for v in fdg.vertices if v.kind == "signal")

    def mutex_lits(group: frozenset[int]) -> list[int]:
        """One literal per lock, true iff every fragment in the group holds
        that lock.  Singleton groups use h directly."""
        if len(group) == 1:
            (v,) = group
            return [h[(v, l)] for l in locks]
        out = []
        for l in locks:
            key = (group, l)
            m = mux.get(key)
            if m is None:
                m = newvar(f"mux_{'_'.join(map(str, sorted(group)))}_{l}")
                mux[key] = m
                members = [h[(v, l)] for v in sorted(group)]
                for hv in members:
                    hard.append([-m, hv])
                hard.append([m] + [-hv for hv in members])
            out.append(m)
        return out

    def cross_ccr(s: int, t: int) -> bool:
        return fdg.fragment(s).ccr_index != fdg.fragment(t).ccr_index

    # Race rules: racing pairs share a lock; a lone race on an eligible
    # scalar may instead make that field atomic.
    for (v1, v2), paths in sorted(races.items()):
        bases = sorted({p.base for p in paths})
        lits = mutex_lits(frozenset({v1, v2}))
        if len(bases) == 1 and bases[0] in eligible:
            hard.append(lits + [a[bases[0]]])
        else:
            hard.append(list(lits))

    # Interleaving rule: an unsafe (v, e) forces v to exclude the edge by
    # sharing a lock with both endpoints.  Signal-fragment endpoints are
    # lock-free by construction and waituntil boundaries release everything,
    # so those edges carry no lock continuity to protect.
    edges = sorted(fdg.edges)
    for v in range(1, n + 1):
        for e in edges:
            s, t = e
            if (v, e) in safe:
                continue
            if s in signal_ids or t in signal_ids or cross_ccr(s, t):
                continue
            hard.append(list(mutex_lits(frozenset({v, s, t}))))

    # Wait rule: all waiters on one predicate share an identical, nonempty
    # lockset (the condvar's lock lives in it).
    registry = _predicate_registry(fdg)
    for pred_text, waiters in registry:
        hard.append(list(mutex_lits(frozenset(waiters))))
        for v, w in itertools.combinations(sorted(waiters), 2):
            for l in locks:
                hard.append([-h[(v, l)], h[(w, l)]])
                hard.append([-h[(w, l)], h[(v, l)]])

    # Lock order: along an edge, never acquire a lower lock while keeping a
    # higher one.
    for s, t in edges:
        if cross_ccr(s, t):
            continue
        for u in locks:
            for lo in range(1, u):
                hard.append([-h[(s, u)], -h[(t, u)], h[(s, lo)], -h[(t, lo)]])

    # Signal fragments never hold locks.
    for sid in sorted(signal_ids):
        for l in locks:
            hard.append([-h[(sid, l)]])

    # Max-Par: reward race-free pairs (self-pairs included) that share no lock.
    racing = set(races)
    for v1 in range(1, n + 1):
        for v2 in range(v1, n + 1):
            if (v1, v2) in racing:
                continue
            z = newvar(f"par_{v1}_{v2}")
            lits = mutex_lits(frozenset({v1, v2}))
            for m in lits:
                hard.append([-z, -m])
            hard.append([z] + lits)
            soft.append(("par", (v1, v2), weights.par, z))

    # Min-Lock: reward each method x lock it avoids entirely.
    for method in fdg.cfgs:
        frags = [v.id for v in fdg.vertices if v.method == method]
        for l in locks:
            y = newvar(f"ml_{method}_{l}")
            for v in frags:
                hard.append([-y, -h[(v, l)]])
            hard.append([y] + [h[(v, l)] for v in frags])
            soft.append(("lock", (method, l), weights.lock, y))

    # Min-Atom: atomics cost a little.
    for f in sorted(eligible):
        soft.append(("atom", f, weights.atom, -a[f]))

    nvars = next(counter) - 1
    return Encoding(
        num_locks=num_locks,
        nvars=nvars,
        hard=hard,
        soft=soft,
        varmap=varmap,
        h=h,
        a=a,
        signal_ids=signal_ids,
        eligible=eligible,
        weights=weights,
    )


def _predicate_registry(fdg: Fdg) -> list[tuple[str, list[int]]]:
    """Non-trivial waituntil predicates in first-occurrence order, each with
    its waiter fragment ids."""
    order: list[str] = []
    waiters: dict[str, list[int]] = {}
    for v in fdg.vertices:
        if v.kind != "waituntil":
            continue
        pred = fdg.cfgs[v.method].stmt(v.blocks[0]).pred
        if is_trivially_true(pred):
            continue
        text = expr_text(pred)
        if text not in waiters:
            order.append(text)
            waiters[text] = []
        waiters[text].append(v.id)
    return [(t, waiters[t]) for t in order]


# ---------------------------------------------------------------------------
# Embedded exact solver
# ---------------------------------------------------------------------------


def solve(
    enc: Encoding,
    timeout: float = DEFAULT_SOLVER_TIMEOUT,
    solver_cmd: str | None = None,
) -> SolveResult:
    if solver_cmd:
        return _solve_external(enc, solver_cmd, timeout)
    return _branch_and_bound(enc, timeout)


def _branch_and_bound(enc: Encoding, timeout: float) -> SolveResult:
    n = enc.nvars
    clauses = [tuple(c) for c in enc.hard]
    occ_pos: list[list[int]] = [[] for _ in range(n + 1)]
    occ_neg: list[list[int]] = [[] for _ in range(n + 1)]
    for ci, cl in enumerate(clauses):
        for lit in cl:
            (occ_pos if lit > 0 else occ_neg)[abs(lit)].append(ci)

    assign: list[bool | None] = [None] * (n + 1)
    trail: list[int] = []

    def val(lit: int):
        v = assign[abs(lit)]
        if v is None:
            return None
        return v if lit > 0 else not v

    def push(lit: int) -> None:
        assign[abs(lit)] = lit > 0
        trail.append(abs(lit))

    def propagate(queue: list[int]) -> bool:
        qi = 0
        while qi < len(queue):
            lit = queue[qi]
            qi += 1
            watch = occ_neg[lit] if lit > 0 else occ_pos[-lit]
            for ci in watch:
                cl = clauses[ci]
                unit = None
                sat = False
                free = 0
                for L in cl:
                    x = val(L)
                    if x is True:
                        sat = True
                        break
                    if x is None:
                        free += 1
                        unit = L
                        if free > 1:
                            break
                if sat or free > 1:
                    continue
                if free == 0:
                    return False
                if val(unit) is None:
                    push(unit)
                    queue.append(unit)
        return True

    # decision order: h by (fragment, lock), then a by name; first value is
    # the all-locked seed, giving an immediate feasible upper bound
    decisions = [enc.h[k] for k in sorted(enc.h)] + [enc.a[f] for f in sorted(enc.a)]
    first_true = {v: True for v in enc.h.values()}
    first_true.update({v: False for v in enc.a.values()})
    softs = [(w, lit) for _, _, w, lit in enc.soft]

    deadline = time.monotonic() + timeout
    nodes = 0
    best_pen: int | None = None
    best_model: list[bool | None] | None = None

    init: list[int] = []
    for cl in clauses:
        if len(cl) == 1 and val(cl[0]) is None:
            push(cl[0])
            init.append(cl[0])
    if not propagate(init):
        return SolveResult("UNSAT", None, 0, 0)

    def lower_bound() -> int:
        return sum(w for w, lit in softs if val(lit) is False)

    def dfs() -> None:
        nonlocal nodes, best_pen, best_model
        nodes += 1
        if (nodes == 1 or nodes % 512 == 0) and time.monotonic() > deadline:
            raise SolverTimeout
        if best_pen is not None and lower_bound() >= best_pen:
            return
        var = next((v for v in decisions if assign[v] is None), None)
        if var is None:
            pen = lower_bound()
            if best_pen is None or pen < best_pen:
                best_pen = pen
                best_model = assign.copy()
            return
        for value in (first_true[var], not first_true[var]):
            mark = len(trail)
            lit = var if value else -var
            push(lit)
            if propagate([lit]):
                dfs()
            while len(trail) > mark:
                assign[trail.pop()] = None
            if best_pen == 0:
                return

    dfs()
    if best_pen is None:
        return SolveResult("UNSAT", None, 0, 0)
    model = {i: bool(best_model[i]) for i in range(1, n + 1)}
    return SolveResult("OPTIMUM", model, enc.total_soft - best_pen, best_pen)


# ---------------------------------------------------------------------------
# WCNF export and external solvers
# ---------------------------------------------------------------------------


def wcnf_text(enc: Encoding) -> str:
    top = enc.total_soft + 1
    lines = [f"p wcnf {enc.nvars} {len(enc.hard) + len(enc.soft)} {top}"]
    for cl in enc.hard:
        lines.append(f"{top} " + " ".join(map(str, cl)) + " 0")
    for _, _, w, lit in enc.soft:
        lines.append(f"{w} {lit} 0")
    return "\n".join(lines) + "\n"


def varmap_json(enc: Encoding) -> dict[str, int]:
    return dict(enc.varmap)


def parse_wcnf(text: str) -> Encoding:
    """Read a standalone weighted-CNF instance.  Clauses whose weight equals
    the top weight are hard.  Multi-literal soft clauses get a fresh
    selector variable so the solver can score them as units."""
    nvars = top = 0
    raw: list[tuple[int, list[int]]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 5 or parts[1] != "wcnf":
                raise ValueError(f"bad problem line: {line!r}")
            nvars, top = int(parts[2]), int(parts[4])
            continue
        nums = [int(x) for x in line.split()]
        if nums[-1] != 0:
            raise ValueError(f"clause not 0-terminated: {line!r}")
        w, lits = nums[0], nums[1:-1]
        if any(abs(l) > nvars or l == 0 for l in lits):
            raise ValueError(f"literal out of range: {line!r}")
        raw.append((w, lits))
    hard: list[list[int]] = []
    soft: list[tuple[str, object, int, int]] = []
    extra = 0
    for idx, (w, lits) in enumerate(raw):
        if top and w >= top:
            hard.append(lits)
        elif len(lits) == 1:
            soft.append(("ext", idx, w, lits[0]))
        else:
            extra += 1
            z = nvars + extra
            hard.append([-z] + lits)
            for l in lits:
                hard.append([z, -l])
            soft.append(("ext", idx, w, z))
    # every original variable is a decision variable; selectors propagate
    a = {f"x{i:06d}": i for i in range(1, nvars + 1)}
    return Encoding(
        num_locks=0,
        nvars=nvars + extra,
        hard=hard,
        soft=soft,
        varmap=dict(a),
        h={},
        a=a,
        signal_ids=frozenset(),
        eligible=frozenset(),
        weights=Weights(),
    )


def parallel_pairs(res: SynthesisResult) -> int:
    """Unordered pairs of non-signal fragments free to overlap: race-free
    and sharing no lock."""
    frags = [v.id for v in res.fdg.vertices if v.kind != "signal"]
    racing = set(res.races)
    ls = res.protocol.locksets
    n = 0
    for i, u in enumerate(frags):
        for v in frags[i:]:
            if (u, v) in racing or (v, u) in racing:
                continue
            if ls.get(u, frozenset()) & ls.get(v, frozenset()):
                continue
            n += 1
    return n


def parse_solver_output(text: str, nvars: int) -> tuple[str, dict[int, bool] | None]:
    """Read s/v lines; v lines may use signed literals or 0/1 strings."""
    status = ""
    bits: list[str] = []
    lits: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("s "):
            status = line[2:].strip()
        elif line.startswith("v "):
            for tok in line[2:].split():
                if set(tok) <= {"0", "1"} and len(tok) > 1:
                    bits.append(tok)
                else:
                    try:
                        lits.append(int(tok))
                    except ValueError:
                        pass
    if "UNSAT" in status.upper():
        return "UNSAT", None
    model: dict[int, bool] = {}
    if bits:
        s = "".join(bits)
        for i in range(1, min(nvars, len(s)) + 1):
            model[i] = s[i - 1] == "1"
    for lit in lits:
        if lit != 0 and abs(lit) <= nvars:
            model[abs(lit)] = lit > 0
    if len(model) < nvars:
        # single 0/1 token models shorter than nvars are rejected above;
        # missing vars default false
        for i in range(1, nvars + 1):
            model.setdefault(i, False)
    return ("OPTIMUM" if model else status or "UNKNOWN"), (model or None)


def _solve_external(enc: Encoding, solver_cmd: str, timeout: float) -> SolveResult:
    with tempfile.NamedTemporaryFile("w", suffix=".wcnf", delete=False) as fh:
        fh.write(wcnf_text(enc))
        path = fh.name
    try:
        proc = subprocess.run(
            shlex.split(solver_cmd) + [path],
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as exc:
        raise SolverTimeout from exc
    status, model = parse_solver_output(proc.stdout, enc.nvars)
    if status == "UNSAT":
        return SolveResult("UNSAT", None, 0, 0)
    if model is None:
        raise RuntimeError(f"external solver produced no model (status {status!r})")
    for cl in enc.hard:
        if not any(model[abs(l)] == (l > 0) for l in cl):
            raise RuntimeError("external solver model violates a hard clause")
    sat = sum(w for _, _, w, lit in enc.soft if model[abs(lit)] == (lit > 0))
    return SolveResult("OPTIMUM", model, sat, enc.total_soft - sat)


# ---------------------------------------------------------------------------
# Protocol extraction and the lock-count search
# ---------------------------------------------------------------------------


def extract_protocol(enc: Encoding, res: SolveResult, fdg: Fdg) -> Protocol:
    assert res.model is not None
    raw = {
        v.id: frozenset(l for l in range(1, enc.num_locks + 1) if res.model[enc.h[(v.id, l)]])
        for v in fdg.vertices
    }
    used = sorted({l for ls in raw.values() for l in ls})
    remap = {old: i + 1 for i, old in enumerate(used)}
    locksets = {v: frozenset(remap[l] for l in ls) for v, ls in raw.items()}
    atomics = frozenset(f for f in enc.eligible if res.model[enc.a[f]])
    registry = _predicate_registry(fdg)
    cv_locks: dict[str, int] = {}
    for text, waiters in registry:
        ls = locksets[waiters[0]]
        assert ls, "waiters must hold the condvar lock"
        cv_locks[text] = min(ls)
    return Protocol(
        num_locks=len(used),
        locksets=locksets,
        atomics=atomics,
        cv_locks=cv_locks,
        cv_order=tuple(t for t, _ in registry),
        objective=res.satisfied,
        penalty=res.penalty,
    )


def synthesize_protocol(
    ast: MonitorAst,
    *,
    partition: str = "paper",
    max_locks: int | None = None,
    weights: Weights = Weights(),
    state_budget: int | None = None,
    solver_timeout: float = DEFAULT_SOLVER_TIMEOUT,
    solver_cmd: str | None = None,
) -> SynthesisResult:
    """Signal placement, analysis, then the increasing-lock-count search:
    stop as soon as an extra lock fails to lower the penalty."""
    from .codegen import place_signals  # cycle: codegen consumes Protocol

    from .analysis import DEFAULT_BUDGET
    from .frontend import desugar

    ast = desugar(ast)
    signaled = place_signals(ast)
    fdg = build_fdg(signaled, partition_mode=partition)
    az = Analyzer(signaled, fdg, state_budget if state_budget is not None else DEFAULT_BUDGET)
    eligible = atomic_eligible(signaled)
    races, refined = az.detect_races()
    safe = az.find_safe_interleavings()
    bound = max_locks if max_locks is not None else compute_max_locks(races)

    iterations: list[tuple[int, int, int]] = []
    best: tuple[Encoding, SolveResult] | None = None
    timed_out = False
    for i in range(1, bound + 1):
        enc = encode(
            fdg, eligible=eligible, races=races, safe=safe, num_locks=i, weights=weights
        )
        try:
            res = solve(enc, timeout=solver_timeout, solver_cmd=solver_cmd)
        except SolverTimeout:
            if best is None:
                raise
            timed_out = True
            break
        assert res.status == "OPTIMUM", "a global lock always satisfies the hard rules"
        iterations.append((i, res.penalty, res.satisfied))
        if best is not None and res.penalty >= best[1].penalty:
            break
        best = (enc, res)
    assert best is not None
    protocol = extract_protocol(best[0], best[1], fdg)
    return SynthesisResult(
        signaled=signaled,
        fdg=fdg,
        races=races,
        refined_pairs=refined,
        safe_interleavings=safe,
        eligible=eligible,
        protocol=protocol,
        iterations=iterations,
        max_locks_bound=bound,
        timed_out=timed_out,
        budget_exceeded=az.budget_exceeded,
    )
