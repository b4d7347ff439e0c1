"""Static analysis: atomic-eligible fields, data races, safe interleavings.

Commutativity is decided exactly on the bounded domains: fragment pairs are
replayed in both orders from every jointly-enabled context.  A context is a
sequentially-reachable monitor state in which each thread's CCR guard held
at entry and its intra-CCR prefix fragments have been re-executed (both
prefix interleavings are enumerated).  Guards of the checked fragments are
treated as assumes in the first order and re-checked as asserts in the
second, so a state that blocks the reordered run is a counterexample.

The state budget counts actual replay evaluations (memoized replays are
free).  Exhausting it degrades answers conservatively: commutativity checks
return false, race refinement falls back to syntactic overlap.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable

from .fdg import Fdg, Fragment
from .frontend import AccessPath, read_write_sets, _expr_names
from .interp import Blocked, EvalFault, Footprint, Schema, eval_bool, exec_ccr, exec_data_stmt
from .syntax import (
    Assign,
    Binary,
    CondGoto,
    Goto,
    ImplicitMethod,
    IntLit,
    Labeled,
    MonitorAst,
    Name,
    SignalDirective,
    Waituntil,
    expr_text,
    stmt_text,
)

DEFAULT_BUDGET = 2_000_000
_FRAG_FUEL = 10_000


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class CommuteVerdict:
    value: bool
    reason: str  # "disjoint" | "checked" | "counterexample" | "budget"
    witness: dict | None = None


@dataclass
class AnalysisResults:
    atomics: frozenset[str]
    races: dict[tuple[int, int], frozenset[AccessPath]]
    safe_interleavings: frozenset[tuple[int, tuple[int, int]]]
    commute: dict[tuple[int, int], CommuteVerdict]
    refined_pairs: tuple[tuple[int, int], ...]
    budget_exceeded: bool
    seq_states: int

    def race(self, v1: int, v2: int) -> frozenset[AccessPath]:
        return self.races.get((min(v1, v2), max(v1, v2)), frozenset())


# ---------------------------------------------------------------------------
# Atomic eligibility
# ---------------------------------------------------------------------------


def atomic_eligible(ast: MonitorAst) -> frozenset[str]:
    """Fields whose every write is f := f +/- c or f := c (c constant or
    parameter).  Scalars only; never-written fields qualify vacuously."""
    param_names = {p.name for m in ast.methods for p in m.params}
    eligible = {f.name for f in ast.fields if not f.is_array}
    for m in ast.methods:
        for ccr in m.ccrs:
            for s in ccr.body:
                if isinstance(s, Labeled):
                    s = s.stmt
                if not isinstance(s, Assign) or s.target not in eligible:
                    continue
                if not _atomic_write_shape(s.target, s.value, param_names):
                    eligible.discard(s.target)
    return frozenset(eligible)


def _atomic_write_shape(fld: str, e, params: set[str]) -> bool:
    def is_const(x) -> bool:
        return isinstance(x, IntLit) or (isinstance(x, Name) and x.ident in params)

    if is_const(e):
        return True  # f := c
    if isinstance(e, Binary) and e.op in ("+", "-"):
        if isinstance(e.left, Name) and e.left.ident == fld and is_const(e.right):
            return True  # f := f +/- c
        if e.op == "+" and isinstance(e.right, Name) and e.right.ident == fld and is_const(e.left):
            return True  # f := c + f
    return False


# ---------------------------------------------------------------------------
# The analyzer
# ---------------------------------------------------------------------------


class Analyzer:
    def __init__(self, ast: MonitorAst, fdg: Fdg, state_budget: int = DEFAULT_BUDGET):
        self.ast = ast
        self.fdg = fdg
        self.schema = Schema(ast.fields)
        self.field_names = {f.name for f in ast.fields}
        self.budget = state_budget
        self.evals = 0
        self.budget_exceeded = False
        self._methods = {m.name: m for m in ast.methods}
        self._reach: list | None = None
        self._left: dict[tuple[int, int], CommuteVerdict] = {}
        self._step_memo: dict = {}
        self._env_cache: dict = {}
        self._plan_cache: dict[int, dict] = {}
        self._hull = self._value_hull()

    # -- plumbing ------------------------------------------------------------

    def _tick(self, n: int = 1) -> None:
        self.evals += n
        if self.evals > self.budget:
            self.budget_exceeded = True
            raise BudgetExceeded

    def _value_hull(self) -> tuple[int, ...]:
        vals = {0}
        for f in self.ast.fields:
            vals.update((f.lo, f.hi))
        for m in self.ast.methods:
            for p in m.params:
                vals.update((p.lo, p.hi))
        lo, hi = min(vals), max(vals)
        return tuple(range(lo, hi + 1))

    def _env_choices(self, method: str, ccr_index: int) -> tuple[dict, ...]:
        """Argument valuations x free-local hull for one CCR."""
        key = (method, ccr_index)
        if key in self._env_cache:
            return self._env_cache[key]
        m = self._methods[method]
        names = [p.name for p in m.params]
        axes: list[Iterable[int]] = [range(p.lo, p.hi + 1) for p in m.params]
        for loc in self._free_locals(m, ccr_index):
            names.append(loc)
            axes.append(self._hull)
        out = tuple(dict(zip(names, combo)) for combo in itertools.product(*axes))
        self._env_cache[key] = out
        return out

    def _free_locals(self, m: ImplicitMethod, ccr_index: int) -> list[str]:
        """Locals possibly read before their first assignment in the CCR."""
        ccr = m.ccrs[ccr_index]
        params = {p.name for p in m.params}
        assigned: set[str] = set()
        free: list[str] = []

        def note_reads(e):
            for n in sorted(_expr_names(e)):
                if n not in self.field_names and n not in params and n not in assigned:
                    if n not in free:
                        free.append(n)

        note_reads(ccr.guard)
        for s in ccr.body:
            if isinstance(s, Labeled):
                s = s.stmt
            reads, _ = read_write_sets(s, self.field_names)
            if isinstance(s, Assign):
                note_reads(s.value)
                if s.target not in self.field_names:
                    assigned.add(s.target)
            else:
                for e in _stmt_exprs(s):
                    note_reads(e)
        return free

    # -- sequential reachability ----------------------------------------------

    def reach_seq(self) -> list:
        """Monitor states reachable by sequences of complete CCR executions
        (guards honored, arguments enumerated).  Sorted for determinism."""
        if self._reach is not None:
            return self._reach
        init = self.schema.initial()
        seen = {init}
        frontier = [init]
        while frontier:
            state = frontier.pop()
            for m in self.ast.methods:
                for k, ccr in enumerate(m.ccrs):
                    for env in self._env_choices(m.name, k):
                        self._tick()
                        try:
                            nxt, _ = exec_ccr(ccr, self.schema, state, dict(env))
                        except (Blocked, EvalFault):
                            continue
                        if nxt not in seen:
                            seen.add(nxt)
                            frontier.append(nxt)
        self._reach = sorted(seen)
        return self._reach

    # -- per-fragment plans ----------------------------------------------------

    def _plan(self, fid: int) -> dict:
        if fid in self._plan_cache:
            return self._plan_cache[fid]
        v = self.fdg.fragment(fid)
        cfg = self.fdg.cfgs[v.method]
        ccr = self._methods[v.method].ccrs[v.ccr_index]
        group = self.fdg.ccr_fragments(v.method, v.ccr_index)
        pos = [g.id for g in group].index(fid)
        prefix = [] if v.kind == "waituntil" else [g for g in group[1:] if g.blocks[0] < v.blocks[0]]

        own_reads: set[AccessPath] = set()
        own_writes: set[AccessPath] = set()
        own_env: set[str] = set()
        for b in v.blocks:
            s = cfg.stmt(b)
            r, w = read_write_sets(s, self.field_names)
            own_reads |= r
            own_writes |= w
            for e in _stmt_exprs(s):
                own_env |= {
                    n for n in _expr_names(e) if n not in self.field_names
                }
        step_fields: set[str] = set(_expr_names(ccr.guard) & self.field_names)
        step_env: set[str] = {n for n in _expr_names(ccr.guard) if n not in self.field_names}
        for p in prefix:
            for b in p.blocks:
                s = cfg.stmt(b)
                r, _ = read_write_sets(s, self.field_names)
                step_fields |= {ap.base for ap in r}
                for e in _stmt_exprs(s):
                    step_env |= {n for n in _expr_names(e) if n not in self.field_names}

        plan = {
            "frag": v,
            "guard": ccr.guard,
            "has_guard_pre": v.kind != "waituntil",
            "prefix": tuple(prefix),
            "own_reads": frozenset(own_reads),
            "own_writes": frozenset(own_writes),
            "own_fields": frozenset({ap.base for ap in own_reads | own_writes}),
            "own_env": tuple(sorted(own_env)),
            "step_slots": tuple(sorted(self.schema.slot[f] for f in step_fields)),
            "step_env": tuple(sorted(step_env)),
        }
        self._plan_cache[fid] = plan
        return plan

    # -- fragment execution -----------------------------------------------------

    def _run_frag(self, v: Fragment, state, env: dict, fp: Footprint | None = None):
        """Walk a fragment's blocks from its entry; (ok, state, env)."""
        cfg = self.fdg.cfgs[v.method]
        inside = set(v.blocks)
        b = v.entry_block
        fuel = _FRAG_FUEL
        try:
            while b in inside:
                fuel -= 1
                if fuel <= 0:
                    raise EvalFault("fuel", "fragment step budget exhausted")
                s = cfg.stmt(b)
                if isinstance(s, Goto):
                    b = cfg.succs[b][0]
                    continue
                if isinstance(s, CondGoto):
                    taken = eval_bool(s.cond, self.schema, state, env, fp)
                    succ = cfg.succs[b]
                    if taken:
                        b = succ[0]
                    elif b in cfg.exit_blocks and len(succ) == 1:
                        break
                    else:
                        b = succ[-1]
                    continue
                if isinstance(s, Waituntil):
                    # only reachable for singleton guard fragments
                    ok = eval_bool(s.pred, self.schema, state, env, fp)
                    return ok, state, env
                state, env = exec_data_stmt(s, self.schema, state, env, fp)
                succ = cfg.succs[b]
                if not succ:
                    break
                b = succ[0]
        except EvalFault:
            return False, state, env
        return True, state, env

    def _ctx_step(self, fid: int, state, env: dict):
        """Guard-at-entry check plus prefix replay for one thread.  Memoized
        on the fields/locals the guard and prefix read."""
        plan = self._plan(fid)
        key = (
            fid,
            tuple(state[i] for i in plan["step_slots"]),
            tuple(env.get(n) for n in plan["step_env"]),
        )
        hit = self._step_memo.get(key)
        if hit is not None:
            ok, writes, env_delta = hit
            if not ok:
                return False, state, env
            for path, val in writes:
                i = self.schema.slot[path.base]
                if path.index is None:
                    state = state[:i] + (val,) + state[i + 1 :]
                else:
                    arr = state[i]
                    state = state[:i] + (arr[: path.index] + (val,) + arr[path.index + 1 :],) + state[i + 1 :]
            if env_delta:
                env = dict(env)
                env.update(env_delta)
            return True, state, env

        self._tick()
        ok = True
        fp = Footprint()
        out_state, out_env = state, dict(env)
        try:
            if plan["has_guard_pre"] and not eval_bool(plan["guard"], self.schema, state, out_env, fp):
                ok = False
        except EvalFault:
            ok = False
        if ok:
            for p in plan["prefix"]:
                ok2, out_state, out_env = self._run_frag(p, out_state, out_env, fp)
                if not ok2:
                    ok = False
                    break
        if not ok:
            self._step_memo[key] = (False, (), {})
            return False, state, env
        writes = []
        for path in sorted(fp.writes, key=str):
            i = self.schema.slot[path.base]
            val = out_state[i] if path.index is None else out_state[i][path.index]
            writes.append((path, val))
        env_delta = {k: v for k, v in out_env.items() if k not in env or env[k] != v}
        self._step_memo[key] = (True, tuple(writes), env_delta)
        return True, out_state, out_env

    def _exec_checked(self, v: Fragment, state, env: dict):
        """Run a fragment as one of the two reordered operations.  Guard
        fragments evaluate their predicate; (ok, state, env)."""
        if v.kind == "waituntil":
            pred = self.fdg.cfgs[v.method].stmt(v.blocks[0]).pred
            try:
                return eval_bool(pred, self.schema, state, env), state, env
            except EvalFault:
                return False, state, env
        return self._run_frag(v, state, env)

    # -- commutativity -----------------------------------------------------------

    def left_commute(self, v_id: int, vp_id: int) -> bool:
        return self.left_verdict(v_id, vp_id).value

    def right_commute(self, v_id: int, vp_id: int) -> bool:
        return self.left_verdict(vp_id, v_id).value

    def left_verdict(self, v_id: int, vp_id: int) -> CommuteVerdict:
        key = (v_id, vp_id)
        if key in self._left:
            return self._left[key]
        try:
            verdict = self._pair_check(v_id, vp_id)
        except BudgetExceeded:
            verdict = CommuteVerdict(False, "budget")
        self._left[key] = verdict
        return verdict

    def _pair_check(self, v_id: int, vp_id: int) -> CommuteVerdict:
        """left_commute: first order (v', t)(v, t'), reordered (v, t')(v', t)."""
        v_plan = self._plan(v_id)
        vp_plan = self._plan(vp_id)
        v, vp = v_plan["frag"], vp_plan["frag"]

        # disjointness fast path: neither writes anything the other touches
        if not _paths_overlap(v_plan["own_writes"], vp_plan["own_reads"] | vp_plan["own_writes"]) and not _paths_overlap(
            vp_plan["own_writes"], v_plan["own_reads"] | v_plan["own_writes"]
        ):
            return CommuteVerdict(True, "disjoint")

        rel_slots = tuple(
            sorted(self.schema.slot[f] for f in v_plan["own_fields"] | vp_plan["own_fields"])
        )
        seen_ctx: set = set()
        for state in self.reach_seq():
            for env_t in self._env_choices(vp.method, vp.ccr_index):
                for env_tp in self._env_choices(v.method, v.ccr_index):
                    for first_vp in (True, False):
                        if first_vp:
                            ok, s1, e_t = self._ctx_step(vp_id, state, dict(env_t))
                            if not ok:
                                continue
                            ok, s2, e_tp = self._ctx_step(v_id, s1, dict(env_tp))
                        else:
                            ok, s1, e_tp = self._ctx_step(v_id, state, dict(env_tp))
                            if not ok:
                                continue
                            ok, s2, e_t = self._ctx_step(vp_id, s1, dict(env_t))
                        if not ok:
                            continue
                        ctx_key = (
                            tuple(s2[i] for i in rel_slots),
                            tuple(e_t.get(n) for n in vp_plan["own_env"]),
                            tuple(e_tp.get(n) for n in v_plan["own_env"]),
                        )
                        if ctx_key in seen_ctx:
                            continue
                        seen_ctx.add(ctx_key)
                        bad = self._check_context(v, vp, s2, e_t, e_tp)
                        if bad is not None:
                            return CommuteVerdict(False, "counterexample", witness=bad)
        return CommuteVerdict(True, "checked")

    def _check_context(self, v: Fragment, vp: Fragment, state, env_t: dict, env_tp: dict):
        """Both orders from one context; None if fine, else a witness."""
        self._tick()
        # first order: (v', t) then (v, t')
        ok, s1, et1 = self._exec_checked(vp, state, dict(env_t))
        if ok:
            ok, s1, etp1 = self._exec_checked(v, s1, dict(env_tp))
        if not ok:
            return None  # first order blocks/faults: nothing to preserve
        # reordered: (v, t') then (v', t)
        ok, s2, etp2 = self._exec_checked(v, state, dict(env_tp))
        if ok:
            ok, s2, et2 = self._exec_checked(vp, s2, dict(env_t))
        if not ok or s1 != s2 or et1 != et2 or etp1 != etp2:
            return {
                "state": self.schema.state_dict(state),
                "args_t": {k: env_t[k] for k in sorted(env_t)},
                "args_t2": {k: env_tp[k] for k in sorted(env_tp)},
                "reordered_blocks": not ok,
            }
        return None

    # -- races ---------------------------------------------------------------------

    def detect_races(self) -> tuple[dict, tuple]:
        """Race map over unordered fragment pairs (self-pairs included) and
        the list of pairs pruned by the reachability refinement."""
        races: dict[tuple[int, int], frozenset[AccessPath]] = {}
        refined: list[tuple[int, int]] = []
        n = len(self.fdg.vertices)
        for i in range(1, n + 1):
            for j in range(i, n + 1):
                syntactic = self._syntactic_race(i, j)
                if not syntactic:
                    continue
                try:
                    dynamic = self._dynamic_race(i, j, syntactic)
                except BudgetExceeded:
                    dynamic = syntactic  # sound fallback
                if dynamic:
                    races[(i, j)] = frozenset(dynamic)
                else:
                    refined.append((i, j))
        return races, tuple(refined)

    def _syntactic_race(self, i: int, j: int) -> frozenset[AccessPath]:
        pi, pj = self._plan(i), self._plan(j)
        out: set[AccessPath] = set()
        for w in pi["own_writes"]:
            if any(w.overlaps(p) for p in pj["own_reads"] | pj["own_writes"]):
                out.add(_canonical(w))
        for w in pj["own_writes"]:
            if any(w.overlaps(p) for p in pi["own_reads"] | pi["own_writes"]):
                out.add(_canonical(w))
        return frozenset(out)

    def _dynamic_race(self, i: int, j: int, bound: frozenset[AccessPath]) -> set[AccessPath]:
        vi = self._plan(i)["frag"]
        vj = self._plan(j)["frag"]
        found: set[AccessPath] = set()
        seen_ctx: set = set()
        for state in self.reach_seq():
            for env_t in self._env_choices(vi.method, vi.ccr_index):
                for env_tp in self._env_choices(vj.method, vj.ccr_index):
                    for first_i in (True, False):
                        if first_i:
                            ok, s1, e1 = self._ctx_step(i, state, dict(env_t))
                            if not ok:
                                continue
                            ok, s2, e2 = self._ctx_step(j, s1, dict(env_tp))
                        else:
                            ok, s1, e2 = self._ctx_step(j, state, dict(env_tp))
                            if not ok:
                                continue
                            ok, s2, e1 = self._ctx_step(i, s1, dict(env_t))
                        if not ok:
                            continue
                        ctx_key = (s2, tuple(sorted(e1.items())), tuple(sorted(e2.items())))
                        if ctx_key in seen_ctx:
                            continue
                        seen_ctx.add(ctx_key)
                        self._tick()
                        fp_i, fp_j = Footprint(), Footprint()
                        self._probe(vi, s2, e1, fp_i)
                        self._probe(vj, s2, e2, fp_j)
                        for w in fp_i.writes:
                            if any(w.overlaps(p) for p in fp_j.reads | fp_j.writes):
                                found.add(_canonical(w))
                        for w in fp_j.writes:
                            if any(w.overlaps(p) for p in fp_i.reads | fp_i.writes):
                                found.add(_canonical(w))
                        if found == bound:
                            return found
        return found

    def _probe(self, v: Fragment, state, env: dict, fp: Footprint) -> None:
        if v.kind == "waituntil":
            pred = self.fdg.cfgs[v.method].stmt(v.blocks[0]).pred
            try:
                eval_bool(pred, self.schema, state, dict(env), fp)
            except EvalFault:
                pass
            return
        ok, _, _ = self._run_frag(v, state, dict(env), fp)
        if not ok:
            # fall back to the syntactic footprint for the faulting side
            plan = self._plan(v.id)
            fp.reads |= plan["own_reads"]
            fp.writes |= plan["own_writes"]

    # -- safe interleavings -----------------------------------------------------------

    def find_safe_interleavings(self) -> frozenset[tuple[int, tuple[int, int]]]:
        """(v, e) pairs strongly safe per the E*-closure conditions."""
        out = set()
        edges = sorted(self.fdg.edges)
        for v in self.fdg.vertices:
            for e in edges:
                s, t = e
                if all(self.left_commute(v.id, p) for p in sorted(self.fdg.preds_star(s))) and all(
                    self.left_commute(q, v.id) for q in sorted(self.fdg.succs_star(t))
                ):
                    out.add((v.id, e))
        return frozenset(out)


def _canonical(p: AccessPath) -> AccessPath:
    return p if p.index is None else AccessPath(p.base, "*")


def _paths_overlap(a: Iterable[AccessPath], b: Iterable[AccessPath]) -> bool:
    return any(x.base == y.base for x in a for y in b)


def _stmt_exprs(s):
    from .syntax import ArrayAssign

    if isinstance(s, Labeled):
        s = s.stmt
    if isinstance(s, Assign):
        return [s.value]
    if isinstance(s, ArrayAssign):
        return [s.index, s.value]
    if isinstance(s, CondGoto):
        return [s.cond]
    if isinstance(s, Waituntil):
        return [s.pred]
    if isinstance(s, SignalDirective):
        return [s.cond]
    return []


# ---------------------------------------------------------------------------
# Entry point and report
# ---------------------------------------------------------------------------


def analyze(ast: MonitorAst, fdg: Fdg, state_budget: int = DEFAULT_BUDGET) -> AnalysisResults:
    az = Analyzer(ast, fdg, state_budget)
    atomics = atomic_eligible(ast)
    races, refined = az.detect_races()
    safe = az.find_safe_interleavings()
    try:
        seq_states = len(az.reach_seq())
    except BudgetExceeded:
        seq_states = 0  # the walk never completed; budget_exceeded says so
    return AnalysisResults(
        atomics=atomics,
        races=races,
        safe_interleavings=safe,
        commute={k: v for k, v in sorted(az._left.items())},
        refined_pairs=refined,
        budget_exceeded=az.budget_exceeded,
        seq_states=seq_states,
    )


def report_json(res: AnalysisResults, fdg: Fdg) -> str:
    doc = {
        "atomics": sorted(res.atomics),
        "races": [
            {"pair": list(pair), "paths": sorted(str(p) for p in paths)}
            for pair, paths in sorted(res.races.items())
        ],
        "refined_pairs": [list(p) for p in res.refined_pairs],
        "safe_interleavings": sorted(
            [v, [a, b]] for v, (a, b) in res.safe_interleavings
        ),
        "commutativity": [
            {
                "left_commute": list(pair),
                "value": verdict.value,
                "reason": verdict.reason,
                **({"witness": verdict.witness} if verdict.witness else {}),
            }
            for pair, verdict in sorted(res.commute.items())
        ],
        "sequential_states": res.seq_states,
        "budget_exceeded": res.budget_exceeded,
    }
    return json.dumps(doc, indent=2)
