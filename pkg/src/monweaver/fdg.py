"""Control-flow graphs, fragment partitioning, fragment dependency graphs.

Every atomic statement gets its own CFG block (waituntil guards included).
The default partitioner follows the loop / store-boundary / guard-singleton
heuristic; `stmt` and `ccr` modes are ablation alternatives that still keep
guards and signal directives as singleton fragments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

from .syntax import (
    Assign,
    ArrayAssign,
    CondGoto,
    Goto,
    ImplicitMethod,
    Labeled,
    MonitorAst,
    SignalDirective,
    Stmt,
    Waituntil,
    stmt_text,
)


class CfgError(Exception):
    """Structural problem in a method body (unreachable code, bad label)."""


@dataclass
class Cfg:
    """One method's CFG.  Block ids are positions in `stmts`."""

    method: str
    stmts: list[Stmt]
    ccr_of: list[int]
    succs: list[tuple[int, ...]]
    entry: int
    exit_blocks: frozenset[int]

    @cached_property
    def preds(self) -> list[tuple[int, ...]]:
        p: list[list[int]] = [[] for _ in self.stmts]
        for a, outs in enumerate(self.succs):
            for b in outs:
                p[b].append(a)
        return [tuple(x) for x in p]

    def stmt(self, b: int) -> Stmt:
        s = self.stmts[b]
        return s.stmt if isinstance(s, Labeled) else s


def _is_store(s: Stmt, field_names: set[str]) -> bool:
    if isinstance(s, Labeled):
        s = s.stmt
    if isinstance(s, ArrayAssign):
        return True
    return isinstance(s, Assign) and s.target in field_names


def build_cfg(m: ImplicitMethod, field_names: set[str]) -> Cfg:
    """One block per atomic statement; CCR guards become waituntil blocks."""
    stmts: list[Stmt] = []
    ccr_of: list[int] = []
    ranges: list[tuple[int, int]] = []  # per CCR: [start, end) of body blocks
    guard_block: list[int] = []
    for k, ccr in enumerate(m.ccrs):
        guard_block.append(len(stmts))
        stmts.append(Waituntil(ccr.guard))
        ccr_of.append(k)
        start = len(stmts)
        for s in ccr.body:
            stmts.append(s)
            ccr_of.append(k)
        ranges.append((start, len(stmts)))

    n = len(stmts)
    succs: list[list[int]] = [[] for _ in range(n)]
    exit_blocks: set[int] = set()

    def fallthrough(b: int, k: int) -> int | None:
        # next block in program order, or the next CCR's guard, or method exit
        end = ranges[k][1]
        if b + 1 < end:
            return b + 1
        if k + 1 < len(m.ccrs):
            return guard_block[k + 1]
        return None

    for k, ccr in enumerate(m.ccrs):
        start, end = ranges[k]
        labels = {
            stmts[b].label: b for b in range(start, end) if isinstance(stmts[b], Labeled)
        }
        gb = guard_block[k]
        if start < end:
            succs[gb].append(start)
        else:
            nxt = fallthrough(gb, k)  # empty body: guard falls through
            if nxt is not None:
                succs[gb].append(nxt)
            else:
                exit_blocks.add(gb)
        for b in range(start, end):
            s = stmts[b]
            if isinstance(s, Labeled):
                s = s.stmt
            targets: list[int] = []
            if isinstance(s, Goto):
                if s.label not in labels:
                    raise CfgError(f"unresolved label {s.label!r} in {m.name}")
                targets = [labels[s.label]]
            else:
                if isinstance(s, CondGoto):
                    if s.label not in labels:
                        raise CfgError(f"unresolved label {s.label!r} in {m.name}")
                    targets.append(labels[s.label])
                nxt = fallthrough(b, k)
                if nxt is None:
                    exit_blocks.add(b)
                else:
                    targets.append(nxt)
            succs[b].extend(t for t in targets if t not in succs[b])

    cfg = Cfg(m.name, stmts, ccr_of, [tuple(x) for x in succs], entry=0, exit_blocks=frozenset(exit_blocks))
    # reachability check (Cfg invariant)
    seen = {0}
    work = [0]
    while work:
        for t in cfg.succs[work.pop()]:
            if t not in seen:
                seen.add(t)
                work.append(t)
    if len(seen) != n:
        dead = min(set(range(n)) - seen)
        raise CfgError(f"unreachable statement in {m.name}: {stmt_text(cfg.stmt(dead))!r}")
    return cfg


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fragment:
    id: int
    method: str
    blocks: tuple[int, ...]  # sorted block ids
    entry_block: int
    kind: str  # "waituntil" | "signal" | "plain"
    ccr_index: int


def _sccs(n: int, succs) -> list[list[int]]:
    """Tarjan, iterative.  Returns SCCs as lists of block ids."""
    index = [-1] * n
    low = [0] * n
    on = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on[v] = True
            recurse = False
            for i in range(pi, len(succs[v])):
                w = succs[v][i]
                if index[w] == -1:
                    work[-1] = (v, i + 1)
                    work.append((w, 0))
                    recurse = True
                    break
                if on[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def partition(cfg: Cfg, field_names: set[str], mode: str = "paper") -> list[list[int]]:
    """Split CFG blocks into fragments (lists of block ids, program order).

    Singleton rules (all modes): waituntil and signal-directive blocks.
    `paper`: loops whole; a field store ends its fragment; greedy otherwise.
    `stmt`: every block alone.  `ccr`: one fragment per CCR body chunk.
    """
    n = len(cfg.stmts)
    if mode == "stmt":
        return [[b] for b in range(n)]

    # collapse loop SCCs into units; units ordered by min block id
    unit_of = list(range(n))
    loops: dict[int, list[int]] = {}
    for comp in _sccs(n, cfg.succs):
        internal = len(comp) > 1 or comp[0] in cfg.succs[comp[0]]
        if internal:
            comp.sort()
            lead = comp[0]
            loops[lead] = comp
            for b in comp:
                unit_of[b] = lead
            for b in comp:
                s = cfg.stmt(b)
                if isinstance(s, (Waituntil, SignalDirective)):
                    raise CfgError(f"{cfg.method}: guard/signal inside a loop is unsupported")
    units = sorted(set(unit_of))

    def blocks_of(u: int) -> list[int]:
        return loops.get(u, [u])

    def singleton(u: int) -> bool:
        if u in loops:
            return False
        s = cfg.stmt(u)
        return isinstance(s, (Waituntil, SignalDirective))

    frags: list[list[int]] = []
    if mode == "ccr":
        chunk: list[int] = []
        cur_ccr = -1
        for u in units:
            if singleton(u) or (chunk and cfg.ccr_of[u] != cur_ccr):
                if chunk:
                    frags.append(chunk)
                    chunk = []
            if singleton(u):
                frags.append([u])
            else:
                chunk.extend(blocks_of(u))
                cur_ccr = cfg.ccr_of[u]
        if chunk:
            frags.append(chunk)
        return frags

    if mode != "paper":
        raise ValueError(f"unknown partition mode {mode!r}")

    chunk: list[int] = []
    chunkset: set[int] = set()

    def flush():
        nonlocal chunk, chunkset
        if chunk:
            frags.append(chunk)
        chunk, chunkset = [], set()

    for u in units:
        if singleton(u):
            flush()
            frags.append([u])
            continue
        if u in loops:
            flush()
            frags.append(blocks_of(u))
            continue
        joinable = chunk and all(p in chunkset for p in cfg.preds[u])
        if not joinable:
            flush()
        chunk.extend(blocks_of(u))
        chunkset.update(blocks_of(u))
        if _is_store(cfg.stmts[u], field_names):
            flush()  # boundary sits after the store
    flush()
    return frags


# ---------------------------------------------------------------------------
# Fragment dependency graph
# ---------------------------------------------------------------------------


@dataclass
class Fdg:
    vertices: list[Fragment]
    edges: frozenset[tuple[int, int]]
    cfgs: dict[str, Cfg]
    method_entry: dict[str, int]
    method_exits: dict[str, tuple[int, ...]]

    def fragment(self, fid: int) -> Fragment:
        return self.vertices[fid - 1]

    def frag_of_block(self, method: str, block: int) -> Fragment:
        for v in self.vertices:
            if v.method == method and block in v.blocks:
                return v
        raise KeyError((method, block))

    def stmts_of(self, v: Fragment) -> list[Stmt]:
        cfg = self.cfgs[v.method]
        return [cfg.stmt(b) for b in v.blocks]

    def succs(self, fid: int) -> list[int]:
        return sorted(b for a, b in self.edges if a == fid)

    def preds(self, fid: int) -> list[int]:
        return sorted(a for a, b in self.edges if b == fid)

    def _closure(self, start: int, step) -> frozenset[int]:
        seen = {start}
        work = [start]
        while work:
            for t in step(work.pop()):
                if t not in seen:
                    seen.add(t)
                    work.append(t)
        return frozenset(seen)

    def preds_star(self, fid: int) -> frozenset[int]:
        """E*-predecessors, reflexive-transitive."""
        return self._closure(fid, self.preds)

    def succs_star(self, fid: int) -> frozenset[int]:
        return self._closure(fid, self.succs)

    def ccr_fragments(self, method: str, ccr_index: int) -> list[Fragment]:
        """Fragments of one CCR in program order."""
        vs = [v for v in self.vertices if v.method == method and v.ccr_index == ccr_index]
        return sorted(vs, key=lambda v: v.blocks[0])


def build_fdg(ast: MonitorAst, partition_mode: str = "paper") -> Fdg:
    """CFGs for every method, partition, then union the per-method graphs.

    Fragment ids are global, 1-based, assigned per method in topological
    order (program order breaking ties).
    """
    field_names = {f.name for f in ast.fields}
    vertices: list[Fragment] = []
    edges: set[tuple[int, int]] = set()
    cfgs: dict[str, Cfg] = {}
    method_entry: dict[str, int] = {}
    method_exits: dict[str, list[int]] = {}

    for m in ast.methods:
        cfg = build_cfg(m, field_names)
        cfgs[m.name] = cfg
        frag_blocks = partition(cfg, field_names, partition_mode)
        _check_partition(cfg, frag_blocks)

        idx_of_block: dict[int, int] = {}
        for i, blocks in enumerate(frag_blocks):
            for b in blocks:
                idx_of_block[b] = i

        # local fragment edges, then topological id assignment
        local_edges: set[tuple[int, int]] = set()
        for a in range(len(cfg.stmts)):
            for b in cfg.succs[a]:
                fa, fb = idx_of_block[a], idx_of_block[b]
                if fa != fb:
                    local_edges.add((fa, fb))
        order = _topo_order(len(frag_blocks), local_edges, key=lambda i: frag_blocks[i][0])
        if order is None:
            raise CfgError(f"partition of {m.name} induced a cyclic FDG (internal bug)")

        base = len(vertices)
        new_id = {local: base + pos + 1 for pos, local in enumerate(order)}
        entries: dict[int, int] = {}
        for local, blocks in enumerate(frag_blocks):
            bset = set(blocks)
            ext = [b for b in blocks if any(p not in bset for p in cfg.preds[b]) or b == cfg.entry]
            entries[local] = ext[0] if ext else min(blocks)
        for pos, local in enumerate(order):
            blocks = sorted(frag_blocks[local])
            head = cfg.stmt(entries[local])
            if isinstance(head, Waituntil) and len(blocks) == 1:
                kind = "waituntil"
            elif isinstance(head, SignalDirective) and len(blocks) == 1:
                kind = "signal"
            else:
                kind = "plain"
            vertices.append(
                Fragment(
                    id=base + pos + 1,
                    method=m.name,
                    blocks=tuple(blocks),
                    entry_block=entries[local],
                    kind=kind,
                    ccr_index=cfg.ccr_of[blocks[0]],
                )
            )
        for fa, fb in local_edges:
            edges.add((new_id[fa], new_id[fb]))
        method_entry[m.name] = new_id[idx_of_block[cfg.entry]]
        method_exits[m.name] = sorted({new_id[idx_of_block[b]] for b in cfg.exit_blocks})

    fdg = Fdg(
        vertices=vertices,
        edges=frozenset(edges),
        cfgs=cfgs,
        method_entry=method_entry,
        method_exits={m: tuple(x) for m, x in method_exits.items()},
    )
    if _topo_order(len(vertices), {(a - 1, b - 1) for a, b in edges}, key=lambda i: i) is None:
        raise CfgError("monitor FDG is cyclic (internal bug)")
    return fdg


def _check_partition(cfg: Cfg, frag_blocks: list[list[int]]) -> None:
    all_blocks = [b for blocks in frag_blocks for b in blocks]
    if sorted(all_blocks) != list(range(len(cfg.stmts))):
        raise CfgError("fragments do not partition the CFG blocks (internal bug)")
    for blocks in frag_blocks:
        bset = set(blocks)
        entries = [
            b for b in blocks if b == cfg.entry or any(p not in bset for p in cfg.preds[b])
        ]
        if len(entries) > 1:
            raise CfgError("fragment with multiple entries (internal bug)")
        for b in blocks:
            if isinstance(cfg.stmt(b), (Waituntil, SignalDirective)) and len(blocks) != 1:
                raise CfgError("guard/signal fragment must be a singleton (internal bug)")


def _topo_order(n: int, edges: set[tuple[int, int]], key) -> list[int] | None:
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        indeg[b] += 1
        succ[a].append(b)
    import heapq

    heap = [(key(i), i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    out: list[int] = []
    while heap:
        _, v = heapq.heappop(heap)
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, (key(w), w))
    return out if len(out) == n else None


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def fdg_json(fdg: Fdg) -> str:
    doc = {
        "vertices": [
            {
                "id": v.id,
                "method": v.method,
                "kind": v.kind,
                "ccr": v.ccr_index,
                "stmts": [stmt_text(s) for s in fdg.stmts_of(v)],
            }
            for v in fdg.vertices
        ],
        "edges": sorted([a, b] for a, b in fdg.edges),
        "method_entry": dict(sorted(fdg.method_entry.items())),
        "method_exits": {k: list(v) for k, v in sorted(fdg.method_exits.items())},
    }
    return json.dumps(doc, indent=2, sort_keys=False)


def fdg_dot(fdg: Fdg) -> str:
    lines = ["digraph fdg {", "  rankdir=TB;"]
    for v in fdg.vertices:
        text = "\\n".join(stmt_text(s) for s in fdg.stmts_of(v))
        text = text.replace('"', '\\"')
        shape = {"waituntil": "diamond", "signal": "cds", "plain": "box"}[v.kind]
        lines.append(f'  f{v.id} [label="f{v.id} ({v.method})\\n{text}", shape={shape}];')
    for a, b in sorted(fdg.edges):
        lines.append(f"  f{a} -> f{b};")
    lines.append("}")
    return "\n".join(lines)
