"""Fragment partitioning and dependency-graph structure."""

import json

import pytest

from monweaver.codegen import place_signals
from monweaver.fdg import CfgError, build_fdg, fdg_dot, fdg_json
from monweaver.frontend import desugar, parse_monitor
from monweaver.syntax import stmt_text

QUEUE = open("benchmarks/queue.imon").read()


@pytest.fixture(scope="module")
def queue_fdg():
    return build_fdg(parse_monitor(QUEUE))


def test_queue_fragments(queue_fdg):
    fdg = queue_fdg
    assert [v.id for v in fdg.vertices] == list(range(1, 9))
    assert [v.method for v in fdg.vertices] == ["put"] * 4 + ["take"] * 4
    kinds = [v.kind for v in fdg.vertices]
    assert kinds[0] == kinds[4] == "waituntil"
    # the two queue[first] statements fuse: a load then a store to the same
    # array ends the fragment at the store
    assert len(fdg.stmts_of(fdg.fragment(6))) == 2


def test_queue_edges_linear(queue_fdg):
    fdg = queue_fdg
    assert sorted(fdg.edges) == [(1, 2), (2, 3), (3, 4), (5, 6), (6, 7), (7, 8)]
    assert fdg.method_entry["put"] == 1 and fdg.method_entry["take"] == 5
    assert fdg.method_exits["put"] == (4,) and fdg.method_exits["take"] == (8,)


def test_closure_helpers(queue_fdg):
    fdg = queue_fdg
    assert fdg.preds_star(3) == frozenset({1, 2, 3})
    assert fdg.succs_star(6) == frozenset({6, 7, 8})
    assert [f.id for f in fdg.ccr_fragments("put", 0)] == [1, 2, 3, 4]


def test_partition_modes():
    ast = desugar(parse_monitor(QUEUE))
    stmt = build_fdg(ast, partition_mode="stmt")
    ccr = build_fdg(ast, partition_mode="ccr")
    # stmt: one fragment per statement (guards included); the two
    # queue[first] statements that fuse under the default split here
    assert len(stmt.vertices) == 9
    # ccr: guard fragment + one body fragment per CCR
    assert len(ccr.vertices) == 4
    assert [v.kind for v in ccr.vertices] == ["waituntil", "plain"] * 2


def test_signal_fragments_in_signaled_graph():
    signaled = place_signals(desugar(parse_monitor(QUEUE)))
    fdg = build_fdg(signaled)
    kinds = [v.kind for v in fdg.vertices]
    assert len(fdg.vertices) == 12
    assert kinds.count("signal") == 4
    # signals trail each method: both predicates broadcast from both methods
    assert [v.id for v in fdg.vertices if v.kind == "signal"] == [5, 6, 11, 12]


def test_loop_fragment_stays_whole():
    src = """
monitor M {
  int[0..3] x := 0;
  m() {
    waituntil(x > 0);
    while (x > 0) { x := x - 1; }
    x := 3;
  }
}
"""
    fdg = build_fdg(desugar(parse_monitor(src)))
    # the loop header and its body land in a single fragment
    holding = [
        v
        for v in fdg.vertices
        if any("x - 1" in stmt_text(s) for s in fdg.stmts_of(v))
    ]
    assert len(holding) == 1
    texts = [stmt_text(s) for s in fdg.stmts_of(holding[0])]
    assert any(t.startswith(("if", "goto")) or "goto" in t for t in texts)


def test_branch_produces_diamond():
    src = """
monitor M {
  int[0..3] x := 0;
  int[0..3] y := 0;
  m(int[0..3] v) {
    waituntil(true);
    if (v > 1) { x := v; } else { y := v; }
    x := 0;
  }
}
"""
    fdg = build_fdg(desugar(parse_monitor(src)))
    branch = [v.id for v in fdg.vertices if len(fdg.succs(v.id)) == 2]
    assert len(branch) >= 1  # the guard-or-branch fragment fans out


def test_unreachable_statement_rejected():
    src = """
monitor M {
  int[0..1] x := 0;
  m() {
    waituntil(true);
    goto out;
    x := 1;
    out: skip;
  }
}
"""
    with pytest.raises(CfgError):
        build_fdg(desugar(parse_monitor(src)))


def test_json_and_dot_render(queue_fdg):
    doc = json.loads(fdg_json(queue_fdg))
    assert len(doc["vertices"]) == 8 and len(doc["edges"]) == 6
    dot = fdg_dot(queue_fdg)
    assert dot.startswith("digraph") and "f1" in dot and "f8" in dot
