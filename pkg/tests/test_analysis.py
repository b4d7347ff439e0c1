"""Analysis ground truth on the bounded queue plus small hand-checked oracles."""

import pytest

from monweaver.analysis import Analyzer, analyze, atomic_eligible
from monweaver.fdg import build_fdg
from monweaver.frontend import parse_monitor

QUEUE = """
monitor BoundedQueue {
  array[3] of int[0..9] queue := 0;
  int[0..2] first := 0;
  int[0..2] last := 0;
  int[0..3] count := 0;

  put(int[0..9] o) {
    waituntil(count < len(queue));
    queue[last] := o;
    last := (last + 1) % len(queue);
    count := count + 1;
  }

  take() {
    waituntil(count > 0);
    r := queue[first];
    queue[first] := 0;
    first := (first + 1) % len(queue);
    count := count - 1;
  }
}
"""


@pytest.fixture(scope="module")
def queue():
    ast = parse_monitor(QUEUE)
    fdg = build_fdg(ast)
    return ast, fdg, Analyzer(ast, fdg)


def test_sequential_reachability_count(queue):
    # 3 rotations of first x (1 + 10 + 100 + 1000) fillings for count 0..3
    _, _, az = queue
    assert len(az.reach_seq()) == 3333


def test_atomic_eligibility(queue):
    ast, _, _ = queue
    assert atomic_eligible(ast) == frozenset({"count"})
    # arrays and modular updates are never eligible: only count qualifies


def test_commutativity_across_methods(queue):
    _, _, az = queue
    assert az.left_commute(4, 5) is True  # count++ slides left over waituntil(count>0)
    assert az.right_commute(4, 6) is True
    assert az.right_commute(4, 7) is True
    assert az.right_commute(4, 8) is True


def test_commutativity_within_method(queue):
    _, _, az = queue
    # count++ does not move over its own guard: a full queue unblocks a
    # second producer one step early
    assert az.left_commute(4, 1) is False
    assert az.left_commute(8, 5) is False
    assert az.left_commute(5, 4) is False


def test_store_conflicts(queue):
    _, _, az = queue
    assert az.left_commute(2, 2) is False  # two stores, distinct arguments
    assert az.left_commute(6, 6) is False  # reads into r differ
    assert az.left_commute(2, 6) is True  # capacity 3: never the same cell
    assert az.left_commute(6, 2) is True


def test_disjoint_fast_path(queue):
    _, _, az = queue
    v = az.left_verdict(2, 7)
    assert v.value and v.reason == "disjoint"


def test_counterexample_witness(queue):
    _, _, az = queue
    v = az.left_verdict(4, 1)
    assert not v.value and v.reason == "counterexample"
    assert v.witness is not None and "state" in v.witness


def test_race_map(queue):
    _, _, az = queue
    races, refined = az.detect_races()
    by_pair = {pair: sorted(str(p) for p in paths) for pair, paths in races.items()}
    assert by_pair == {
        (1, 4): ["count"],
        (1, 8): ["count"],
        (2, 2): ["queue[*]"],
        (2, 3): ["last"],
        (3, 3): ["last"],
        (4, 4): ["count"],
        (4, 5): ["count"],
        (4, 8): ["count"],
        (5, 8): ["count"],
        (6, 6): ["queue[*]"],
        (6, 7): ["first"],
        (7, 7): ["first"],
        (8, 8): ["count"],
    }
    # capacity >= 2 proves put and take never touch the same live cell
    assert refined == ((2, 6),)


def test_safe_interleavings_exactly_cross_method(queue):
    _, fdg, az = queue
    safe = az.find_safe_interleavings()
    expected = {
        (v, e)
        for v in (1, 2, 3, 4)
        for e in ((5, 6), (6, 7), (7, 8))
    } | {
        (v, e)
        for v in (5, 6, 7, 8)
        for e in ((1, 2), (2, 3), (3, 4))
    }
    assert safe == frozenset(expected)
    assert len(safe) == 24


def test_budget_degrades_conservatively():
    ast = parse_monitor(QUEUE)
    fdg = build_fdg(ast)
    az = Analyzer(ast, fdg, state_budget=50)
    assert az.left_commute(4, 5) is False  # true on full budget
    assert az.budget_exceeded
    assert az.left_verdict(4, 5).reason == "budget"


def test_analyze_summary(queue):
    ast, fdg, _ = queue
    res = analyze(ast, fdg)
    assert res.seq_states == 3333
    assert not res.budget_exceeded
    assert res.race(8, 4) == res.race(4, 8) != frozenset()
    assert res.race(2, 6) == frozenset()


# -- independent oracles ------------------------------------------------------


def test_disjoint_methods_oracle():
    ast = parse_monitor(
        """
        monitor Pair {
          int[0..3] a := 0;
          int[0..3] b := 0;
          bump_a() { waituntil(true); a := a + 1; }
          bump_b() { waituntil(true); b := b + 1; }
        }
        """
    )
    fdg = build_fdg(ast)
    az = Analyzer(ast, fdg)
    races, refined = az.detect_races()
    assert set(races) == {(2, 2), (4, 4)}
    assert refined == ()
    safe = az.find_safe_interleavings()
    # increments of one counter commute with themselves, so even
    # same-method interleavings are safe here
    assert (2, (1, 2)) in safe
    assert (3, (1, 2)) in safe and (4, (1, 2)) in safe


def test_read_vs_increment_oracle():
    ast = parse_monitor(
        """
        monitor Counter {
          int[0..5] n := 0;
          inc() { waituntil(n < 5); n := n + 1; }
          read() { waituntil(true); r := n; }
        }
        """
    )
    fdg = build_fdg(ast)
    az = Analyzer(ast, fdg)
    # fragment ids: 1 guard, 2 n++, 3 guard(true), 4 r := n
    assert az.left_commute(2, 4) is False  # r observes the increment
    assert az.left_commute(4, 2) is False
    races, _ = az.detect_races()
    assert sorted(str(p) for p in races[(2, 4)]) == ["n"]
