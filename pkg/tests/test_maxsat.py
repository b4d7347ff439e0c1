"""Weighted-CNF lock assignment: encoding, embedded solver, protocol search."""

import random

import pytest

from monweaver.frontend import parse_monitor
from monweaver.maxsat import (
    Encoding,
    SolverTimeout,
    Weights,
    compute_max_locks,
    encode,
    parallel_pairs,
    parse_solver_output,
    parse_wcnf,
    solve,
    synthesize_protocol,
    wcnf_text,
)

QUEUE = open("benchmarks/queue.imon").read()


@pytest.fixture(scope="module")
def queue_res():
    return synthesize_protocol(parse_monitor(QUEUE))


# --- queue protocol (hand-verified fixed point) --------------------------


def test_queue_search_iterations(queue_res):
    # penalty stops improving at two locks; the third probe confirms it
    assert queue_res.iterations == [(1, 192, 338), (2, 90, 448), (3, 90, 456)]
    assert queue_res.max_locks_bound == 13
    assert not queue_res.timed_out and not queue_res.budget_exceeded


def test_queue_protocol_assignment(queue_res):
    p = queue_res.protocol
    assert p.num_locks == 2
    assert p.penalty == 90 and p.objective == 448
    assert p.atomics == frozenset({"count"})
    assert {k: sorted(v) for k, v in sorted(p.locksets.items())} == {
        1: [1], 2: [1], 3: [1], 4: [1], 5: [], 6: [],
        7: [2], 8: [2], 9: [2], 10: [2], 11: [], 12: [],
    }
    assert p.cv_locks == {"count < len(queue)": 1, "count > 0": 2}
    assert p.cv_order == ("count < len(queue)", "count > 0")


def test_queue_races_and_refinement(queue_res):
    assert sorted(queue_res.races) == [
        (1, 4), (1, 10), (2, 2), (2, 3), (3, 3), (4, 4), (4, 7),
        (4, 10), (7, 10), (8, 8), (8, 9), (9, 9), (10, 10),
    ]
    # commutativity refinement discharges the insert/remove pair
    assert queue_res.refined_pairs == ((2, 8),)
    assert compute_max_locks(queue_res.races) == 13


def test_parallel_pairs(queue_res):
    assert parallel_pairs(queue_res) == 13
    coarse = synthesize_protocol(parse_monitor(QUEUE), max_locks=1)
    assert coarse.protocol.num_locks == 1
    assert parallel_pairs(coarse) == 0


def test_wcnf_round_trip(queue_res):
    enc = encode(
        queue_res.fdg,
        eligible=queue_res.eligible,
        races=queue_res.races,
        safe=queue_res.safe_interleavings,
        num_locks=2,
    )
    direct = solve(enc)
    assert direct.status == "OPTIMUM" and direct.penalty == 90
    reread = parse_wcnf(wcnf_text(enc))
    again = solve(reread)
    assert again.status == "OPTIMUM"
    assert again.penalty == direct.penalty


def test_solver_timeout_raises():
    with pytest.raises(SolverTimeout):
        synthesize_protocol(parse_monitor(QUEUE), solver_timeout=1e-9)


# --- solver on synthetic instances ---------------------------------------


def _instance(nvars, hard, soft) -> Encoding:
    return Encoding(
        num_locks=0,
        nvars=nvars,
        hard=[list(c) for c in hard],
        soft=[("t", i, w, lit) for i, (w, lit) in enumerate(soft)],
        varmap={},
        h={},
        a={f"x{i:06d}": i for i in range(1, nvars + 1)},
        signal_ids=frozenset(),
        eligible=frozenset(),
        weights=Weights(),
    )


def test_unsat_hard_core():
    res = solve(_instance(1, [[1], [-1]], []))
    assert res.status == "UNSAT" and res.model is None


def test_soft_tradeoff():
    # x1 forced true; soft wants it false (w=5) and x2 true (w=2)
    res = solve(_instance(2, [[1]], [(5, -1), (2, 2)]))
    assert res.status == "OPTIMUM"
    assert res.penalty == 5 and res.satisfied == 2
    assert res.model == {1: True, 2: True}


def _brute_penalty(nvars, hard, soft):
    best = None
    for bits in range(1 << nvars):
        val = lambda lit: bool(bits >> (abs(lit) - 1) & 1) == (lit > 0)
        if all(any(val(l) for l in cl) for cl in hard):
            pen = sum(w for w, lit in soft if not val(lit))
            best = pen if best is None else min(best, pen)
    return best


def test_solver_matches_brute_force_on_random_instances():
    rng = random.Random(20240817)
    for trial in range(60):
        nvars = rng.randint(2, 8)
        hard = [
            [rng.choice([-1, 1]) * rng.randint(1, nvars) for _ in range(rng.randint(1, 3))]
            for _ in range(rng.randint(0, 6))
        ]
        soft = [
            (rng.randint(1, 5), rng.choice([-1, 1]) * rng.randint(1, nvars))
            for _ in range(rng.randint(1, 6))
        ]
        res = solve(_instance(nvars, hard, soft))
        expect = _brute_penalty(nvars, hard, soft)
        if expect is None:
            assert res.status == "UNSAT", f"trial {trial}"
        else:
            assert res.status == "OPTIMUM", f"trial {trial}"
            assert res.penalty == expect, f"trial {trial}"
            assert res.satisfied == sum(w for w, _ in soft) - expect


# --- external solver protocol --------------------------------------------


def test_parse_solver_output_signed_and_binary():
    s, m = parse_solver_output("c noise\ns OPTIMUM FOUND\nv 1 -2 3 0\n", 3)
    assert s == "OPTIMUM" and m == {1: True, 2: False, 3: True}
    s, m = parse_solver_output("s OPTIMUM FOUND\nv 101\n", 3)
    assert s == "OPTIMUM" and m == {1: True, 2: False, 3: True}
    s, m = parse_solver_output("s UNSATISFIABLE\n", 3)
    assert s == "UNSAT" and m is None


def test_external_solver_stub(tmp_path):
    script = tmp_path / "fake_solver.sh"
    script.write_text("#!/bin/sh\necho 's OPTIMUM FOUND'\necho 'v 1 2 0'\n")
    script.chmod(0o755)
    enc = _instance(2, [[1]], [(3, -2)])
    res = solve(enc, solver_cmd=str(script))
    assert res.status == "OPTIMUM"
    assert res.model == {1: True, 2: True}
    assert res.penalty == 3 and res.satisfied == 0


def test_external_solver_model_is_validated(tmp_path):
    script = tmp_path / "lying_solver.sh"
    script.write_text("#!/bin/sh\necho 's OPTIMUM FOUND'\necho 'v -1 -2 0'\n")
    script.chmod(0o755)
    with pytest.raises(RuntimeError):
        solve(_instance(2, [[1]], [(3, -2)]), solver_cmd=str(script))


# --- custom weights -------------------------------------------------------


def test_weights_steer_the_optimum():
    # make atomics free and locks expensive: the queue still needs two locks
    res = synthesize_protocol(
        parse_monitor(QUEUE), weights=Weights(par=8, lock=1, atom=1)
    )
    assert res.protocol.num_locks == 2
    assert res.protocol.atomics == frozenset({"count"})
