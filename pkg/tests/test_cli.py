"""End-to-end CLI behavior: JSON contracts, determinism, exit codes."""

import json

import pytest

from monweaver.cli import main
from monweaver.frontend import parse_explicit

QUEUE = "benchmarks/queue.imon"
QUEUE_E = "benchmarks/queue.emon"
QUEUE_W = "workloads/queue.work"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_synth_queue_report(capsys, tmp_path):
    emon = tmp_path / "queue.emon"
    code, out, err = run(capsys, "synth", QUEUE, "--emit", str(emon))
    assert code == 0
    doc = json.loads(out)
    assert doc["monitor"] == "BoundedQueue"
    assert doc["protocol"]["num_locks"] == 2
    assert doc["protocol"]["atomics"] == ["count"]
    assert doc["protocol"]["parallel_pairs"] == 13
    assert doc["protocol"]["condvars"] == [
        {"predicate": "count < len(queue)", "lock": 1},
        {"predicate": "count > 0", "lock": 2},
    ]
    assert doc["lock_discipline"] == []
    assert [it["penalty"] for it in doc["iterations"]] == [192, 90, 90]
    # the file emitted is the explicit text in the report, and it parses
    assert emon.read_text() == doc["explicit"]
    parse_explicit(emon.read_text())
    assert "wrote" in err


def test_synth_is_deterministic(capsys):
    code1, out1, _ = run(capsys, "synth", QUEUE)
    code2, out2, _ = run(capsys, "synth", QUEUE)
    assert code1 == code2 == 0
    assert out1 == out2


def test_synth_max_locks_one_serializes_everything(capsys):
    code, out, _ = run(capsys, "synth", QUEUE, "--max-locks", "1")
    assert code == 0
    doc = json.loads(out)
    assert doc["protocol"]["num_locks"] == 1
    assert doc["protocol"]["parallel_pairs"] == 0


def test_synth_wcnf_out_then_solve(capsys, tmp_path):
    wcnf = tmp_path / "queue.wcnf"
    code, _, _ = run(capsys, "synth", QUEUE, "--wcnf-out", str(wcnf))
    assert code == 0
    assert wcnf.read_text().startswith("p wcnf ")
    code, out, _ = run(capsys, "solve", str(wcnf))
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "OPTIMUM"
    assert doc["objective"] == 90
    assert len(doc["model"]) > 0


def test_analyze_reports_races(capsys):
    code, out, _ = run(capsys, "analyze", QUEUE)
    assert code == 0
    doc = json.loads(out)
    pairs = [tuple(r["pair"]) for r in doc["races"]]
    assert (4, 8) in pairs  # the two count writes collide
    assert doc["atomics"] == ["count"]
    assert doc["budget_exceeded"] is False


def test_fdg_json_and_dot(capsys):
    code, out, _ = run(capsys, "fdg", QUEUE)
    assert code == 0
    doc = json.loads(out)
    assert len(doc["vertices"]) == 8
    code, out, _ = run(capsys, "fdg", QUEUE, "--dot")
    assert code == 0
    assert out.startswith("digraph")


def test_check_pass(capsys):
    code, out, err = run(capsys, "check", QUEUE, QUEUE_E, "--work", QUEUE_W)
    assert code == 0
    doc = json.loads(out)
    assert doc["ok"] is True
    assert doc["failures"] == [] and doc["deadlocks"] == []
    assert "check: PASS" in err


def test_check_reports_failure_but_exits_zero(capsys, tmp_path):
    # failures belong in the report; only malformed input is an error
    broken = tmp_path / "broken.emon"
    text = open(QUEUE_E).read().replace("__ccr_put_0: l1.lock();", "__ccr_put_0: skip;", 1)
    text = text.replace(
        "__pre1 := count.update(x -> x + 1);\n    l1.unlock();",
        "__pre1 := count.update(x -> x + 1);\n    skip;",
        1,
    )
    broken.write_text(text)
    work = tmp_path / "two_puts.work"
    work.write_text(json.dumps({
        "threads": [
            [{"method": "put", "args": {"o": 1}}],
            [{"method": "put", "args": {"o": 2}}],
        ]
    }))
    code, out, err = run(capsys, "check", QUEUE, str(broken), "--work", str(work))
    assert code == 0
    doc = json.loads(out)
    assert doc["ok"] is False
    assert "check: FAIL" in err


def test_check_random_mode_accepts_seed(capsys, monkeypatch, tmp_path):
    work = tmp_path / "rand.work"
    work.write_text(json.dumps({
        "threads": [
            [{"method": "put", "args": {"o": 1}}],
            [{"method": "take"}],
        ],
        "explore": {"mode": "random", "samples": 25, "seed": 1},
    }))
    code, out1, _ = run(capsys, "check", QUEUE, QUEUE_E, "--work", str(work), "--seed", "5")
    assert code == 0 and json.loads(out1)["ok"] is True
    monkeypatch.setenv("MONWEAVER_SEED", "5")
    code, out2, _ = run(capsys, "check", QUEUE, QUEUE_E, "--work", str(work))
    assert code == 0
    assert out1 == out2  # --seed and the env variable take the same path


def test_exit_input_errors(capsys, tmp_path):
    assert run(capsys, "synth", "no_such_file.imon")[0] == 1
    assert run(capsys, "synth", QUEUE, "--weights", "1,2")[0] == 1
    bad = tmp_path / "bad.imon"
    bad.write_text("monitor M { int[0..1] x := 0; m() { waituntil(x < }")
    assert run(capsys, "synth", str(bad))[0] == 1


def test_exit_budget_strict(capsys):
    code, _, err = run(capsys, "analyze", QUEUE, "--state-budget", "5", "--strict")
    assert code == 2
    assert "budget" in err


def test_exit_solver_timeout(capsys):
    code, _, err = run(capsys, "synth", QUEUE, "--solver-timeout", "1e-9")
    assert code == 3
    assert "timed out" in err
