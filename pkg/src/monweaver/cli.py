"""Command-line interface.

Subcommands cover the whole pipeline: `synth` (implicit monitor in,
explicit monitor + protocol report out), `analyze` (commutativity, races,
safe interleavings as JSON), `fdg` (fragment dependency graph dump),
`check` (operational correctness of an explicit monitor against its
implicit source over a workload), and `solve` (standalone weighted-CNF
instances).

Machine-readable JSON goes to stdout; progress and diagnostics go to
stderr.  Exit codes: 0 success, 1 malformed input, 2 analysis budget
exhausted under --strict, 3 solver timeout with no protocol found.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .analysis import DEFAULT_BUDGET, analyze, report_json
from .codegen import build_explicit, check_lock_discipline
from .fdg import CfgError, build_fdg, fdg_dot, fdg_json
from .frontend import ParseError, desugar, parse_explicit, parse_monitor
from .interp import Schema
from .maxsat import (
    DEFAULT_SOLVER_TIMEOUT,
    SolverTimeout,
    Weights,
    encode,
    parallel_pairs,
    parse_wcnf,
    solve,
    synthesize_protocol,
    wcnf_text,
)
from .simulator import check_correctness, load_workload
from .syntax import explicit_text

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_BUDGET = 2
EXIT_TIMEOUT = 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit_json(doc: object) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _read(path: str) -> str:
    return Path(path).read_text()


def _weights(spec: str) -> Weights:
    parts = [int(x) for x in spec.split(",")]
    if len(parts) != 3 or any(w <= 0 for w in parts):
        raise ValueError("--weights expects three positive integers: w_par,w_lock,w_atom")
    return Weights(*parts)


def _seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MONWEAVER_SEED")
    return int(env) if env else None


def _protocol_doc(res) -> dict:
    p = res.protocol
    return {
        "num_locks": p.num_locks,
        "max_locks_bound": res.max_locks_bound,
        "atomics": sorted(p.atomics),
        "locksets": {str(v): sorted(p.locksets.get(v, frozenset())) for v in sorted(p.locksets)},
        "condvars": [{"predicate": pred, "lock": p.cv_locks[pred]} for pred in p.cv_order],
        "objective": p.objective,
        "penalty": p.penalty,
        "parallel_pairs": parallel_pairs(res),
    }


def cmd_synth(args) -> int:
    ast = parse_monitor(_read(args.input))
    try:
        res = synthesize_protocol(
            ast,
            partition=args.partition,
            max_locks=args.max_locks,
            weights=_weights(args.weights),
            state_budget=args.state_budget,
            solver_timeout=args.solver_timeout,
            solver_cmd=args.solver_cmd,
        )
    except SolverTimeout:
        _log("error: solver timed out before any protocol was found")
        return EXIT_TIMEOUT
    if res.budget_exceeded:
        _log("warning: analysis state budget exhausted; races fell back to syntactic")
        if args.strict:
            return EXIT_BUDGET
    if res.timed_out:
        _log("warning: solver timed out mid-search; best protocol so far kept")
    em = build_explicit(res)
    text = explicit_text(em)
    problems = check_lock_discipline(em)
    if args.emit:
        Path(args.emit).write_text(text)
        _log(f"wrote {args.emit}")
    if args.wcnf_out:
        enc = encode(
            res.fdg,
            eligible=res.eligible,
            races=res.races,
            safe=res.safe_interleavings,
            num_locks=res.protocol.num_locks,
            weights=_weights(args.weights),
        )
        Path(args.wcnf_out).write_text(wcnf_text(enc))
        _log(f"wrote {args.wcnf_out}")
    _emit_json(
        {
            "monitor": ast.name,
            "explicit": text,
            "emitted_to": args.emit,
            "protocol": _protocol_doc(res),
            "iterations": [
                {"locks": n, "penalty": pen, "satisfied": sat} for n, pen, sat in res.iterations
            ],
            "races": [
                {"pair": list(pair), "paths": sorted(str(p) for p in paths)}
                for pair, paths in sorted(res.races.items())
            ],
            "lock_discipline": problems,
            "analysis_budget_exceeded": res.budget_exceeded,
            "solver_timed_out": res.timed_out,
        }
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    ast = desugar(parse_monitor(_read(args.input)))
    fdg = build_fdg(ast, partition_mode=args.partition)
    budget = args.state_budget if args.state_budget is not None else DEFAULT_BUDGET
    res = analyze(ast, fdg, budget)
    if res.budget_exceeded:
        _log("warning: analysis state budget exhausted; results are conservative")
        if args.strict:
            return EXIT_BUDGET
    print(report_json(res, fdg))
    return EXIT_OK


def cmd_fdg(args) -> int:
    ast = desugar(parse_monitor(_read(args.input)))
    fdg = build_fdg(ast, partition_mode=args.partition)
    if args.dot:
        print(fdg_dot(fdg))
    else:
        print(fdg_json(fdg))
    return EXIT_OK


def cmd_check(args) -> int:
    ast = parse_monitor(_read(args.input))
    em = parse_explicit(_read(args.explicit))
    wl = load_workload(json.loads(_read(args.work)))
    seed = _seed(args)
    if seed is not None and wl.mode == "random":
        wl = dataclasses.replace(wl, seed=seed)
    rep = check_correctness(
        ast,
        em,
        wl,
        max_states=args.state_budget if args.state_budget is not None else 1_000_000,
    )
    _emit_json(rep.to_json(Schema(ast.fields)))
    _log("check: " + ("PASS" if rep.ok else "FAIL"))
    return EXIT_OK


def cmd_solve(args) -> int:
    enc = parse_wcnf(_read(args.input))
    try:
        res = solve(enc, timeout=args.solver_timeout, solver_cmd=args.solver_cmd)
    except SolverTimeout:
        _log("error: solver timed out")
        return EXIT_TIMEOUT
    n_orig = len(enc.a)  # selector variables added past the original count
    model = None
    if res.model is not None:
        model = [i if res.model.get(i) else -i for i in range(1, n_orig + 1)]
    _emit_json(
        {
            "status": res.status,
            "objective": res.penalty,
            "satisfied_weight": res.satisfied,
            "model": model,
        }
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="monweaver",
        description="Synthesize fine-grained lock/condvar/atomic protocols for implicit monitors",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, *, partition=False, budget=False, solver=False, strict=False, seed=False):
        if partition:
            p.add_argument("--partition", default="paper", choices=["paper", "stmt", "ccr"],
                           help="fragment partition granularity")
        if budget:
            p.add_argument("--state-budget", type=int, default=None,
                           help="bound on concrete executions/states explored")
        if solver:
            p.add_argument("--solver-timeout", type=float, default=DEFAULT_SOLVER_TIMEOUT,
                           help="seconds per MaxSAT solve")
            p.add_argument("--solver-cmd", default=None,
                           help="external MaxSAT solver command (reads DIMACS wcnf path)")
        if strict:
            p.add_argument("--strict", action="store_true",
                           help="fail (exit 2) if the analysis budget is exhausted")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="seed for randomized exploration (MONWEAVER_SEED fallback)")

    p = sub.add_parser("synth", help="synthesize an explicit monitor from an implicit one")
    p.add_argument("input", help=".imon source")
    p.add_argument("--emit", default=None, help="write the explicit monitor to this .emon path")
    p.add_argument("--max-locks", type=int, default=None, help="override the lock-count bound")
    p.add_argument("--weights", default="8,4,2", help="soft weights w_par,w_lock,w_atom")
    p.add_argument("--wcnf-out", default=None, help="dump the final WCNF instance to this path")
    common(p, partition=True, budget=True, solver=True, strict=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="dump commutativity, race, and interleaving analysis")
    p.add_argument("input", help=".imon source")
    common(p, partition=True, budget=True, strict=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fdg", help="dump the fragment dependency graph")
    p.add_argument("input", help=".imon source")
    p.add_argument("--dot", action="store_true", help="emit graphviz instead of JSON")
    common(p, partition=True)
    p.set_defaults(func=cmd_fdg)

    p = sub.add_parser("check", help="verify an explicit monitor against its implicit source")
    p.add_argument("input", help=".imon source")
    p.add_argument("explicit", help=".emon candidate")
    p.add_argument("--work", required=True, help="workload .work (JSON) file")
    common(p, budget=True, seed=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="solve a standalone DIMACS wcnf instance")
    p.add_argument("input", help=".wcnf file")
    common(p, solver=True)
    p.set_defaults(func=cmd_solve)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        _log(f"error: {e}")
        return EXIT_INPUT
    except CfgError as e:
        _log(f"error: {e}")
        return EXIT_INPUT
    except (OSError, ValueError, json.JSONDecodeError) as e:
        _log(f"error: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
