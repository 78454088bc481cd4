"""Command-line interface.

    ac check PROG.ac [--refined] [--strict-balanced]
    ac run PROG.ac --seed N
    ac explore PROG.ac [--dot PATH] [--report DIR]
    ac verify PROG.ac [--refined] [--harness] [--force]

Exit codes: 0 ok/safe, 10 parse error, 11 ill-formed bindings, 20 type
error, 21 typed but unbalanced, 22 cyclic continuation annotations,
30 stuck terminal reachable, 31 exploration limit hit, 50 internal
consistency or metatheory violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .checker import CheckResult, check_program
from .parser import ParseError, parse_program
from .printer import env_lines, print_config
from .semantics import LimitExceeded, explore, graph_to_dot, graph_to_json, run_random
from .terms import Program, WellFormednessError
from .types import BalanceReport, ChoiceNode, EscapeEnv, Leaf, balanced
from .verifier import Verdict, mailbox_lemma_harness, subject_reduction_harness, verify_safety

EXIT_OK = 0
EXIT_PARSE = 10
EXIT_ILL_FORMED = 11
EXIT_TYPE_ERROR = 20
EXIT_UNBALANCED = 21
EXIT_REFINED_CYCLE = 22
EXIT_STUCK = 30
EXIT_LIMIT = 31
EXIT_INTERNAL = 50


def main(argv: list[str] | None = None) -> int:
    args = _arg_parser().parse_args(argv)
    if args.grammar:
        from . import parser as parser_mod

        print(parser_mod.__doc__.strip())
        return EXIT_OK
    if args.command is None:
        _arg_parser().print_usage()
        return EXIT_OK
    emit = _Emitter(quiet=args.quiet)
    try:
        with open(args.input, encoding="utf-8") as fh:
            program = parse_program(fh.read())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ParseError as exc:
        emit.say(f"parse error: {exc}")
        emit.json_out(args, {"wellFormed": False, "errors": [_parse_err(exc)]})
        return EXIT_PARSE
    except WellFormednessError as exc:
        for v in exc.report.violations:
            emit.say(f"ill-formed: {v}")
        emit.json_out(
            args,
            {
                "wellFormed": False,
                "errors": [
                    {"kind": "WellFormedness", "line": v.span.line if v.span else None,
                     "col": v.span.col if v.span else None, "message": v.reason}
                    for v in exc.report.violations
                ],
            },
        )
        return EXIT_ILL_FORMED
    handler = {
        "check": cmd_check,
        "run": cmd_run,
        "explore": cmd_explore,
        "verify": cmd_verify,
    }[args.command]
    try:
        return handler(args, program, emit)
    except LimitExceeded as exc:
        emit.say(f"aborted: {exc}")
        return EXIT_LIMIT


def _arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ac", description="behavioural types and exploration for actor programs"
    )
    ap.add_argument("--version", action="version", version=f"ac {__version__}")
    ap.add_argument(
        "--grammar", action="store_true", help="print the program and type grammar"
    )
    sub = ap.add_subparsers(dest="command")

    def common(p, seed=False, graphish=False, checkish=False):
        p.add_argument("input", help="program file (.ac)")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--quiet", action="store_true", help="suppress text output")
        if checkish:
            p.add_argument(
                "--refined",
                action="store_true",
                help="deadlock-excluding mode (verifies or infers output annotations)",
            )
        if seed:
            p.add_argument("--seed", type=int, default=0, help="trace seed")
        if graphish:
            p.add_argument("--max-states", type=int, default=100_000)
            p.add_argument("--max-depth", type=int, default=100_000)
            p.add_argument("--dot", metavar="PATH", help="write the state graph as DOT")
            p.add_argument(
                "--graph-json", metavar="PATH", help="write the full state graph as JSON"
            )
            p.add_argument(
                "--report", metavar="DIR", help="write states.csv, edges.csv, graph.png"
            )
            p.add_argument(
                "--jobs",
                type=int,
                default=os.cpu_count() or 1,
                help="frontier expansion parallelism (results are identical)",
            )

    c = sub.add_parser("check", help="type-check a program")
    common(c, checkish=True)
    c.add_argument(
        "--strict-balanced",
        action="store_true",
        help="exit nonzero when typed but not balanced",
    )
    r = sub.add_parser("run", help="one random maximal execution")
    common(r, seed=True)
    e = sub.add_parser("explore", help="exhaust all interleavings")
    common(e, graphish=True)
    v = sub.add_parser("verify", help="static verdicts cross-checked against exploration")
    common(v, graphish=True, checkish=True)
    v.add_argument(
        "--harness",
        action="store_true",
        help="also replay type preservation and mailbox matching over the graph",
    )
    v.add_argument(
        "--force",
        action="store_true",
        help="run the mailbox harness even on unbalanced programs",
    )
    return ap


class _Emitter:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def say(self, line: str = "") -> None:
        if not self.quiet:
            print(line)

    def json_out(self, args, payload: dict) -> None:
        if getattr(args, "json", False):
            print(json.dumps(_fill_schema(payload), indent=2))


def _fill_schema(payload: dict) -> dict:
    base = {
        "wellFormed": True,
        "typed": None,
        "mode": None,
        "escapeEnv": None,
        "balanced": None,
        "balanceWitness": None,
        "exploration": None,
        "refinedCycle": None,
        "consistent": None,
        "errors": [],
    }
    base.update(payload)
    return base


def _parse_err(exc: ParseError) -> dict:
    return {
        "kind": type(exc).__name__,
        "line": exc.span.line,
        "col": exc.span.col,
        "message": str(exc),
    }


def _errors_json(res: CheckResult) -> list[dict]:
    return [
        {
            "kind": e.kind,
            "line": e.span.line if e.span else None,
            "col": e.span.col if e.span else None,
            "message": e.message,
        }
        for e in res.errors
    ]


def _escape_json(d: EscapeEnv | None):
    if d is None:
        return None
    if isinstance(d, Leaf):
        from .printer import _display_names

        shown = _display_names(d.env)
        return {
            shown[u]: str(t)
            for u, t in sorted(d.env.items(), key=lambda kv: (kv[0].name, kv[0].uid))
        }
    assert isinstance(d, ChoiceNode)
    return {"&": [_escape_json(c) for c in d.children]}


def _witness_json(bal: BalanceReport | None):
    if bal is None:
        return None
    if not bal.ok:
        return {
            "failing": str(bal.failing) if bal.failing else None,
            "uncovered": bal.uncovered,
        }
    return {str(a): [str(x) for x in xs] for a, xs in bal.witness.items()}


def _print_check(emit: _Emitter, res: CheckResult, bal: BalanceReport | None) -> None:
    for w in res.warnings:
        emit.say(f"warning: {w}")
    if not res.ok:
        emit.say(f"type check failed ({res.mode} mode):")
        for e in res.errors:
            emit.say(f"  {e}")
        return
    emit.say(f"typed ({res.mode} mode); bound-name environment:")
    for line in env_lines(res.escape_env):
        emit.say(line)
    if bal is not None:
        if bal.ok:
            pairs = ", ".join(
                f"{a} <- {', '.join(map(str, xs)) if xs else 'own marks'}"
                for a, xs in sorted(bal.witness.items(), key=lambda kv: str(kv[0]))
            )
            emit.say(f"balanced: yes ({pairs})" if pairs else "balanced: yes")
        else:
            what = ", ".join(bal.uncovered) or "competing consumers"
            emit.say(f"balanced: no (actor {bal.failing}: {what} without a matching send)")


def cmd_check(args, program: Program, emit: _Emitter) -> int:
    mode = "refined" if args.refined else "basic"
    res = check_program(program, mode)
    bal = balanced(res.escape_env) if res.ok else None
    _print_check(emit, res, bal)
    emit.json_out(
        args,
        {
            "typed": res.ok,
            "mode": res.mode,
            "escapeEnv": _escape_json(res.escape_env),
            "balanced": None if bal is None else bal.ok,
            "balanceWitness": _witness_json(bal),
            "refinedCycle": [str(a) for a in res.cycle.actors] if res.cycle else None,
            "errors": _errors_json(res),
        },
    )
    if res.cycle is not None:
        return EXIT_REFINED_CYCLE
    if not res.ok:
        return EXIT_TYPE_ERROR
    if args.strict_balanced and bal is not None and not bal.ok:
        return EXIT_UNBALANCED
    return EXIT_OK


def cmd_run(args, program: Program, emit: _Emitter) -> int:
    trace = run_random(program, args.seed)
    for i, (cfg, lbl) in enumerate(trace.steps):
        emit.say(f"{i:3}. {lbl}")
    outcome = "success (empty configuration)" if trace.success else "stuck"
    emit.say(f"terminal after {len(trace.steps)} step(s): {outcome}")
    if not trace.success:
        emit.say(f"  {print_config(trace.final)}")
    if args.json:
        print(
            json.dumps(
                {
                    "seed": trace.seed,
                    "steps": [str(lbl) for _, lbl in trace.steps],
                    "final": print_config(trace.final),
                    "success": trace.success,
                },
                indent=2,
            )
        )
    return EXIT_OK if trace.success else EXIT_STUCK


def _exploration_json(graph) -> dict:
    return {
        "states": len(graph.states),
        "terminals": {
            "success": len(graph.success),
            "stuck": [print_config(c) for c in graph.stuck_configs()],
        },
    }


def _write_graph_outputs(args, graph, emit: _Emitter, verdict_payload=None) -> None:
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(graph_to_dot(graph))
        emit.say(f"wrote {args.dot}")
    if args.graph_json:
        with open(args.graph_json, "w", encoding="utf-8") as fh:
            fh.write(graph_to_json(graph))
        emit.say(f"wrote {args.graph_json}")
    if args.report:
        from .report import write_report

        for name in write_report(graph, args.report, verdict_payload=verdict_payload):
            emit.say(f"wrote {args.report}/{name}")


def cmd_explore(args, program: Program, emit: _Emitter) -> int:
    graph = explore(
        program, max_states=args.max_states, max_depth=args.max_depth, jobs=args.jobs
    )
    emit.say(
        f"states: {len(graph.states)}, edges: {len(graph.edges)}, terminals: "
        f"{len(graph.success)} success / {len(graph.stuck)} stuck"
    )
    for cfg in graph.stuck_configs():
        emit.say(f"stuck: {print_config(cfg)}")
    _write_graph_outputs(args, graph, emit)
    if args.json:
        print(json.dumps(_fill_schema({"exploration": _exploration_json(graph)}), indent=2))
    return EXIT_OK if graph.all_success else EXIT_STUCK


def cmd_verify(args, program: Program, emit: _Emitter) -> int:
    mode = "refined" if args.refined else "basic"
    verdict = verify_safety(
        program,
        mode,
        max_states=args.max_states,
        max_depth=args.max_depth,
        jobs=args.jobs,
    )
    _print_check(emit, verdict.check, verdict.balance)
    graph = verdict.graph
    emit.say(
        f"exploration: {len(graph.states)} states, {len(graph.success)} success / "
        f"{len(graph.stuck)} stuck terminals"
    )
    for cfg in graph.stuck_configs():
        emit.say(f"stuck: {print_config(cfg)}")
    for note in verdict.notes:
        emit.say(f"note: {note}")
    emit.say(f"consistent: {'yes' if verdict.consistent else 'NO (internal error)'}")

    harness_failed = False
    if args.harness:
        for rep in (
            subject_reduction_harness(program),
            mailbox_lemma_harness(program, force=args.force),
        ):
            for line in rep.lines():
                emit.say(line)
            harness_failed |= not rep.ok and rep.skipped is None

    payload = _verdict_json(verdict)
    emit.json_out(args, payload)
    _write_graph_outputs(args, graph, emit, verdict_payload=_fill_schema(payload))

    if not verdict.consistent or harness_failed:
        return EXIT_INTERNAL
    if verdict.refined_cycle is not None:
        return EXIT_REFINED_CYCLE
    if not verdict.typed:
        return EXIT_TYPE_ERROR
    if verdict.balance is not None and not verdict.balance.ok:
        return EXIT_UNBALANCED
    if not verdict.all_success:
        return EXIT_STUCK
    return EXIT_OK


def _verdict_json(v: Verdict) -> dict:
    return {
        "typed": v.typed,
        "mode": v.mode,
        "escapeEnv": _escape_json(v.check.escape_env),
        "balanced": None if v.balance is None else v.balance.ok,
        "balanceWitness": _witness_json(v.balance),
        "exploration": _exploration_json(v.graph),
        "refinedCycle": (
            [str(a) for a in v.refined_cycle.actors] if v.refined_cycle else None
        ),
        "consistent": v.consistent,
        "errors": _errors_json(v.check),
    }


if __name__ == "__main__":
    sys.exit(main())
