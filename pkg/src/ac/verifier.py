"""Cross-validation of the static discipline against exhaustive execution.

The safety guarantee says a checked and balanced system (in the
deadlock-excluding mode) can always move until it is empty.  The verifier
runs the checker, the balance test and full exploration, and flags any
state of affairs the guarantee rules out.  Two further harnesses replay
the metatheory on concrete state graphs: types advance along every edge
and re-check (subject reduction), and delivered messages always match a
pending input of the receiver (mailbox lemma).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import types
from .checker import CheckResult, CycleReport, check_program, check_config
from .printer import print_config, print_type
from .semantics import RuleLabel, StateGraph, explore
from .terms import Config, Program, Spawn
from .types import (
    BalanceReport,
    BType,
    Choice,
    Out,
    Path,
    SType,
    TypeEnv,
    balanced,
    branch_of,
    escape_consumed,
    inputs_of,
    mark_positions,
    suffix_le,
    suffix_merge,
)


@dataclass
class Verdict:
    mode: str
    check: CheckResult
    balance: Optional[BalanceReport]
    graph: Optional[StateGraph]
    consistent: bool
    notes: list[str]

    @property
    def typed(self) -> bool:
        return self.check.ok

    @property
    def balanced_ok(self) -> bool:
        return bool(self.balance and self.balance.ok)

    @property
    def refined_cycle(self) -> Optional[CycleReport]:
        return self.check.cycle

    @property
    def all_success(self) -> bool:
        return bool(self.graph and self.graph.all_success)


def verify_safety(
    p: Program,
    mode: str = "basic",
    max_states: int = 100_000,
    max_depth: int = 100_000,
    jobs: int = 1,
) -> Verdict:
    """Static verdicts plus exhaustive exploration, cross-checked.

    A consistency failure (checked, balanced and deadlock-excluding, yet a
    stuck state exists) indicates a bug in this tool, not in the program.
    """
    res = check_program(p, mode)
    balance = balanced(res.escape_env) if res.ok else None
    graph = explore(p, max_states=max_states, max_depth=max_depth, jobs=jobs)
    notes: list[str] = []
    consistent = True
    if res.ok and balance and balance.ok and not graph.all_success:
        if mode == "refined":
            consistent = False
            notes.append(
                "checked, balanced and free of cyclic waiting, yet a stuck "
                "state is reachable: this is an internal error"
            )
        else:
            notes.append(
                "typed and balanced, but basic mode does not exclude deadlocks; "
                "re-run with the refined mode"
            )
    return Verdict(mode, res, balance, graph, consistent, notes)


# ---------------------------------------------------------------------------
# environment advancement along execution edges


def _unmark_at(s: SType, path: Path) -> SType:
    if len(path) == 1:
        assert isinstance(s, Choice)
        branches = tuple(
            replace(b, marked=False) if b.label == path[0] else b for b in s.branches
        )
        return Choice(any(b.marked for b in branches), branches)
    step, rest = path[0], path[1:]
    if step == types.OUT_STEP:
        assert isinstance(s, Out)
        return replace(s, cont=_unmark_at(s.cont, rest))
    assert isinstance(s, Choice)
    branches = tuple(
        replace(b, cont=_unmark_at(b.cont, rest)) if b.label == step else b
        for b in s.branches
    )
    return Choice(s.marked, branches)


def advance_env(
    g: TypeEnv, pre: Config, lbl: RuleLabel
) -> tuple[Optional[TypeEnv], Optional[str]]:
    """Advance the per-identifier residual types across one step: a spawn
    introduces the declared type, a send drops the consumed mark and the
    sender's output action, a receive descends into the taken branch and
    folds the bound parameter types into the actual arguments."""
    g = dict(g)
    if lbl.kind == "top-spawn":
        d = pre.residual[0]
        g[d.name] = d.annot
        return g, None
    if lbl.kind == "spawn":
        actor = pre.actor(lbl.actor)
        assert actor is not None and isinstance(actor.body, Spawn)
        g[lbl.spawned] = actor.body.annot
        return g, None
    if lbl.kind == "ended":
        return g, None
    if lbl.kind == "send":
        s = g[lbl.actor].body
        if not isinstance(s, Out) or s.label != lbl.label:
            return None, f"type of {lbl.actor} does not begin with !{lbl.label}"
        g[lbl.actor] = BType(s.cont)
        t = g[lbl.target].body
        candidates = sorted(
            p
            for p in mark_positions(t)
            if p[-1] == lbl.label
            and len(branch_of(_choice_at(t, p[:-1]), lbl.label).params) == len(lbl.args)
        )
        if not candidates:
            return None, (
                f"no pending mark ?{lbl.label} in the type of {lbl.target} for "
                f"this send"
            )
        g[lbl.target] = BType(_unmark_at(t, candidates[0]))
        return g, None
    if lbl.kind == "receive":
        s = g[lbl.actor].body
        if not isinstance(s, Choice):
            return None, f"type of {lbl.actor} does not offer inputs"
        try:
            branch = branch_of(s, lbl.label)
        except KeyError:
            return None, f"type of {lbl.actor} offers no input ?{lbl.label}"
        g[lbl.actor] = BType(branch.cont)
        for formal, actual in zip(branch.params, lbl.args):
            cur = g.get(actual)
            if cur is None:
                return None, f"received argument {actual} has no type"
            merged = suffix_merge(formal.body, cur.body)
            if merged is None:
                return None, (
                    f"parameter type {print_type(formal)} does not fold into the "
                    f"current type of {actual}"
                )
            g[actual] = BType(merged)
        return g, None
    raise ValueError(lbl.kind)


def _choice_at(s: SType, path: Path) -> Choice:
    node = types.subtree_at(s, path)
    assert isinstance(node, Choice)
    return node


# ---------------------------------------------------------------------------
# harnesses


@dataclass
class HarnessReport:
    name: str
    states: int
    edges: int
    violations: list[str] = field(default_factory=list)
    skipped: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        head = f"{self.name}: {self.states} states, {self.edges} edges"
        if self.skipped:
            return [f"{head}: skipped ({self.skipped})"]
        if self.ok:
            return [f"{head}: no violations"]
        return [f"{head}: {len(self.violations)} violation(s)"] + [
            f"  {v}" for v in self.violations
        ]


def instrument(p: Program, max_states: int = 100_000):
    """Explore and attach an advanced type environment to every state.
    Distinct paths into one state must agree on the environment."""
    graph = explore(p, max_states=max_states)
    env_of: dict[str, TypeEnv] = {graph.initial: {}}
    violations: list[str] = []
    for src, lbl, dst in graph.edges:
        g = env_of.get(src)
        if g is None:
            continue
        g2, why = advance_env(g, graph.states[src], lbl)
        if g2 is None:
            violations.append(f"cannot advance over {lbl}: {why}")
            continue
        if dst in env_of:
            if env_of[dst] != g2:
                violations.append(
                    f"paths disagree on the environment of state "
                    f"{print_config(graph.states[dst])}"
                )
        else:
            env_of[dst] = g2
    return graph, env_of, violations


def subject_reduction_harness(p: Program, max_states: int = 100_000) -> HarnessReport:
    """Re-check every reachable state under its advanced environment and
    confirm types only ever shrink: pointwise suffixes for identifiers,
    alternative-dropping containment for the bound-name collections."""
    base = check_program(p, "basic")
    report = HarnessReport("subject-reduction", 0, 0)
    if not base.ok:
        report.skipped = "program does not check"
        return report
    graph, env_of, violations = instrument(p, max_states)
    report.states = len(graph.states)
    report.edges = len(graph.edges)
    report.violations = violations
    deltas: dict[str, object] = {}
    for key in env_of:
        res = check_config(env_of[key], graph.states[key], mode="basic")
        if not res.ok:
            report.violations += [
                f"state {print_config(graph.states[key])} fails to re-check: {err}"
                for err in res.errors
            ]
        else:
            deltas[key] = res.escape_env
    for src, lbl, dst in graph.edges:
        if src not in env_of or dst not in env_of:
            continue
        g, g2 = env_of[src], env_of[dst]
        for u in g:
            if u in g2 and not suffix_le(g2[u].body, g[u].body):
                report.violations.append(
                    f"type of {u} grew over {lbl}: {g2[u]} is no tail of {g[u]}"
                )
        if src in deltas and dst in deltas:
            if not escape_consumed(deltas[dst], deltas[src]):
                report.violations.append(
                    f"bound-name environment not consumed over {lbl}"
                )
    return report


def mailbox_lemma_harness(
    p: Program, force: bool = False, max_states: int = 100_000
) -> HarnessReport:
    """In every reachable state, every delivered message matches a pending
    input of its receiver.  Guaranteed for checked balanced programs;
    `force` runs the scan regardless."""
    report = HarnessReport("mailbox-lemma", 0, 0)
    base = check_program(p, "basic")
    if not base.ok:
        report.skipped = "program does not check"
        return report
    bal = balanced(base.escape_env)
    if not bal.ok and not force:
        report.skipped = "program is not balanced (use force to scan anyway)"
        return report
    graph, env_of, violations = instrument(p, max_states)
    report.states = len(graph.states)
    report.edges = len(graph.edges)
    report.violations = violations
    for key, g in env_of.items():
        cfg = graph.states[key]
        for a in cfg.actors:
            pending = inputs_of(g[a.name]) if a.name in g else []
            for m in a.mailbox:
                if not any(
                    lbl == m.label and len(params) == len(m.args)
                    for lbl, params, _ in pending
                ):
                    report.violations.append(
                        f"message {m.label} in the mailbox of {a.name} matches no "
                        f"pending input in state {print_config(cfg)}"
                    )
    return report
