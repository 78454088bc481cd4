"""Small-step execution of actor configurations.

Structural congruence is handled by normalisation: configurations are kept
in a canonical form (restrictions hoisted, unused ones dropped, actors and
mailboxes sorted), which makes state identity a string comparison and lets
exhaustive exploration deduplicate interleavings.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from typing import Optional

from .names import Ident
from .printer import print_config
from .terms import (
    Actor,
    Config,
    Message,
    Nil,
    Program,
    React,
    Send,
    Spawn,
    config_measure,
    free_names,
    substitute,
)


@dataclass(frozen=True)
class RuleLabel:
    """Which rule fired, and on what."""

    kind: str  # "ended" | "top-spawn" | "spawn" | "send" | "receive"
    actor: Optional[Ident] = None
    target: Optional[Ident] = None
    label: Optional[str] = None
    args: tuple[Ident, ...] = ()
    spawned: Optional[Ident] = None

    def __str__(self) -> str:
        if self.kind == "ended":
            return f"ended({self.actor})"
        if self.kind == "top-spawn":
            return f"top-spawn({self.spawned})"
        if self.kind == "spawn":
            return f"spawn({self.actor} -> {self.spawned})"
        msg = self.label + ("(" + ", ".join(map(str, self.args)) + ")" if self.args else "")
        if self.kind == "send":
            return f"send({self.actor} {msg} -> {self.target})"
        return f"receive({self.actor} {msg})"


class LimitExceeded(Exception):
    def __init__(self, what: str, limit: int):
        super().__init__(f"exploration {what} limit of {limit} exceeded")
        self.what = what
        self.limit = limit


def initial_config(p: Program) -> Config:
    return canonicalize(Config(frozenset(), (), p.defs))


def canonicalize(f: Config) -> Config:
    """Normal form modulo structural congruence: actors sorted, mailboxes
    sorted (reception may pick any element, so order is irrelevant),
    restrictions kept only while their name still occurs."""
    actors = tuple(
        sorted(
            (replace(a, mailbox=tuple(sorted(a.mailbox, key=Message.sort_key)))
             for a in f.actors),
            key=lambda a: (a.name.name, a.name.uid),
        )
    )
    g = Config(frozenset(), actors, f.residual)
    occurring = free_names(g)
    restricted = frozenset(u for u in f.restricted if u in occurring)
    return Config(restricted, actors, f.residual)


def canonical_key(f: Config) -> str:
    """Deterministic state identity: canonical form printed with restricted
    uids renumbered in display order."""
    order: dict[int, int] = {}
    for u in sorted(f.restricted, key=lambda u: (u.name, u.uid)):
        order[u.uid] = len(order) + 1

    def shown(u: Ident) -> str:
        return f"{u.name}%{order[u.uid]}" if u.uid in order else u.name

    parts = []
    for a in f.actors:
        mb = ",".join(
            m.label + "(" + ",".join(shown(x) for x in m.args) + ")" for m in a.mailbox
        )
        parts.append(f"[{shown(a.name)}|{mb}]{shown(a.name)}{{{_expr_key(a.body, shown)}}}")
    for d in f.residual:
        parts.append(f"val {d.name.name}")
    return " | ".join(parts) if parts else "0"


def _expr_key(e, shown) -> str:
    if isinstance(e, Nil):
        return "0"
    if isinstance(e, Send):
        args = ",".join(shown(a) for a in e.args)
        return f"{shown(e.target)}!{e.label}({args});{_expr_key(e.cont, shown)}"
    if isinstance(e, React):
        inner = ",".join(
            f"{b.label}({','.join(x.name for x in b.params)})=>{_expr_key(b.body, shown)}"
            for b in e.branches
        )
        return f"react{{{inner}}}"
    if isinstance(e, Spawn):
        return f"val {e.name.name}={_expr_key(e.body, shown)};{_expr_key(e.cont, shown)}"
    raise TypeError(type(e).__name__)


def step(f: Config) -> list[tuple[RuleLabel, Config]]:
    """All one-step reducts of a canonical configuration, canonicalized.
    An empty result means the configuration is terminal."""
    out: list[tuple[RuleLabel, Config]] = []

    if f.residual:
        d, rest = f.residual[0], f.residual[1:]
        actor = Actor(d.name, (), d.body)
        g = Config(f.restricted | {d.name}, f.actors + (actor,), rest)
        out.append((RuleLabel("top-spawn", spawned=d.name), canonicalize(g)))

    for i, a in enumerate(f.actors):
        others = f.actors[:i] + f.actors[i + 1 :]
        body = a.body
        if isinstance(body, Nil):
            if not a.mailbox:
                g = Config(f.restricted, others, f.residual)
                out.append((RuleLabel("ended", actor=a.name), canonicalize(g)))
        elif isinstance(body, Spawn):
            assert all(
                body.name not in m.args for b in f.actors for m in b.mailbox
            ), "spawned name already travels in a mailbox"
            parent = replace(a, body=body.cont)
            child = Actor(body.name, (), body.body)
            g = Config(
                f.restricted | {body.name},
                others + (parent, child),
                f.residual,
            )
            out.append(
                (RuleLabel("spawn", actor=a.name, spawned=body.name), canonicalize(g))
            )
        elif isinstance(body, Send):
            # deliverable only while the target actor is alive
            if body.target == a.name:
                updated = replace(
                    a,
                    mailbox=a.mailbox + (Message(body.label, body.args),),
                    body=body.cont,
                )
                g = Config(f.restricted, others + (updated,), f.residual)
                _emit_send(out, a.name, body, g)
            else:
                tgt = next((b for b in others if b.name == body.target), None)
                if tgt is not None:
                    sender = replace(a, body=body.cont)
                    receiver = replace(
                        tgt, mailbox=tgt.mailbox + (Message(body.label, body.args),)
                    )
                    rest = tuple(b for b in others if b.name != body.target)
                    g = Config(
                        f.restricted, rest + (sender, receiver), f.residual
                    )
                    _emit_send(out, a.name, body, g)
        elif isinstance(body, React):
            branches = {b.label: b for b in body.branches}
            seen: set[tuple[str, tuple]] = set()
            for j, m in enumerate(a.mailbox):
                key = (m.label, tuple((x.name, x.uid) for x in m.args))
                if key in seen:
                    continue  # identical message, identical reduct
                seen.add(key)
                b = branches.get(m.label)
                if b is None or len(b.params) != len(m.args):
                    continue
                left = a.mailbox[:j] + a.mailbox[j + 1 :]
                new_body = substitute(b.body, dict(zip(b.params, m.args)))
                updated = replace(a, mailbox=left, body=new_body)
                g = Config(f.restricted, others + (updated,), f.residual)
                lbl = RuleLabel("receive", actor=a.name, label=m.label, args=m.args)
                out.append((lbl, canonicalize(g)))

    before = config_measure(f)
    for lbl, g in out:
        assert config_measure(g) < before, f"measure did not decrease on {lbl}"
    return out


def _emit_send(out, sender: Ident, body: Send, g: Config) -> None:
    lbl = RuleLabel(
        "send", actor=sender, target=body.target, label=body.label, args=body.args
    )
    out.append((lbl, canonicalize(g)))


@dataclass
class StateGraph:
    states: dict[str, Config]
    edges: list[tuple[str, RuleLabel, str]]
    initial: str
    success: set[str]  # terminals that reduced to the empty configuration
    stuck: set[str]

    @property
    def all_success(self) -> bool:
        return not self.stuck

    def terminal_configs(self) -> list[Config]:
        return [self.states[k] for k in sorted(self.stuck | self.success)]

    def stuck_configs(self) -> list[Config]:
        return [self.states[k] for k in sorted(self.stuck)]


def explore(
    p: Program,
    max_states: int = 100_000,
    max_depth: int = 100_000,
    jobs: int = 1,
) -> StateGraph:
    """Breadth-first closure of `step` modulo canonical forms.

    Every actor program is finite, so exploration terminates; the limits
    only guard against mistakes.  The resulting graph is a pure function
    of the program, whatever `jobs` is.
    """
    start = initial_config(p)
    start_key = canonical_key(start)
    states = {start_key: start}
    edges: list[tuple[str, RuleLabel, str]] = []
    success: set[str] = set()
    stuck: set[str] = set()
    frontier = [start_key]
    depth = 0
    while frontier:
        if depth > max_depth:
            raise LimitExceeded("depth", max_depth)
        expansions = _expand(frontier, states, jobs)
        next_frontier: list[str] = []
        for key, reducts in expansions:
            if not reducts:
                (success if states[key].is_empty() else stuck).add(key)
                continue
            for lbl, g in reducts:
                gk = canonical_key(g)
                edges.append((key, lbl, gk))
                if gk not in states:
                    states[gk] = g
                    next_frontier.append(gk)
                    if len(states) > max_states:
                        raise LimitExceeded("state", max_states)
        frontier = next_frontier
        depth += 1
    return StateGraph(states, edges, start_key, success, stuck)


def _expand(frontier: list[str], states: dict[str, Config], jobs: int):
    if jobs > 1 and len(frontier) >= 64:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reducts = list(pool.map(lambda k: step(states[k]), frontier))
        return list(zip(frontier, reducts))
    return [(k, step(states[k])) for k in frontier]


@dataclass
class Trace:
    seed: int
    steps: list[tuple[Config, RuleLabel]]
    final: Config

    @property
    def success(self) -> bool:
        return self.final.is_empty()


def run_random(p: Program, seed: int) -> Trace:
    """One maximal run, choosing uniformly among enabled steps with
    Python's Mersenne-Twister generator seeded by `seed`; identical seeds
    give identical traces."""
    rng = random.Random(seed)
    cfg = initial_config(p)
    steps: list[tuple[Config, RuleLabel]] = []
    while True:
        reducts = step(cfg)
        if not reducts:
            return Trace(seed, steps, cfg)
        reducts.sort(key=lambda rc: (str(rc[0]), canonical_key(rc[1])))
        lbl, nxt = reducts[rng.randrange(len(reducts))]
        steps.append((cfg, lbl))
        cfg = nxt


# ---------------------------------------------------------------------------
# exports


def graph_to_dot(g: StateGraph, max_label: int = 120) -> str:
    names = {k: f"s{i}" for i, k in enumerate(sorted(g.states))}

    def esc(s: str) -> str:
        s = s[:max_label] + ("..." if len(s) > max_label else "")
        return s.replace("\\", "\\\\").replace('"', '\\"')

    lines = ["digraph exploration {", "  rankdir=LR;", "  node [shape=box];"]
    for k in sorted(g.states):
        attrs = [f'label="{esc(print_config(g.states[k]))}"']
        if k in g.success:
            attrs.append("peripheries=2")
        if k in g.stuck:
            attrs.append('color=red')
        if k == g.initial:
            attrs.append("style=bold")
        lines.append(f"  {names[k]} [{', '.join(attrs)}];")
    for src, lbl, dst in g.edges:
        lines.append(f'  {names[src]} -> {names[dst]} [label="{esc(str(lbl))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(g: StateGraph) -> str:
    names = {k: i for i, k in enumerate(sorted(g.states))}
    payload = {
        "initial": names[g.initial],
        "states": [
            {
                "id": names[k],
                "config": print_config(g.states[k]),
                "terminal": (
                    "success" if k in g.success else "stuck" if k in g.stuck else None
                ),
            }
            for k in sorted(g.states)
        ],
        "edges": [
            {"from": names[s], "rule": str(l), "to": names[d]} for s, l, d in g.edges
        ],
    }
    return json.dumps(payload, indent=2) + "\n"
