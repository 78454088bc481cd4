"""Random closed programs for property suites.

Programs are generated as source text from a random communication plan:
a handful of actors, some nested inside others, exchanging messages with
globally unique labels and no parameters.  Every input is consumed by
exactly one send, so a plan that checks is automatically balanced.
Nesting makes both directions of a host/child pair visible, so plans
whose orderings wait on each other cyclically do come up; those are
exactly what the refined checker rejects, which makes rejection sampling
the acceptance filter.
"""

from __future__ import annotations

import random

from .checker import check_program
from .parser import parse_program
from .terms import Program
from .types import balanced


def random_plan(rng: random.Random, max_actors: int = 6, max_msgs: int = 4):
    """A plan is (events, children, tops): per-actor event lists made of
    ("send", target, label) and ("recv", label), the nested children of
    each actor, and the top-level actors in definition order.

    A sender must be able to name its target: targets are earlier
    top-level actors, the sender itself, its own children, or (for a
    nested actor) anything its host could name at the spawn.  A message
    to oneself is always sent before it is awaited.
    """
    k = rng.randint(2, max_actors)
    tops: list[int] = [0]
    children: list[list[int]] = [[] for _ in range(k)]
    visible: list[list[int]] = [[0]]
    for i in range(1, k):
        if rng.random() < 0.4:
            host = rng.randrange(i)
            children[host].append(i)
            visible.append(visible[host] + [i])
            visible[host].append(i)
        else:
            visible.append(tops + [i])
            tops.append(i)

    events: list[list[tuple]] = [[] for _ in range(k)]
    label = 0
    for _ in range(2 * k):
        sender = rng.randrange(k)
        receiver = rng.choice(visible[sender])
        if len(events[sender]) >= max_msgs or len(events[receiver]) >= max_msgs:
            continue
        lbl = f"m{label}"
        label += 1
        events[sender].append(("send", receiver, lbl))
        events[receiver].append(("recv", lbl))

    for i in range(k):
        rng.shuffle(events[i])
        own = {ev[2] for ev in events[i] if ev[0] == "send" and ev[1] == i}
        sent: set[str] = set()
        fixed: list[tuple] = []
        deferred: list[tuple] = []
        for ev in events[i]:
            if ev[0] == "recv" and ev[1] in own and ev[1] not in sent:
                deferred.append(ev)
                continue
            fixed.append(ev)
            if ev[0] == "send" and ev[1] == i:
                sent.add(ev[2])
                for d in [d for d in deferred if d[1] in sent]:
                    deferred.remove(d)
                    fixed.append(d)
        fixed.extend(deferred)
        events[i] = fixed
    return events, children, tops


def plan_to_source(plan) -> str:
    events, children, tops = plan
    names = [f"p{i}" for i in range(len(events))]

    def seq_type(evs: list[tuple]) -> str:
        parts = []
        for ev in evs:
            parts.append(f"!{ev[2]}." if ev[0] == "send" else f"*?{ev[1]}.")
        return "[" + "".join(parts) + "end]"

    def chain(evs: list[tuple], depth: int) -> str:
        pad = "  " * depth
        if not evs:
            return f"{pad}0"
        ev, rest = evs[0], evs[1:]
        if ev[0] == "send":
            return f"{pad}{names[ev[1]]}!{ev[2]};\n{chain(rest, depth)}"
        return f"{pad}react{{ {ev[1]} =>\n{chain(rest, depth + 1)}\n{pad}}}"

    def body(i: int, depth: int) -> str:
        pad = "  " * depth
        out = []
        for c in children[i]:
            out.append(
                f"{pad}val {names[c]} : {seq_type(events[c])} = actor{{\n"
                f"{body(c, depth + 1)}\n{pad}}};"
            )
        out.append(chain(events[i], depth))
        return "\n".join(out)

    defs = [
        f"val {names[i]} : {seq_type(events[i])} = actor{{\n{body(i, 1)}\n}};"
        for i in tops
    ]
    return "\n".join(defs) + "\n0\n"


def generate_accepted(
    seed: int,
    count: int,
    max_actors: int = 6,
    max_msgs: int = 4,
    max_attempts: int = 100_000,
) -> list[Program]:
    """Keep generating until `count` programs pass the refined checker and
    the balance test."""
    rng = random.Random(seed)
    kept: list[Program] = []
    attempts = 0
    while len(kept) < count:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                f"only {len(kept)}/{count} accepted programs after {attempts} attempts"
            )
        src = plan_to_source(random_plan(rng, max_actors, max_msgs))
        p = parse_program(src)
        res = check_program(p, "refined")
        if not res.ok:
            continue
        if not balanced(res.escape_env).ok:
            continue
        kept.append(p)
    return kept
