"""Abstract syntax of actor programs and runtime configurations.

Binding discipline: actor definitions bind their name over both the new
body and the continuation, input branches bind their parameters over the
branch body.  After `alpha_rename` every binder carries a globally unique
uid, which makes substitution capture-free by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .names import KIND_NAME, KIND_SELF, KIND_VAR, Ident, Span
from .types import BType


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Send:
    target: Ident
    label: str
    args: tuple[Ident, ...]
    cont: "Expr"
    span: Optional[Span] = field(default=None, compare=False)
    site: int = field(default=0, compare=False)  # stable id of this send site


@dataclass(frozen=True)
class Branch:
    label: str
    params: tuple[Ident, ...]
    body: "Expr"
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class React:
    branches: tuple[Branch, ...]  # sorted by label
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Spawn:
    name: Ident
    annot: BType
    body: "Expr"
    cont: "Expr"
    span: Optional[Span] = field(default=None, compare=False)


Expr = Union[Nil, Send, React, Spawn]

NIL = Nil()


@dataclass(frozen=True)
class Def:
    name: Ident
    annot: BType
    body: Expr
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    defs: tuple[Def, ...]

    def __str__(self) -> str:
        from .printer import print_program

        return print_program(self)


@dataclass(frozen=True)
class Message:
    label: str
    args: tuple[Ident, ...]

    def sort_key(self):
        return (self.label, tuple((a.name, a.uid) for a in self.args))


@dataclass(frozen=True)
class Actor:
    name: Ident
    mailbox: tuple[Message, ...]
    body: Expr


@dataclass(frozen=True)
class Config:
    """Runtime configuration: private names, active actors and the residual
    top-level definitions still waiting to start."""

    restricted: frozenset[Ident]
    actors: tuple[Actor, ...]
    residual: tuple[Def, ...]

    def is_empty(self) -> bool:
        return not self.actors and not self.residual

    def actor(self, name: Ident) -> Optional[Actor]:
        for a in self.actors:
            if a.name == name:
                return a
        return None

    def __str__(self) -> str:
        from .printer import print_config

        return print_config(self)


# ---------------------------------------------------------------------------
# name sets


def free_names(x) -> set[Ident]:
    """The identifiers occurring free in an expression, definition list,
    program or configuration."""
    if isinstance(x, Nil):
        return set()
    if isinstance(x, Send):
        return {x.target, *x.args} | free_names(x.cont)
    if isinstance(x, React):
        acc: set[Ident] = set()
        for b in x.branches:
            acc |= free_names(b.body) - set(b.params)
        return acc
    if isinstance(x, Spawn):
        return (free_names(x.body) | free_names(x.cont)) - {x.name}
    if isinstance(x, Def):
        return free_names(x.body) - {x.name}
    if isinstance(x, Program):
        return _free_defs(x.defs)
    if isinstance(x, Config):
        acc = _free_defs(x.residual)
        for a in x.actors:
            acc |= {a.name} | free_names(a.body)
            for m in a.mailbox:
                acc |= set(m.args)
        return acc - x.restricted
    raise TypeError(f"free_names: unsupported {type(x).__name__}")


def _free_defs(defs: tuple[Def, ...]) -> set[Ident]:
    acc: set[Ident] = set()
    for d in reversed(defs):
        acc = (acc | free_names(d.body)) - {d.name}
    return acc


def actors_of(f: Config) -> set[Ident]:
    """Names of active actors that are visible outside the configuration."""
    return {a.name for a in f.actors} - f.restricted


# ---------------------------------------------------------------------------
# substitution


class CaptureViolation(Exception):
    """A binder inside the term collides with a substituted name, which the
    unique-uid invariant should have ruled out."""


def substitute(e: Expr, subst: dict[Ident, Ident]) -> Expr:
    """Simultaneous substitution of actor names for free identifiers."""
    if not subst:
        return e
    values = set(subst.values())

    def ident(u: Ident) -> Ident:
        return subst.get(u, u)

    def go(e: Expr) -> Expr:
        if isinstance(e, Nil):
            return e
        if isinstance(e, Send):
            return replace(
                e,
                target=ident(e.target),
                args=tuple(ident(a) for a in e.args),
                cont=go(e.cont),
            )
        if isinstance(e, React):
            branches = []
            for b in e.branches:
                for p in b.params:
                    if p in values:
                        raise CaptureViolation(f"binder {p.tagged()} captures a substituted name")
                inner = {k: v for k, v in subst.items() if k not in b.params}
                branches.append(replace(b, body=substitute(b.body, inner)))
            return replace(e, branches=tuple(branches))
        if isinstance(e, Spawn):
            if e.name in values:
                raise CaptureViolation(f"binder {e.name.tagged()} captures a substituted name")
            inner = {k: v for k, v in subst.items() if k != e.name}
            return replace(
                e, body=substitute(e.body, inner), cont=substitute(e.cont, inner)
            )
        raise TypeError(type(e).__name__)

    return go(e)


# ---------------------------------------------------------------------------
# renaming and well-formedness


@dataclass
class Violation:
    span: Optional[Span]
    reason: str

    def __str__(self) -> str:
        at = f" at {self.span}" if self.span else ""
        return f"{self.reason}{at}"


@dataclass
class Report:
    violations: list[Violation]
    notes: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


class WellFormednessError(Exception):
    def __init__(self, report: Report):
        super().__init__("; ".join(str(v) for v in report.violations))
        self.report = report


def alpha_rename(p: Program, counter: Optional[itertools.count] = None) -> Program:
    """Assign fresh uids to every binder and send site, resolve `self` to
    the innermost enclosing actor.  Free occurrences keep uid 0 and are
    reported by `well_formed`.  Idempotent up to the concrete uid values.
    """
    counter = counter or itertools.count(1)

    def fresh(u: Ident, kind: str) -> Ident:
        return Ident(u.name, next(counter), kind, u.span)

    def rename(e: Expr, scope: dict[str, Ident], me: Optional[Ident]) -> Expr:
        if isinstance(e, Nil):
            return e
        if isinstance(e, Send):
            return replace(
                e,
                target=resolve(e.target, scope, me),
                args=tuple(resolve(a, scope, me) for a in e.args),
                cont=rename(e.cont, scope, me),
                site=next(counter),
            )
        if isinstance(e, React):
            branches = []
            for b in e.branches:
                params = tuple(fresh(x, KIND_VAR) for x in b.params)
                inner = dict(scope)
                inner.update({x.name: x for x in params})
                branches.append(
                    replace(b, params=params, body=rename(b.body, inner, me))
                )
            return replace(e, branches=tuple(branches))
        if isinstance(e, Spawn):
            name = fresh(e.name, KIND_NAME)
            inner = dict(scope)
            inner[name.name] = name
            return replace(
                e,
                name=name,
                body=rename(e.body, inner, name),
                cont=rename(e.cont, inner, me),
            )
        raise TypeError(type(e).__name__)

    def resolve(u: Ident, scope: dict[str, Ident], me: Optional[Ident]) -> Ident:
        if u.kind == KIND_SELF:
            if me is None:
                return u  # flagged by well_formed
            return replace(me, span=u.span)
        return scope.get(u.name, u)

    defs: list[Def] = []
    scope: dict[str, Ident] = {}
    for d in p.defs:
        name = fresh(d.name, KIND_NAME)
        scope[name.name] = name
        defs.append(replace(d, name=name, body=rename(d.body, scope, name)))
    return Program(tuple(defs))


def well_formed(p: Program) -> Report:
    """Check the binding conventions a renamed program must satisfy:
    globally unique binder uids, distinct labels per input choice,
    distinct parameters, every identifier in scope, no top-level `self`.
    """
    violations: list[Violation] = []
    seen_uids: set[int] = set()

    def bind(u: Ident) -> None:
        if u.uid == 0:
            violations.append(Violation(u.span, f"binder '{u.name}' was never renamed"))
        elif u.uid in seen_uids:
            violations.append(
                Violation(u.span, f"binder uid {u.uid} ('{u.name}') reused")
            )
        else:
            seen_uids.add(u.uid)

    def use(u: Ident, scope: set[Ident]) -> None:
        if u.kind == KIND_SELF:
            violations.append(Violation(u.span, "'self' outside any actor body"))
        elif u.uid == 0 or u not in scope:
            violations.append(Violation(u.span, f"identifier '{u.name}' is not in scope"))

    def walk(e: Expr, scope: set[Ident]) -> None:
        if isinstance(e, Nil):
            return
        if isinstance(e, Send):
            use(e.target, scope)
            for a in e.args:
                use(a, scope)
            walk(e.cont, scope)
            return
        if isinstance(e, React):
            labels = [b.label for b in e.branches]
            if len(set(labels)) != len(labels):
                dup = next(l for l in labels if labels.count(l) > 1)
                violations.append(Violation(e.span, f"duplicate input label '{dup}'"))
            for b in e.branches:
                if len({x.name for x in b.params}) != len(b.params):
                    violations.append(
                        Violation(b.span, f"duplicate parameter in branch '{b.label}'")
                    )
                for x in b.params:
                    bind(x)
                walk(b.body, scope | set(b.params))
            return
        if isinstance(e, Spawn):
            bind(e.name)
            walk(e.body, scope | {e.name})
            walk(e.cont, scope | {e.name})
            return
        raise TypeError(type(e).__name__)

    names = [d.name.name for d in p.defs]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        violations.append(Violation(None, f"duplicate top-level definition '{dup}'"))
    scope: set[Ident] = set()
    for d in p.defs:
        bind(d.name)
        scope.add(d.name)
        walk(d.body, scope)
    return Report(violations, [])


def expr_size(e: Expr) -> int:
    """Reduction measure: strictly decreases along every execution step
    (sends weigh one extra unit, which pays for the delivered message)."""
    if isinstance(e, Nil):
        return 0
    if isinstance(e, Send):
        return 2 + expr_size(e.cont)
    if isinstance(e, React):
        return 1 + sum(1 + expr_size(b.body) for b in e.branches)
    if isinstance(e, Spawn):
        return 2 + expr_size(e.body) + expr_size(e.cont)
    raise TypeError(type(e).__name__)


def config_measure(f: Config) -> int:
    total = sum(1 + expr_size(a.body) + len(a.mailbox) for a in f.actors)
    total += sum(2 + expr_size(d.body) for d in f.residual)
    return total
