"""The behavioural type checker.

Each actor body is walked against its declared type.  The walk keeps a
cursor into the subject's own type and a global claim registry: a send
claims the marked input it consumes in the target's assumed type, and at
the end every mark written in a type must have been claimed by exactly
one send.  Claims made by one body on one identifier must stay on a
single branch path of that identifier's type, because messages sent
unconditionally can only be received along one branch of computation.

In refined (deadlock-excluding) mode every output action additionally
carries the target's continuation type after handling the message; the
checker either verifies written annotations or infers them, and a cyclic
inference dependency is reported as the deadlock it denotes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

from .names import Ident, Span
from . import types
from .printer import print_type
from .terms import Config, Def, Expr, Nil, Program, React, Send, Spawn
from .types import (
    BType,
    Choice,
    End,
    EscapeEnv,
    Leaf,
    Out,
    Path,
    SType,
    TypeEnv,
    branch_of,
    env_compose,
    eq_mod_marks,
    escape_choice,
    escape_combine,
    escape_extend,
    inputs_of,
    mark_positions,
    path_commitments,
    strip_marks,
    subtree_at,
    suffix_le,
)

OUTPUT_MISMATCH = "OutputMismatch"
NO_MATCHING_INPUT = "NoMatchingInput"
DOUBLE_CLAIM = "DoubleClaim"
BRANCH_CONFLICT = "BranchConflict"
PARAM_SUFFIX = "ParamSuffix"
END_NOT_REACHED = "EndNotReached"
RESIDUAL_MARK = "ResidualMark"
MAILBOX_ORPHAN = "MailboxOrphanShape"
ANNOTATION_SPLIT = "AnnotationSplit"
REFINED_ANNOT_MISMATCH = "RefinedAnnotMismatch"
REFINED_CYCLE = "RefinedCycle"

_RULE_OF_KIND = {
    OUTPUT_MISMATCH: "send",
    NO_MATCHING_INPUT: "send",
    DOUBLE_CLAIM: "par",
    BRANCH_CONFLICT: "send",
    PARAM_SUFFIX: "send",
    END_NOT_REACHED: "end",
    RESIDUAL_MARK: "end",
    MAILBOX_ORPHAN: "mailbox",
    ANNOTATION_SPLIT: "spawn",
    REFINED_ANNOT_MISMATCH: "send",
    REFINED_CYCLE: "send",
}


@dataclass
class CheckError:
    kind: str
    span: Optional[Span]
    message: str

    @property
    def rule(self) -> str:
        return _RULE_OF_KIND[self.kind]

    def __str__(self) -> str:
        at = str(self.span) if self.span else "?:?"
        return f"{self.kind} at {at} — rule ({self.rule}): {self.message}"


@dataclass
class CycleReport:
    actors: list[Ident]
    spans: list[Optional[Span]]

    def __str__(self) -> str:
        ring = " -> ".join(str(a) for a in self.actors + self.actors[:1])
        return f"{{{ring}}}"


@dataclass(frozen=True)
class Claim:
    component: int  # top-level parallel component whose send consumes the input
    span: Optional[Span]


ClaimKey = tuple[Ident, Path]


@dataclass
class CheckResult:
    mode: str
    errors: list[CheckError]
    warnings: list[str]
    escape_env: Optional[EscapeEnv]
    claims: dict[ClaimKey, Claim]
    trees: dict[Ident, SType]
    cycle: Optional[CycleReport] = None

    @property
    def ok(self) -> bool:
        return not self.errors


class _Abort(Exception):
    pass


@dataclass
class _State:
    claims: dict[ClaimKey, Claim]
    committed: dict[tuple[int, Ident], dict[Path, str]]

    def fork(self) -> "_State":
        return _State(dict(self.claims), {k: dict(v) for k, v in self.committed.items()})


class _Checker:
    def __init__(self, mode: str):
        self.mode = mode
        self.errors: list[CheckError] = []
        self.warnings: list[str] = []
        self.trees: dict[Ident, SType] = {}
        # tables for annotation inference: which claim consumed each output
        # action, where each formal parameter anchors inside its actual
        self.out_map: dict[tuple[Ident, Path], tuple[Ident, Path, Optional[Span]]] = {}
        self.align: dict[tuple[Ident, Path, int], tuple[Ident, Path]] = {}
        self.var_origin: dict[Ident, tuple[Ident, Path, int]] = {}
        self._tids = itertools.count()
        self.component = 0

    def err(self, kind: str, span: Optional[Span], msg: str) -> None:
        self.errors.append(CheckError(kind, span, msg))

    # -- claim lookup -------------------------------------------------------

    def _claim(
        self,
        st: _State,
        tid: int,
        subject: Ident,
        cursor: Path,
        u: Ident,
        label: str,
        argc: int,
        span: Optional[Span],
    ) -> Optional[Path]:
        """Pick the input this send consumes: the earliest unclaimed marked
        input with this label along the committed path of u's type (and
        past the cursor when the target is the sender itself)."""
        tree = self.trees[u]
        marked = sorted(p for p in mark_positions(tree) if p[-1] == label)
        if not marked:
            hint = ""
            if any(lbl == label for lbl, _, _ in inputs_of(BType(tree))):
                hint = " (an unmarked matching input exists; mark the one this send consumes)"
            self.err(
                NO_MATCHING_INPUT,
                span,
                f"type of {u} has no marked input ?{label} for this send{hint}",
            )
            return None
        committed = st.committed.setdefault((tid, u), {})
        viable, blocked, behind = [], [], []
        for p in marked:
            # the claimed choice (the position without its branch label) must
            # still lie ahead of the sender's own cursor
            if u == subject and not (len(p) > len(cursor) and p[: len(cursor)] == cursor):
                behind.append(p)
                continue
            if any(committed.get(c, lbl) != lbl for c, lbl in path_commitments(p)):
                blocked.append(p)
                continue
            viable.append(p)
        unclaimed = [p for p in viable if (u, p) not in st.claims]
        if not unclaimed:
            if viable:
                prior = st.claims[(u, viable[0])]
                at = str(prior.span) if prior.span else "elsewhere"
                self.err(
                    DOUBLE_CLAIM,
                    span,
                    f"input ?{label} of {u} is already consumed by the send at {at}",
                )
            elif blocked:
                self.err(
                    BRANCH_CONFLICT,
                    span,
                    f"the marked input ?{label} of {u} lies on an alternative "
                    f"branch; this body already consumes inputs of another branch",
                )
            else:
                self.err(
                    NO_MATCHING_INPUT,
                    span,
                    f"the only marked input ?{label} of {u} lies at or before the "
                    f"current position; consuming an input from within its own "
                    f"handler would deadlock",
                )
            return None
        if len(unclaimed) > 1:
            self.warnings.append(
                f"send of {label} to {u} could consume several marked inputs; "
                f"taking the earliest"
            )
        p = unclaimed[0]
        chosen = subtree_at(tree, p[:-1])
        assert isinstance(chosen, Choice)
        if len(branch_of(chosen, label).params) != argc:
            self.err(
                OUTPUT_MISMATCH,
                span,
                f"send of {label} to {u} carries {argc} argument(s) but the "
                f"consumed input expects {len(branch_of(chosen, label).params)}",
            )
            return None
        st.claims[(u, p)] = Claim(self.component, span)
        for c, lbl in path_commitments(p):
            committed[c] = lbl
        return p

    # -- expression walk ----------------------------------------------------

    def walk_thread(self, st: _State, subject: Ident, e: Expr) -> EscapeEnv:
        """Check one actor body against its registered type from the start."""
        tid = next(self._tids)
        try:
            return self.walk(st, tid, subject, (), e)
        except _Abort:
            return Leaf({})

    def walk(self, st: _State, tid: int, subject: Ident, cursor: Path, e: Expr) -> EscapeEnv:
        here = subtree_at(self.trees[subject], cursor)
        if isinstance(e, Nil):
            if not isinstance(here, End):
                self.err(
                    END_NOT_REACHED,
                    None,
                    f"body of {subject} ends but its type still requires "
                    f"{print_type(here)}",
                )
                raise _Abort()
            return Leaf({})
        if isinstance(e, Send):
            return self._walk_send(st, tid, subject, cursor, here, e)
        if isinstance(e, React):
            return self._walk_react(st, tid, subject, cursor, here, e)
        if isinstance(e, Spawn):
            return self._walk_spawn(st, tid, subject, cursor, e)
        raise TypeError(type(e).__name__)

    def _walk_send(self, st, tid, subject, cursor, here, e: Send) -> EscapeEnv:
        if not isinstance(here, Out) or here.label != e.label or len(here.params) != len(e.args):
            self.err(
                OUTPUT_MISMATCH,
                e.span,
                f"{subject} sends !{e.label}/{len(e.args)} but its type requires "
                f"{print_type(here)}",
            )
            raise _Abort()
        if e.target not in self.trees:
            self.err(
                NO_MATCHING_INPUT, e.span, f"no type assumption for target {e.target}"
            )
            raise _Abort()
        claimed = self._claim(
            st, tid, subject, cursor, e.target, e.label, len(e.args), e.span
        )
        after = cursor + (types.OUT_STEP,)
        if claimed is not None:
            self.out_map[(subject, cursor)] = (e.target, claimed, e.span)
            target_tree = self.trees[e.target]
            branch = branch_of(subtree_at(target_tree, claimed[:-1]), e.label)
            if branch.params != here.params:
                self.err(
                    OUTPUT_MISMATCH,
                    e.span,
                    f"parameter types of !{e.label} differ from the consumed "
                    f"input's parameter types",
                )
            if self.mode == "refined":
                want = subtree_at(target_tree, claimed)
                if here.annot is None:
                    self.err(
                        REFINED_ANNOT_MISMATCH,
                        e.span,
                        f"output !{e.label} lacks a continuation annotation",
                    )
                elif not eq_mod_marks(here.annot.body, want):
                    self.err(
                        REFINED_ANNOT_MISMATCH,
                        e.span,
                        f"annotation {print_type(here.annot)} does not match the "
                        f"target's continuation {print_type(BType(strip_marks(want)))}",
                    )
            self._check_params(st, subject, after, here, e, claimed)
        return self.walk(st, tid, subject, after, e.cont)

    def _check_params(self, st, subject, after: Path, out: Out, e: Send, claimed: Path) -> None:
        """Each formal parameter type must be a tail of what its actual can
        still do: of the sender's own remainder when the actual is the
        sender, of the consumed input's continuation when it is the target,
        of the assumed type otherwise."""
        anchored: dict[Ident, set[Path]] = {}
        for k, (formal, actual) in enumerate(zip(out.params, e.args)):
            if actual == subject:
                base_tree, base_path = subject, after
            elif actual == e.target:
                base_tree, base_path = e.target, claimed
            elif actual in self.trees:
                base_tree, base_path = actual, ()
            else:
                self.err(
                    PARAM_SUFFIX, e.span, f"no type assumption for argument {actual}"
                )
                continue
            base = subtree_at(self.trees[base_tree], base_path)
            anchors = types.find_anchors(formal.body, base)
            if not anchors:
                where = (
                    "its own remaining actions"
                    if actual == subject
                    else f"the current type of {actual}"
                )
                self.err(
                    PARAM_SUFFIX,
                    e.span,
                    f"declared type {print_type(formal)} of parameter {k + 1} is "
                    f"not a tail of {where}",
                )
                continue
            self.align[(e.target, claimed, k)] = (base_tree, base_path + anchors[0])
            marks = {base_path + anchors[0] + p for p in mark_positions(formal.body)}
            if marks & anchored.get(actual, set()):
                # both views would consume the same input of one actor; the
                # receiving branch then cannot serve both sends
                self.warnings.append(
                    f"message {e.label} passes {actual} twice with views that "
                    f"consume the same input; balance will not cover it"
                )
            anchored.setdefault(actual, set()).update(marks)

    def _walk_react(self, st, tid, subject, cursor, here, e: React) -> EscapeEnv:
        if not isinstance(here, Choice):
            self.err(
                OUTPUT_MISMATCH,
                e.span,
                f"{subject} waits for input but its type requires {print_type(here)}",
            )
            raise _Abort()
        want = [b.label for b in here.branches]
        have = [b.label for b in e.branches]
        if want != have:
            self.err(
                OUTPUT_MISMATCH,
                e.span,
                f"input branches of {subject} are {{{', '.join(have)}}} but its "
                f"type offers {{{', '.join(want)}}}",
            )
            raise _Abort()
        children: list[EscapeEnv] = []
        outcomes: list[tuple[_State, set[ClaimKey], set[ClaimKey], str]] = []
        for tb, rb in zip(here.branches, e.branches):
            if len(tb.params) != len(rb.params):
                self.err(
                    OUTPUT_MISMATCH,
                    rb.span,
                    f"branch {rb.label} binds {len(rb.params)} parameter(s) but "
                    f"its type carries {len(tb.params)}",
                )
                raise _Abort()
            sub = st.fork()
            bpath = cursor + (rb.label,)
            for k, x in enumerate(rb.params):
                self.trees[x] = tb.params[k].body
                self.var_origin[x] = (subject, bpath, k)
            try:
                delta = self.walk(sub, tid, subject, bpath, rb.body)
            except _Abort:
                delta = Leaf({})
            new = {key for key in sub.claims if key not in st.claims}
            # parameters bound here are consumed here or not at all
            for x in rb.params:
                owed = {(x, p) for p in mark_positions(self.trees[x])}
                for _, p in sorted(owed - new):
                    self.err(
                        RESIDUAL_MARK,
                        rb.span,
                        f"branch {rb.label} assumes {x} consumes input ?{p[-1]} "
                        f"but never sends it",
                    )
                for key in owed & new:
                    del sub.claims[key]
                    new.discard(key)
            outer = {key for key in new if key[0] != subject}
            outcomes.append((sub, outer, new - outer, rb.label))
            for k, x in enumerate(rb.params):
                delta = escape_extend(delta, x, tb.params[k])
            children.append(delta)
        # alternative continuations must consume the same outside resources,
        # since the same sends run whichever message arrives
        base_outer = outcomes[0][1]
        for _, outer, _, lbl in outcomes[1:]:
            for u, p in sorted(base_outer ^ outer):
                where = (
                    f"branch {outcomes[0][3]}" if (u, p) in base_outer else f"branch {lbl}"
                )
                self.err(
                    RESIDUAL_MARK,
                    e.span,
                    f"input ?{p[-1]} of {u} is consumed in {where} of {subject} "
                    f"but not in its sibling branches",
                )
        for sub, outer, own, _ in outcomes:
            for key in outer | own:
                st.claims.setdefault(key, sub.claims[key])
            for tk, m in sub.committed.items():
                tgt = st.committed.setdefault(tk, {})
                for c, lbl in m.items():
                    tgt.setdefault(c, lbl)
        return escape_choice(children)

    def _walk_spawn(self, st, tid, subject, cursor, e: Spawn) -> EscapeEnv:
        self.trees[e.name] = e.annot.body
        d1 = self.walk_thread(st, e.name, e.body)
        d2 = self.walk(st, tid, subject, cursor, e.cont)
        self._settle_name(st, e.name, e.annot, e.span)
        return escape_extend(escape_combine(d1, d2), e.name, e.annot)

    def _settle_name(self, st: _State, name: Ident, annot: BType, span) -> None:
        """Every mark written in a definition's type must have been claimed
        within the definition's scope, each by exactly one send."""
        owed = {(name, p) for p in mark_positions(annot.body)}
        consumed = {key for key in st.claims if key[0] == name}
        for _, p in sorted(owed - consumed):
            self.err(
                ANNOTATION_SPLIT,
                span,
                f"type of {name} marks input ?{p[-1]} as consumed but no send "
                f"in its scope consumes it",
            )
        for key in consumed:
            del st.claims[key]

    # -- definition lists ----------------------------------------------------

    def check_defs(self, st: _State, defs: tuple[Def, ...], bump: bool = True) -> EscapeEnv:
        if not defs:
            return Leaf({})
        d, rest = defs[0], defs[1:]
        self.trees[d.name] = d.annot.body
        if bump:
            self.component += 1
        d1 = self.walk_thread(st, d.name, d.body)
        d2 = self.check_defs(st, rest, bump)
        self._settle_name(st, d.name, d.annot, d.span)
        return escape_extend(escape_combine(d1, d2), d.name, d.annot)


# ---------------------------------------------------------------------------
# program checking


def _annotation_mode(p: Program) -> str:
    """"refined" when outputs carry annotations, "basic" when none do."""
    seen = {True: 0, False: 0}

    def scan_seq(s: SType) -> None:
        if isinstance(s, Out):
            seen[s.annot is not None] += 1
            for q in s.params:
                scan_seq(q.body)
            if s.annot is not None:
                scan_seq(s.annot.body)
            scan_seq(s.cont)
        elif isinstance(s, Choice):
            for b in s.branches:
                for q in b.params:
                    scan_seq(q.body)
                scan_seq(b.cont)

    def scan_expr(e: Expr) -> None:
        if isinstance(e, Send):
            scan_expr(e.cont)
        elif isinstance(e, React):
            for b in e.branches:
                scan_expr(b.body)
        elif isinstance(e, Spawn):
            scan_seq(e.annot.body)
            scan_expr(e.body)
            scan_expr(e.cont)

    for d in p.defs:
        scan_seq(d.annot.body)
        scan_expr(d.body)
    if seen[True] and seen[False]:
        return "mixed"
    return "refined" if seen[True] else "basic"


def _result(ck: _Checker, delta: Optional[EscapeEnv], claims=None) -> CheckResult:
    return CheckResult(
        ck.mode,
        ck.errors,
        ck.warnings,
        delta if not ck.errors else None,
        claims or {},
        ck.trees,
    )


def check_program(p: Program, mode: str = "basic") -> CheckResult:
    """Check a closed program: every definition's body against its declared
    type, with every mark consumed exactly once.

    In refined mode, programs without written output annotations go
    through annotation inference first; a cyclic dependency between the
    needed annotations is returned as a RefinedCycle error naming the
    ring of mutually waiting actors.
    """
    assert mode in ("basic", "refined")
    written = _annotation_mode(p)
    if written == "mixed":
        ck = _Checker(mode)
        ck.err(
            REFINED_ANNOT_MISMATCH,
            None,
            "program mixes annotated and bare output actions",
        )
        return _result(ck, None)
    if mode == "refined" and written == "basic":
        return infer_refined_annotations(p)
    if mode == "basic" and written == "refined":
        ck = _Checker(mode)
        ck.err(
            REFINED_ANNOT_MISMATCH,
            None,
            "program carries output annotations; check it in refined mode",
        )
        return _result(ck, None)
    res, _ = _run_program(p, mode)
    return res


def _run_program(p: Program, mode: str) -> tuple[CheckResult, _Checker]:
    ck = _Checker(mode)
    st = _State({}, {})
    delta = ck.check_defs(st, p.defs)
    assert not st.claims, f"claims escaped their scope: {sorted(st.claims)}"
    return _result(ck, delta), ck


def check_expr(
    subject: Ident,
    own: BType,
    env: TypeEnv,
    e: Expr,
    mode: str = "basic",
) -> tuple[list[CheckError], Optional[EscapeEnv], dict[ClaimKey, Claim]]:
    """Check a single body against its type under explicit assumptions.
    Marks in `env` and `own` are not required to be consumed; the caller
    inspects the returned claims."""
    ck = _Checker(mode)
    ck.trees = {u: t.body for u, t in env.items()}
    ck.trees[subject] = own.body
    st = _State({}, {})
    delta = ck.walk_thread(st, subject, e)
    return ck.errors, (delta if not ck.errors else None), st.claims


def after_m_suffix(
    formal: BType,
    actual: Ident,
    sender: Ident,
    sender_residual: SType,
    target: Ident,
    target_cont: SType,
    env: TypeEnv,
) -> bool:
    """The suffix obligation for one message parameter: against the
    sender's remainder, the target's continuation after the input, or the
    assumed type, depending on who the actual is."""
    if actual == sender:
        return suffix_le(formal.body, sender_residual)
    if actual == target:
        return suffix_le(formal.body, target_cont)
    return actual in env and suffix_le(formal.body, env[actual].body)


# ---------------------------------------------------------------------------
# runtime configurations


def check_mailbox(
    g: TypeEnv, a: Ident, mailbox, collect: Optional[list[CheckError]] = None
) -> tuple[bool, list[str]]:
    """Delivered messages that match a pending input must carry arguments
    whose declared parameter types are tails of the arguments' current
    types.  Messages matching nothing are reported as warnings only; the
    typing rules do not exclude them here."""
    warnings: list[str] = []
    ok = True
    pending = inputs_of(g[a])
    for m in mailbox:
        matches = [
            (params, cont)
            for lbl, params, cont in pending
            if lbl == m.label and len(params) == len(m.args)
        ]
        if not matches:
            warnings.append(
                f"message {m.label} in the mailbox of {a} matches no pending input"
            )
            continue
        for params, cont in matches:
            for k, (formal, actual) in enumerate(zip(params, m.args)):
                base = cont if actual == a else (g[actual].body if actual in g else None)
                if base is None or not suffix_le(formal.body, base):
                    ok = False
                    if collect is not None:
                        collect.append(
                            CheckError(
                                MAILBOX_ORPHAN,
                                None,
                                f"argument {actual} of delivered {m.label} no longer "
                                f"supports the input's parameter type "
                                f"{print_type(formal)}",
                            )
                        )
    return ok, warnings


def check_config(g: TypeEnv, f: Config, mode: str = "basic") -> CheckResult:
    """Check a runtime configuration: every live actor's residual body
    against its residual type in `g`, mailboxes against pending inputs,
    marks in `g` claimed exactly once, and the per-component environment
    split recomposable with the parallel-composition operator."""
    missing = {a.name for a in f.actors} - set(g)
    assert not missing, f"environment does not cover actors {sorted(missing)}"
    ck = _Checker(mode)
    ck.trees = {u: t.body for u, t in g.items()}
    st = _State({}, {})
    delta: EscapeEnv = Leaf({})
    components: list[tuple[set[Ident], set[ClaimKey]]] = []
    for a in sorted(f.actors, key=lambda a: (a.name.name, a.name.uid)):
        ck.component += 1
        before = set(st.claims)
        d = ck.walk_thread(st, a.name, a.body)
        components.append(({a.name}, {k for k in st.claims if k not in before}))
        delta = escape_combine(delta, d)
    if f.residual:
        ck.component += 1
        before = set(st.claims)
        d = ck.check_defs(st, f.residual, bump=False)
        components.append((set(), {k for k in st.claims if k not in before}))
        delta = escape_combine(delta, d)
    for a in f.actors:
        check_mailbox(g, a.name, a.mailbox, collect=ck.errors)
    # linearity across the whole configuration
    for u, t in sorted(g.items(), key=lambda kv: (kv[0].name, kv[0].uid)):
        owed = {(u, p) for p in mark_positions(t.body)}
        consumed = {key for key in st.claims if key[0] == u}
        for _, p in sorted(owed - consumed):
            ck.err(
                RESIDUAL_MARK,
                None,
                f"type of {u} marks input ?{p[-1]} as consumed but no remaining "
                f"send consumes it",
            )
        for _, p in sorted(consumed - owed):
            ck.err(
                RESIDUAL_MARK,
                None,
                f"a send consumes input ?{p[-1]} of {u} that its type no longer "
                f"offers",
            )
    _replay_composition(ck, g, components)
    for u in sorted(g, key=lambda u: (u.name, u.uid)):
        delta = escape_extend(delta, u, g[u])
    return _result(ck, delta, dict(st.claims))


def _replay_composition(
    ck: _Checker, g: TypeEnv, components: list[tuple[set[Ident], set[ClaimKey]]]
) -> None:
    """Rebuild each parallel component's private view (base types plus the
    marks it claims) and fold them with the composition operator; an
    undefined composition means two components fight over one input."""
    if not components:
        return
    base = {u: strip_marks(t.body) for u, t in g.items()}

    def view(claims: set[ClaimKey]) -> TypeEnv:
        env: TypeEnv = {}
        for u, s in base.items():
            marks = {p for (v, p) in claims if v == u}
            env[u] = BType(_set_marks(s, marks))
        return env

    acc_actors, acc_claims = components[0]
    acc = view(acc_claims)
    for actors, claims in components[1:]:
        nxt = view(claims)
        merged, offender = env_compose(acc, acc_actors, nxt, actors)
        if merged is None:
            ck.err(
                DOUBLE_CLAIM,
                None,
                f"parallel components hold incompatible assumptions about "
                f"{offender}: their environments do not compose",
            )
            return
        acc = merged
        acc_actors = acc_actors | actors


def _set_marks(s: SType, marks: set[Path], base: Path = ()) -> SType:
    if isinstance(s, End):
        return s
    if isinstance(s, Out):
        return replace(s, cont=_set_marks(s.cont, marks, base + (types.OUT_STEP,)))
    branches = tuple(
        replace(
            b,
            marked=(base + (b.label,)) in marks,
            cont=_set_marks(b.cont, marks, base + (b.label,)),
        )
        for b in s.branches
    )
    return Choice(any(b.marked for b in branches), branches)


# ---------------------------------------------------------------------------
# refined-mode inference


class _CycleFound(Exception):
    def __init__(self, chain: list[tuple[Ident, Optional[Span]]]):
        self.chain = chain


class _Annotator:
    """Resolve output annotations from the claim graph of a basic run.

    Positions inside variable types are first normalised to positions in
    the type of the actor the variable stands for, chasing the parameter
    alignments recorded by the suffix checks; the `visiting` stack is the
    occurs check that turns cyclic waiting into a report.
    """

    def __init__(self, ck: _Checker):
        self.ck = ck
        self.norm_align: dict[tuple[Ident, Path, int], tuple[Ident, Path]] = {}
        self.memo: dict[tuple[Ident, Path], Optional[BType]] = {}
        self.visiting: list[tuple[Ident, Path]] = []
        self._settle_alignments()

    def _settle_alignments(self) -> None:
        pending = list(self.ck.align.items())
        progress = True
        while pending and progress:
            progress = False
            rest = []
            for (u, p, k), (act, anch) in pending:
                nu = self.normalize(u, p)
                na = self.normalize(act, anch)
                if nu is None or na is None:
                    rest.append(((u, p, k), (act, anch)))
                else:
                    self.norm_align[(nu[0], nu[1], k)] = na
                    progress = True
            pending = rest
        # leftovers hang off inputs nobody ever claims; nothing to resolve

    def normalize(self, u: Ident, p: Path) -> Optional[tuple[Ident, Path]]:
        """Rewrite a position in a variable's type into the aliased actor's
        type; actor positions are already normal."""
        while u.is_var():
            origin = self.ck.var_origin.get(u)
            if origin is None:
                return None
            hop = self.norm_align.get(origin)
            if hop is None:
                return None
            u, base = hop
            p = base + p
        return (u, p)

    def out_annot(self, u: Ident, p: Path) -> Optional[BType]:
        n = self.normalize(u, p)
        if n is None or n not in self.ck.out_map:
            return None
        if n in self.memo:
            return self.memo[n]
        if n in self.visiting:
            start = self.visiting.index(n)
            ring = [(k[0], self.ck.out_map[k][2]) for k in self.visiting[start:]]
            raise _CycleFound(ring)
        self.visiting.append(n)
        try:
            target, claimed, _ = self.ck.out_map[n]
            tn = self.normalize(target, claimed)
            if tn is None:
                annot = None
            else:
                owner, base = tn
                cont = subtree_at(self.ck.trees[owner], base)
                annot = BType(strip_marks(self.annotate(owner, base, cont)))
        finally:
            self.visiting.pop()
        self.memo[n] = annot
        return annot

    def annotate(self, owner: Ident, base: Path, s: SType) -> SType:
        """Copy `s` (a tree shaped like owner's subtree at `base`, marks
        aside) attaching inferred annotations to every output inside."""
        if isinstance(s, End):
            return s
        if isinstance(s, Out):
            annot = self.out_annot(owner, base)
            params = s.params
            info = self.ck.out_map.get(self.normalize(owner, base) or (None, None))
            if info is not None:
                tgt, clm, _ = info
                tn = self.normalize(tgt, clm)
                if tn is not None:
                    params = tuple(
                        BType(self.annotate_param((tn[0], tn[1], k), q.body))
                        for k, q in enumerate(s.params)
                    )
            return Out(
                s.label,
                params,
                self.annotate(owner, base + (types.OUT_STEP,), s.cont),
                annot,
            )
        branches = []
        for b in s.branches:
            bpath = base + (b.label,)
            nb = self.normalize(owner, bpath)
            params = tuple(
                BType(self.annotate_param((nb[0], nb[1], k) if nb else None, q.body))
                for k, q in enumerate(b.params)
            )
            branches.append(
                replace(b, params=params, cont=self.annotate(owner, bpath, b.cont))
            )
        return Choice(s.marked, tuple(branches))

    def annotate_param(self, slot: Optional[tuple[Ident, Path, int]], s: SType) -> SType:
        """Outputs inside a parameter type belong to whichever actor the
        claiming send passes in that slot."""
        hop = self.norm_align.get(slot) if slot else None
        if hop is None:
            return s  # the input is never claimed: no sends to describe
        owner, anchor = hop
        return self.annotate(owner, anchor, s)


def infer_refined_annotations(p: Program):
    """Annotate every output with its target's continuation after the
    consumed input and re-check in refined mode; a cyclic annotation
    dependency is returned as the deadlock report."""
    base, ck = _run_program(p, "basic")
    if not base.ok:
        base.mode = "refined"
        return base
    ann = _Annotator(ck)
    try:
        rewritten = _rewrite_program(p, ann)
    except _CycleFound as cyc:
        seen: list[Ident] = []
        spans: list[Optional[Span]] = []
        for ident, span in cyc.chain:
            if ident not in seen:
                seen.append(ident)
                spans.append(span)
        ck2 = _Checker("refined")
        report = CycleReport(seen, spans)
        ck2.err(
            REFINED_CYCLE,
            spans[0] if spans else None,
            f"no finite continuation annotations exist: the actors {report} "
            f"wait on each other",
        )
        res = _result(ck2, None)
        res.cycle = report
        return res
    res, _ = _run_program(rewritten, "refined")
    res.warnings = list(dict.fromkeys(res.warnings + base.warnings))
    return res


def annotate_program(p: Program) -> Optional[Program]:
    """The inferred-annotation rewrite itself, None when basic checking
    fails or the dependencies are cyclic."""
    base, ck = _run_program(p, "basic")
    if not base.ok:
        return None
    try:
        return _rewrite_program(p, _Annotator(ck))
    except _CycleFound:
        return None


def _rewrite_program(p: Program, ann: _Annotator) -> Program:
    def rewrite_expr(e: Expr) -> Expr:
        if isinstance(e, Send):
            return replace(e, cont=rewrite_expr(e.cont))
        if isinstance(e, React):
            return replace(
                e,
                branches=tuple(replace(b, body=rewrite_expr(b.body)) for b in e.branches),
            )
        if isinstance(e, Spawn):
            return replace(
                e,
                annot=BType(ann.annotate(e.name, (), e.annot.body)),
                body=rewrite_expr(e.body),
                cont=rewrite_expr(e.cont),
            )
        return e

    defs = tuple(
        replace(
            d,
            annot=BType(ann.annotate(d.name, (), d.annot.body)),
            body=rewrite_expr(d.body),
        )
        for d in p.defs
    )
    return Program(defs)
