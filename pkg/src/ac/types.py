"""Behavioural types for actors and the algebra on them.

A type `[S]` lists the input/output actions an actor performs.  Input
branches may carry a *mark*: the marked input is the one consumed by
exactly one matching send somewhere in the system, so marks behave like
linear resources.  The operations below (merge, suffix, residual merge,
balance) implement that resource discipline.

Positions inside a type are paths: a tuple of steps, where the step "!"
moves past an output action and any other step is a branch label moving
into that branch of a choice.  A mark position is the path of the marked
branch (choice path plus branch label).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

from .names import Ident

Path = tuple[str, ...]
OUT_STEP = "!"


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Out:
    label: str
    params: tuple["BType", ...]
    cont: "SType"
    annot: Optional["BType"] = None  # target continuation, deadlock-excluding mode


@dataclass(frozen=True)
class InBranch:
    marked: bool
    label: str
    params: tuple["BType", ...]
    cont: "SType"


@dataclass(frozen=True)
class Choice:
    marked: bool
    branches: tuple[InBranch, ...]  # sorted by label, labels distinct


SType = Union[End, Out, Choice]


@dataclass(frozen=True)
class BType:
    body: SType

    def __str__(self) -> str:
        from .printer import print_type

        return print_type(self)


END = End()


def make_choice(branches: list[InBranch]) -> Choice:
    bs = tuple(sorted(branches, key=lambda b: b.label))
    return Choice(any(b.marked for b in bs), bs)


class MarkingError(ValueError):
    """A type violates the marking discipline (raised with a reason)."""


def validate_marking(s: SType) -> None:
    """Enforce the marking well-formedness rules on a whole type tree.

    A marked choice has exactly one marked branch and its unmarked
    branches carry no further marks; branch labels are distinct.  Marks
    inside parameter types are independent and validated recursively.
    """
    if isinstance(s, End):
        return
    if isinstance(s, Out):
        for p in s.params:
            validate_marking(p.body)
        if s.annot is not None:
            validate_marking(s.annot.body)
        validate_marking(s.cont)
        return
    labels = [b.label for b in s.branches]
    if len(set(labels)) != len(labels):
        raise MarkingError("duplicate input labels in one choice")
    marked = [b for b in s.branches if b.marked]
    if s.marked and len(marked) != 1:
        raise MarkingError("a marked choice needs exactly one marked branch")
    if not s.marked and marked:
        raise MarkingError("marked branch inside an unmarked choice")
    if s.marked:
        for b in s.branches:
            if not b.marked and not no_mark(b.cont):
                raise MarkingError(
                    f"branch ?{b.label} of a marked choice continues with marks"
                )
    for b in s.branches:
        for p in b.params:
            validate_marking(p.body)
        validate_marking(b.cont)


# ---------------------------------------------------------------------------
# basic observations


def no_mark(s: SType) -> bool:
    """True iff `s` carries no mark at its own action-sequence level.

    Marks inside parameter types belong to the future receiver of that
    parameter, not to `s`, so they do not count.
    """
    if isinstance(s, End):
        return True
    if isinstance(s, Out):
        return no_mark(s.cont)
    return not s.marked and all(no_mark(b.cont) for b in s.branches)


def strip_marks(s: SType) -> SType:
    """Clear every sequence-level mark; parameter types are untouched."""
    if isinstance(s, End):
        return s
    if isinstance(s, Out):
        return replace(s, cont=strip_marks(s.cont))
    return Choice(
        False,
        tuple(replace(b, marked=False, cont=strip_marks(b.cont)) for b in s.branches),
    )


def _annots_equal(a: Optional[BType], b: Optional[BType]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return eq_mod_marks(a.body, b.body)


def eq_mod_marks(s: SType, t: SType) -> bool:
    """Structural equality ignoring sequence-level marks.

    Parameter types compare exactly (their marks are part of the type);
    output annotations compare mod marks as well.
    """
    if isinstance(s, End) and isinstance(t, End):
        return True
    if isinstance(s, Out) and isinstance(t, Out):
        return (
            s.label == t.label
            and s.params == t.params
            and _annots_equal(s.annot, t.annot)
            and eq_mod_marks(s.cont, t.cont)
        )
    if isinstance(s, Choice) and isinstance(t, Choice):
        if len(s.branches) != len(t.branches):
            return False
        return all(
            bs.label == bt.label
            and bs.params == bt.params
            and eq_mod_marks(bs.cont, bt.cont)
            for bs, bt in zip(s.branches, t.branches)
        )
    return False


def subtree_at(s: SType, path: Path) -> SType:
    for step in path:
        if step == OUT_STEP:
            assert isinstance(s, Out), f"path expects an output at {path}"
            s = s.cont
        else:
            assert isinstance(s, Choice), f"path expects a choice at {path}"
            s = branch_of(s, step).cont
    return s


def branch_of(c: Choice, label: str) -> InBranch:
    for b in c.branches:
        if b.label == label:
            return b
    raise KeyError(label)


def mark_positions(s: SType, base: Path = ()) -> set[Path]:
    """Paths of all marked branches at the sequence level of `s`."""
    acc: set[Path] = set()
    if isinstance(s, Out):
        acc |= mark_positions(s.cont, base + (OUT_STEP,))
    elif isinstance(s, Choice):
        for b in s.branches:
            if b.marked:
                acc.add(base + (b.label,))
            acc |= mark_positions(b.cont, base + (b.label,))
    return acc


def input_positions(s: SType, base: Path = ()) -> set[Path]:
    """Paths of every input branch reachable in `s` (all branches, all depths)."""
    acc: set[Path] = set()
    if isinstance(s, Out):
        acc |= input_positions(s.cont, base + (OUT_STEP,))
    elif isinstance(s, Choice):
        for b in s.branches:
            acc.add(base + (b.label,))
            acc |= input_positions(b.cont, base + (b.label,))
    return acc


def inputs_of(t: BType) -> list[tuple[str, tuple[BType, ...], SType]]:
    """The top-level inputs of a type: every branch of every choice that is
    reachable by skipping outputs and descending into branch continuations."""
    out: list[tuple[str, tuple[BType, ...], SType]] = []

    def go(s: SType) -> None:
        if isinstance(s, Out):
            go(s.cont)
        elif isinstance(s, Choice):
            for b in s.branches:
                out.append((b.label, b.params, b.cont))
                go(b.cont)

    go(t.body)
    return out


def fully_marked(t: BType) -> set[Path]:
    """The mark positions a fully consumed type would carry: one per input.

    Returned as a position set because a single well-formed type cannot
    mark two branches of the same choice.
    """
    return input_positions(t.body)


def path_commitments(path: Path) -> list[tuple[Path, str]]:
    """The (choice position, branch taken) pairs along `path`.  A non-"!"
    step is by construction a branch label of a choice."""
    return [(path[:i], step) for i, step in enumerate(path) if step != OUT_STEP]


# ---------------------------------------------------------------------------
# suffix relation


def suffix_le(s: SType, t: SType) -> bool:
    """True iff `s` is a tail of `t`, marks ignored: either the whole of
    `t`, or a suffix of an output continuation, or of some branch."""
    if isinstance(s, End):
        return True
    if eq_mod_marks(s, t):
        return True
    if isinstance(t, Out):
        return suffix_le(s, t.cont)
    if isinstance(t, Choice):
        return any(suffix_le(s, b.cont) for b in t.branches)
    return False


def suffix_le_t(a: BType, b: BType) -> bool:
    return suffix_le(a.body, b.body)


def find_anchors(s: SType, t: SType, base: Path = ()) -> list[Path]:
    """All positions of `t` where the suffix `s` matches (mod marks)."""
    acc: list[Path] = []
    if eq_mod_marks(s, t):
        acc.append(base)
    if isinstance(t, Out):
        acc += find_anchors(s, t.cont, base + (OUT_STEP,))
    elif isinstance(t, Choice):
        for b in t.branches:
            acc += find_anchors(s, b.cont, base + (b.label,))
    return acc


# ---------------------------------------------------------------------------
# merging


def merge_mark(s: SType, t: SType) -> Optional[SType]:
    """Merge two equal-shaped types with disjoint marks; None when the two
    sides compete for the same input choice."""
    if isinstance(s, End) and isinstance(t, End):
        return END
    if isinstance(s, Out) and isinstance(t, Out):
        if s.label != t.label or s.params != t.params:
            return None
        if not _annots_equal(s.annot, t.annot):
            return None
        cont = merge_mark(s.cont, t.cont)
        return None if cont is None else replace(s, cont=cont)
    if isinstance(s, Choice) and isinstance(t, Choice):
        if [b.label for b in s.branches] != [b.label for b in t.branches]:
            return None
        if any(bs.params != bt.params for bs, bt in zip(s.branches, t.branches)):
            return None
        if s.marked and t.marked:
            return None  # both sides consume this choice
        if not s.marked and not t.marked:
            branches = []
            for bs, bt in zip(s.branches, t.branches):
                cont = merge_mark(bs.cont, bt.cont)
                if cont is None:
                    return None
                branches.append(replace(bs, cont=cont))
            return Choice(False, tuple(branches))
        marked, plain = (s, t) if s.marked else (t, s)
        branches = []
        for bm, bp in zip(marked.branches, plain.branches):
            if bm.marked:
                cont = merge_mark(bp.cont, bm.cont)
                if cont is None:
                    return None
                branches.append(replace(bm, cont=cont))
            else:
                # the marked side promised this branch stays clean, so the
                # other side may not smuggle marks into it either
                if bp.cont != bm.cont or not no_mark(bp.cont):
                    return None
                branches.append(bm)
        return Choice(True, tuple(branches))
    return None


def merge_mark_t(a: BType, b: BType) -> Optional[BType]:
    body = merge_mark(a.body, b.body)
    return None if body is None else BType(body)


def subset_plus(small: SType, big: SType) -> Optional[SType]:
    """Merge a residual type into a longer view of the same actor.

    Equal shapes merge like `merge_mark`; a proper suffix descends through
    outputs and through exactly one branch of an unmarked choice.  A
    proper suffix meeting a marked choice is undefined: the mark targets
    an input handler the actor has already passed.
    """
    if eq_mod_marks(small, big):
        return merge_mark(small, big)
    if isinstance(big, Out):
        if suffix_le(small, big.cont):
            cont = subset_plus(small, big.cont)
            return None if cont is None else replace(big, cont=cont)
        return None
    if isinstance(big, Choice) and not big.marked:
        for b in big.branches:
            if suffix_le(small, b.cont):
                cont = subset_plus(small, b.cont)
                if cont is not None:
                    branches = tuple(
                        replace(x, cont=cont) if x.label == b.label else x
                        for x in big.branches
                    )
                    return Choice(False, branches)
        return None
    return None


def suffix_merge(small: SType, big: SType) -> Optional[SType]:
    """`subset_plus` plus descent through the marked branch of a marked
    choice.  Safe only within one actor's own assumptions (substitution at
    a receive), never across parallel threads."""
    if eq_mod_marks(small, big):
        return merge_mark(small, big)
    if isinstance(big, Out):
        if suffix_le(small, big.cont):
            cont = suffix_merge(small, big.cont)
            return None if cont is None else replace(big, cont=cont)
        return None
    if isinstance(big, Choice):
        if big.marked:
            (bm,) = [b for b in big.branches if b.marked]
            if suffix_le(small, bm.cont):
                cont = suffix_merge(small, bm.cont)
                if cont is not None:
                    branches = tuple(
                        replace(x, cont=cont) if x.label == bm.label else x
                        for x in big.branches
                    )
                    return Choice(True, branches)
            return None
        for b in big.branches:
            if suffix_le(small, b.cont):
                cont = suffix_merge(small, b.cont)
                if cont is not None:
                    branches = tuple(
                        replace(x, cont=cont) if x.label == b.label else x
                        for x in big.branches
                    )
                    return Choice(False, branches)
        return None
    return None


# ---------------------------------------------------------------------------
# type environments


TypeEnv = dict[Ident, BType]


def env_merge(g1: TypeEnv, g2: TypeEnv) -> tuple[Optional[TypeEnv], Optional[Ident]]:
    """Pointwise merge of two same-domain environments; on failure returns
    (None, offending identifier)."""
    if set(g1) != set(g2):
        missing = (set(g1) ^ set(g2)).pop()
        return None, missing
    out: TypeEnv = {}
    for u, t1 in g1.items():
        merged = merge_mark_t(t1, g2[u])
        if merged is None:
            return None, u
        out[u] = merged
    return out, None


def env_compose(
    g1: TypeEnv,
    actors1: set[Ident],
    g2: TypeEnv,
    actors2: set[Ident],
) -> tuple[Optional[TypeEnv], Optional[Ident]]:
    """Compose the environments of two parallel configurations.

    An actor's own side holds its (possibly shorter) residual view, so it
    merges as a residual into the other side's view; identifiers active on
    neither side merge plainly.
    """
    if set(g1) != set(g2):
        missing = (set(g1) ^ set(g2)).pop()
        return None, missing
    assert not (actors1 & actors2), "parallel components share an active actor"
    out: TypeEnv = {}
    for u, t1 in g1.items():
        t2 = g2[u]
        if u in actors1:
            body = subset_plus(t1.body, t2.body)
        elif u in actors2:
            body = subset_plus(t2.body, t1.body)
        else:
            body = merge_mark(t2.body, t1.body)
        if body is None:
            return None, u
        out[u] = BType(body)
    return out, None


# ---------------------------------------------------------------------------
# escape environments


@dataclass
class Leaf:
    env: TypeEnv

    def __str__(self) -> str:
        from .printer import print_escape

        return print_escape(self)


@dataclass
class ChoiceNode:
    children: list["EscapeEnv"]

    def __str__(self) -> str:
        from .printer import print_escape

        return print_escape(self)


EscapeEnv = Union[Leaf, ChoiceNode]


def escape_domain(d: EscapeEnv) -> set[Ident]:
    if isinstance(d, Leaf):
        return set(d.env)
    return set().union(*(escape_domain(c) for c in d.children)) if d.children else set()


def escape_extend(d: EscapeEnv, u: Ident, t: BType) -> EscapeEnv:
    """Record `u:t` in every alternative of the escape environment."""
    if isinstance(d, Leaf):
        assert u not in d.env, f"escape environment already binds {u.tagged()}"
        env = dict(d.env)
        env[u] = t
        return Leaf(env)
    return ChoiceNode([escape_extend(c, u, t) for c in d.children])


def escape_combine(d1: EscapeEnv, d2: EscapeEnv) -> EscapeEnv:
    """Disjoint union, distributing alternatives on both sides."""
    if isinstance(d1, ChoiceNode):
        return ChoiceNode([escape_combine(c, d2) for c in d1.children])
    if isinstance(d2, ChoiceNode):
        return ChoiceNode([escape_combine(d1, c) for c in d2.children])
    overlap = set(d1.env) & set(d2.env)
    assert not overlap, f"escape environments overlap on {overlap}"
    env = dict(d1.env)
    env.update(d2.env)
    return Leaf(env)


def escape_choice(children: list[EscapeEnv]) -> EscapeEnv:
    return children[0] if len(children) == 1 else ChoiceNode(children)


def escape_leaves(d: EscapeEnv) -> list[TypeEnv]:
    if isinstance(d, Leaf):
        return [d.env]
    out: list[TypeEnv] = []
    for c in d.children:
        out += escape_leaves(c)
    return out


def escape_consumed(new: EscapeEnv, old: EscapeEnv) -> bool:
    """Environment-consumption order: every alternative of `new` matches
    some alternative of `old` entrywise by the suffix relation, and
    distinct alternatives match distinct ones."""
    new_leaves = escape_leaves(new)
    old_leaves = escape_leaves(old)

    def fits(n: TypeEnv, o: TypeEnv) -> bool:
        return all(u in o and suffix_le(t.body, o[u].body) for u, t in n.items())

    def match(i: int, used: set[int]) -> bool:
        if i == len(new_leaves):
            return True
        for j, o in enumerate(old_leaves):
            if j not in used and fits(new_leaves[i], o):
                if match(i + 1, used | {j}):
                    return True
        return False

    return match(0, set())


# ---------------------------------------------------------------------------
# balance


def _marks_coherent(marks: set[Path]) -> bool:
    # at most one marked branch per choice, and once a choice is marked all
    # deeper marks must sit inside its marked branch
    chosen: dict[Path, str] = {}
    for p in marks:
        c, lbl = p[:-1], p[-1]
        if chosen.get(c, lbl) != lbl:
            return False
        chosen[c] = lbl
    for p in marks:
        for c, lbl in chosen.items():
            if len(p) > len(c) + 1 and p[: len(c)] == c and p[len(c)] != lbl:
                return False
    return True


@dataclass
class BalanceReport:
    ok: bool
    witness: dict[Ident, list[Ident]]
    failing: Optional[Ident] = None
    uncovered: list[str] = field(default_factory=list)  # inputs left unmarked

    def __bool__(self) -> bool:
        return self.ok


def _covers(
    actor_ty: BType, candidates: list[tuple[Ident, BType]]
) -> Iterator[tuple[list[Ident], set[Path]]]:
    """Enumerate variable subsets whose anchored marks, together with the
    actor's own marks, coherently mark every input of the actor's type."""
    target = input_positions(actor_ty.body)
    base = mark_positions(actor_ty.body)
    if not _marks_coherent(base):
        return
    usable = [
        (u, t) for u, t in candidates if mark_positions(t.body) and suffix_le_t(t, actor_ty)
    ]

    def search(i: int, marks: set[Path], used: list[Ident]) -> Iterator[tuple[list[Ident], set[Path]]]:
        if marks == target:
            yield list(used), set(marks)
            # a larger cover could only double-mark; stop this line
            return
        if i == len(usable):
            return
        u, t = usable[i]
        for anchor in find_anchors(t.body, actor_ty.body):
            contributed = {anchor + p for p in mark_positions(t.body)}
            if contributed & marks:
                continue
            merged = marks | contributed
            if not (merged <= target) or not _marks_coherent(merged):
                continue
            used.append(u)
            yield from search(i + 1, merged, used)
            used.pop()
        yield from search(i + 1, marks, used)

    yield from search(0, set(base), [])


def balanced_env(env: TypeEnv) -> BalanceReport:
    names = sorted((u for u in env if u.is_name()), key=lambda u: (u.name, u.uid))
    variables = [(u, env[u]) for u in env if u.is_var()]
    memo: dict[tuple, Optional[dict]] = {}

    def solve(remaining_names: tuple[Ident, ...], avail: tuple[Ident, ...]):
        key = (remaining_names, avail)
        if key in memo:
            return memo[key]
        if not remaining_names:
            leftover_marked = [u for u in avail if not no_mark(env[u].body)]
            memo[key] = {} if not leftover_marked else None
            return memo[key]
        a = remaining_names[0]
        cands = [(u, env[u]) for u in avail]
        for used, _marks in _covers(env[a], cands):
            rest = tuple(u for u in avail if u not in used)
            sub = solve(remaining_names[1:], rest)
            if sub is not None:
                out = dict(sub)
                out[a] = used
                memo[key] = out
                return out
        memo[key] = None
        return None

    witness = solve(tuple(names), tuple(u for u, _ in variables))
    if witness is not None:
        return BalanceReport(True, witness, None, [])

    # diagnosis: first name whose inputs cannot all be marked even with
    # every variable's contribution thrown in
    for a in names:
        target = input_positions(env[a].body)
        reachable = set(mark_positions(env[a].body))
        for u, t in variables:
            if suffix_le_t(t, env[a]):
                for anchor in find_anchors(t.body, env[a].body):
                    reachable |= {anchor + p for p in mark_positions(t.body)}
        missing = target - reachable
        if missing:
            labels = sorted(f"?{p[-1]}" for p in missing)
            return BalanceReport(False, {}, a, labels)
    # otherwise the failure is structural (competing covers / leftover marks)
    fallback = names[0] if names else None
    return BalanceReport(False, {}, fallback, [])


def balanced(d: EscapeEnv) -> BalanceReport:
    """Every actor's inputs are fully marked, possibly through variables
    aliased to it; alternatives are checked independently."""
    if isinstance(d, Leaf):
        return balanced_env(d.env)
    witness: dict[Ident, list[Ident]] = {}
    for c in d.children:
        r = balanced(c)
        if not r.ok:
            return r
        witness.update(r.witness)
    return BalanceReport(True, witness, None, [])
