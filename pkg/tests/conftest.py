from __future__ import annotations

import random
from pathlib import Path

import pytest

from ac import parse_file
from ac.names import KIND_NAME, KIND_VAR, Ident
from ac.types import BType, Choice, End, InBranch, Out, SType

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

POSITIVE = ["pingpongpang", "hatpr", "deadlock", "nondet", "alice-bob-carl", "purchase"]
BALANCED = ["pingpongpang", "deadlock", "alice-bob-carl", "purchase"]


def fixture_path(name: str) -> Path:
    sub = "negative/" if name.startswith("bad_") else ""
    return FIXTURES / f"{sub}{name}.ac"


@pytest.fixture(scope="session")
def programs():
    return {name: parse_file(str(fixture_path(name))) for name in POSITIVE}


def name(n: str, uid: int = 0) -> Ident:
    return Ident(n, uid, KIND_NAME)


def var(n: str, uid: int = 0) -> Ident:
    return Ident(n, uid, KIND_VAR)


# ---------------------------------------------------------------------------
# random behavioural types for the algebra suites


_LABELS = ["m1", "m2", "m3", "k", "go"]


def random_skeleton(rng: random.Random, depth: int = 3, params: bool = True) -> SType:
    """A mark-free type tree of bounded depth."""
    roll = rng.random()
    if depth <= 0 or roll < 0.25:
        return End()
    if roll < 0.6:
        nparams = rng.randint(0, 2 if params else 0)
        ps = tuple(
            BType(random_skeleton(rng, depth - 2, params)) for _ in range(nparams)
        )
        return Out(rng.choice(_LABELS), ps, random_skeleton(rng, depth - 1, params))
    labels = rng.sample(_LABELS, rng.randint(1, 3))
    branches = tuple(
        InBranch(False, lbl, (), random_skeleton(rng, depth - 1, params))
        for lbl in sorted(labels)
    )
    return Choice(False, branches)


def decorate(rng: random.Random, s: SType, rate: float = 0.4, allowed: bool = True) -> SType:
    """Place random marks on a skeleton, respecting the discipline: inside
    a marked choice only the marked branch may keep further marks."""
    if isinstance(s, End):
        return s
    if isinstance(s, Out):
        return Out(s.label, s.params, decorate(rng, s.cont, rate, allowed), s.annot)
    mark_here = allowed and rng.random() < rate
    if mark_here:
        chosen = rng.randrange(len(s.branches))
        branches = tuple(
            InBranch(
                i == chosen,
                b.label,
                b.params,
                decorate(rng, b.cont, rate, allowed=(i == chosen)),
            )
            for i, b in enumerate(s.branches)
        )
        return Choice(True, branches)
    branches = tuple(
        InBranch(False, b.label, b.params, decorate(rng, b.cont, rate, allowed))
        for b in s.branches
    )
    return Choice(False, branches)


def random_suffix(rng: random.Random, s: SType) -> SType:
    """Some tail of `s`, possibly `s` itself."""
    while True:
        if isinstance(s, End) or rng.random() < 0.4:
            return s
        if isinstance(s, Out):
            s = s.cont
        else:
            s = rng.choice(s.branches).cont
