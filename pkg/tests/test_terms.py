from __future__ import annotations

import pytest

from ac import alpha_rename, free_names, parse_program, substitute, well_formed
from ac.names import Ident
from ac.parser import parse_type
from ac.terms import (
    NIL,
    Actor,
    Branch,
    CaptureViolation,
    Config,
    Program,
    React,
    Send,
    actors_of,
    config_measure,
)
from conftest import name, var

END_T = parse_type("[end]")


def test_free_names_nil():
    assert free_names(NIL) == set()


def test_free_names_of_handshake_body():
    # the second actor's body mentions both peers; the bound parameter
    # does not escape
    a, b, y = name("a", 1), name("b", 2), var("y", 3)
    body = Send(a, "ping", (b,), React((Branch("pong", (y,), Send(y, "pang", (), NIL)),)))
    assert free_names(body) == {a, b}


def test_restriction_binds():
    a = name("a", 1)
    f = Config(frozenset({a}), (Actor(a, (), NIL),), ())
    assert free_names(f) == set()
    assert actors_of(f) == set()


def test_actors_of_pure_expression_is_empty():
    assert actors_of(Config(frozenset(), (), ())) == set()


def test_actors_of_parallel_union():
    a, b = name("a", 1), name("b", 2)
    f = Config(frozenset(), (Actor(a, (), NIL), Actor(b, (), NIL)), ())
    assert actors_of(f) == {a, b}


def test_substitute_single_occurrence():
    x, c = var("x", 1), name("c", 2)
    e = Send(x, "pang", (), NIL)
    assert substitute(e, {x: c}) == Send(c, "pang", (), NIL)


def test_substitute_handshake_receive_step():
    # receiving ping(b) activates the branch body with x replaced by b
    x, a, b = var("x", 1), name("a", 2), name("b", 3)
    body = Send(x, "pong", (a,), React((Branch("pang", (), NIL),)))
    got = substitute(body, {x: b})
    assert got == Send(b, "pong", (a,), React((Branch("pang", (), NIL),)))


def test_substitute_identity_on_nil():
    assert substitute(NIL, {var("x", 1): name("c", 2)}) == NIL


def test_substitute_rejects_capture():
    x, c = var("x", 1), name("c", 2)
    e = React((Branch("m", (c,), Send(x, "k", (), NIL)),))
    with pytest.raises(CaptureViolation):
        substitute(e, {x: c})


def test_alpha_rename_splits_reused_names():
    p = parse_program(
        """
        val a : [end] = actor{ val b : [end] = actor{0}; 0 };
        val c : [end] = actor{ val b : [end] = actor{0}; 0 };
        0
        """
    )
    uids = set()

    def collect(e):
        from ac.terms import Spawn

        if isinstance(e, Spawn):
            uids.add(e.name.uid)
            collect(e.body)
            collect(e.cont)

    for d in p.defs:
        collect(d.body)
    assert len(uids) == 2 and 0 not in uids


def test_alpha_rename_idempotent_shape():
    p = parse_program("val a : [*?m.end] = actor{ react{ m => 0 } }; 0")
    again = alpha_rename(p)
    assert well_formed(again).ok
    assert [d.name.name for d in again.defs] == [d.name.name for d in p.defs]


def test_well_formed_duplicate_label():
    with pytest.raises(Exception) as exc:
        parse_program("val a : [end] = actor{ react{ m => 0, m => 0 } }; 0")
    assert "duplicate input label" in str(exc.value)


def test_well_formed_unbound_name():
    with pytest.raises(Exception) as exc:
        parse_program("val a : [!m.end] = actor{ b!m }; 0")
    assert "not in scope" in str(exc.value)


def test_self_resolves_to_enclosing_actor():
    p = parse_program("val b : [!m.*?m.end] = actor{ self!m; react{ m => 0 } }; 0")
    (d,) = p.defs
    assert d.body.target == d.name
    # an unresolved self (only constructible by hand) is flagged
    from ac.names import KIND_SELF, Ident
    from ac.terms import Def

    loose = Send(Ident("self", 0, KIND_SELF), "m", (), NIL)
    bad = Program((Def(name("a", 1), END_T, loose),))
    assert not well_formed(bad).ok


def test_free_names_after_substitution_law():
    x, c, a = var("x", 1), name("c", 2), name("a", 3)
    e = Send(x, "pong", (a,), NIL)
    got = free_names(substitute(e, {x: c}))
    assert got == (free_names(e) - {x}) | {c}


def test_measure_positive_on_programs():
    p = parse_program("val a : [!m.*?m.end] = actor{ a!m; react{ m => 0 } }; 0")
    f = Config(frozenset(), (), p.defs)
    assert config_measure(f) > 0
