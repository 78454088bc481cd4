from __future__ import annotations

from ac import parse_file, parse_program
from ac.checker import (
    ANNOTATION_SPLIT,
    BRANCH_CONFLICT,
    DOUBLE_CLAIM,
    END_NOT_REACHED,
    MAILBOX_ORPHAN,
    NO_MATCHING_INPUT,
    OUTPUT_MISMATCH,
    PARAM_SUFFIX,
    REFINED_ANNOT_MISMATCH,
    REFINED_CYCLE,
    RESIDUAL_MARK,
    after_m_suffix,
    annotate_program,
    check_config,
    check_expr,
    check_mailbox,
    check_program,
)
from ac.parser import parse_type
from ac.printer import print_type
from ac.semantics import explore, initial_config
from ac.terms import Message
from ac.types import Leaf, escape_leaves
from ac.verifier import advance_env
from conftest import fixture_path, name

T_X = "[*?pong([*?pang.end]).!pang.end]"
T_Y = "[*?pang.end]"
T_A = f"[*?ping({T_X}).!pong({T_Y}).?pang.end]"
T_B = f"[!ping({T_X}).?pong({T_Y}).!pang.end]"


def kinds(res):
    return {e.kind for e in res.errors}


def env_of(delta) -> dict[str, str]:
    (leaf,) = escape_leaves(delta)
    return {u.tagged() if u.uid > 90 else str(u): print_type(t) for u, t in leaf.items()}


# ---------------------------------------------------------------------------
# whole programs


def test_check_handshake_exact_delta(programs):
    res = check_program(programs["pingpongpang"], "basic")
    assert res.ok and not res.warnings
    assert env_of(res.escape_env) == {"a": T_A, "b": T_B, "x": T_X, "y": T_Y}


def test_check_hatpr_basic(programs):
    res = check_program(programs["hatpr"], "basic")
    assert res.ok


def test_check_empty_program():
    res = check_program(parse_program("0"))
    assert res.ok and res.escape_env == Leaf({})


def test_check_deadlock_refined_cycle(programs):
    res = check_program(programs["deadlock"], "refined")
    assert not res.ok and kinds(res) == {REFINED_CYCLE}
    assert [str(a) for a in res.cycle.actors] == ["a", "b"]


def test_negative_fixtures_report_their_kind():
    expected = {
        "bad_output_mismatch": ("basic", OUTPUT_MISMATCH),
        "bad_no_matching_input": ("basic", NO_MATCHING_INPUT),
        "bad_double_claim": ("basic", DOUBLE_CLAIM),
        "bad_branch_conflict": ("basic", BRANCH_CONFLICT),
        "bad_param_suffix": ("basic", PARAM_SUFFIX),
        "bad_end_not_reached": ("basic", END_NOT_REACHED),
        "bad_residual_mark": ("basic", RESIDUAL_MARK),
        "bad_annotation_split": ("basic", ANNOTATION_SPLIT),
        "bad_refined_annot_mismatch": ("refined", REFINED_ANNOT_MISMATCH),
    }
    for nm, (mode, kind) in expected.items():
        res = check_program(parse_file(str(fixture_path(nm))), mode)
        assert kind in kinds(res), f"{nm} should report {kind}, got {kinds(res)}"


def test_error_rendering_contract():
    res = check_program(parse_file(str(fixture_path("bad_no_matching_input"))))
    line = str(res.errors[0])
    assert line.startswith("NoMatchingInput at ")
    assert "— rule (send):" in line


def test_orphan_shaped_send_warns_but_checks():
    # sending into an alternative branch is typable; balance rejects later
    p = parse_program(
        """
        val u : [&{?m1.*?k1.end, ?m2.?k2.end}] = actor{
          react{ m1 => react{ k1 => 0 }, m2 => react{ k2 => 0 } }
        };
        val s : [!k1.end] = actor{ u!k1 };
        0
        """
    )
    res = check_program(p)
    assert res.ok


def test_self_consuming_handler_rejected():
    res = check_program(
        parse_program("val a : [*?m.!m.end] = actor{ react{ m => a!m } }; 0")
    )
    assert NO_MATCHING_INPUT in kinds(res)
    assert any("deadlock" in e.message for e in res.errors)


def test_mixed_annotations_rejected():
    p = parse_program(
        """
        val a : [*?m.end] = actor{ react{ m => 0 } };
        val b : [[end]!m.end] = actor{ a!m };
        val c : [end] = actor{ 0 };
        0
        """
    )
    # basic mode refuses annotated programs, refined accepts this one
    assert not check_program(p, "basic").ok
    assert check_program(p, "refined").ok


# ---------------------------------------------------------------------------
# single bodies (check_expr)


def test_check_expr_handshake_second_judgement(programs):
    # b's body against its type, assuming a's view with the marked ping
    b = programs["pingpongpang"].defs[1]
    a_ident = programs["pingpongpang"].defs[0].name
    errors, delta, claims = check_expr(
        b.name, b.annot, {a_ident: parse_type(T_A.replace("?pang.end", "?pang.end"))}, b.body
    )
    assert not errors
    assert env_of(delta) == {"y": T_Y}
    assert {(str(u), p) for (u, p) in claims} == {("a", ("ping",))}


def test_check_expr_nil_against_end():
    a = name("a", 1)
    from ac.terms import NIL

    errors, delta, claims = check_expr(a, parse_type("[end]"), {}, NIL)
    assert not errors and delta == Leaf({}) and not claims


def test_check_expr_nil_against_pending_type():
    a = name("a", 1)
    from ac.terms import NIL

    errors, _, _ = check_expr(a, parse_type("[?m.end]"), {}, NIL)
    assert errors and errors[0].kind == END_NOT_REACHED


# ---------------------------------------------------------------------------
# after_m_suffix


def test_after_m_sender_case():
    formal = parse_type(T_X)
    b = name("b", 1)
    sender_residual = parse_type(f"[?pong({T_Y}).!pang.end]").body
    assert after_m_suffix(formal, b, b, sender_residual, name("a", 2), None, {})


def test_after_m_end_always_fits():
    c = name("c", 3)
    assert after_m_suffix(
        parse_type("[end]"), c, name("b", 1), None, name("a", 2), None,
        {c: parse_type("[?m.end]")},
    )


def test_after_m_too_long_fails():
    c = name("c", 3)
    assert not after_m_suffix(
        parse_type("[?m.?k.end]"), c, name("b", 1), None, name("a", 2), None,
        {c: parse_type("[?k.end]")},
    )


# ---------------------------------------------------------------------------
# mailboxes and configurations


def test_check_mailbox_matching_message():
    a, b = name("a", 1), name("b", 2)
    g = {a: parse_type(T_A), b: parse_type(T_B)}
    ok, warnings = check_mailbox(g, a, (Message("ping", (b,)),))
    assert ok and not warnings


def test_check_mailbox_empty():
    a = name("a", 1)
    ok, warnings = check_mailbox({a: parse_type("[end]")}, a, ())
    assert ok and not warnings


def test_check_mailbox_unmatched_warns():
    a = name("a", 1)
    ok, warnings = check_mailbox({a: parse_type(T_A)}, a, (Message("zap", ()),))
    assert ok and warnings


def test_check_mailbox_stale_argument():
    a, b = name("a", 1), name("b", 2)
    g = {a: parse_type(T_A), b: parse_type("[end]")}  # b already done
    errs = []
    ok, _ = check_mailbox(g, a, (Message("ping", (b,)),), collect=errs)
    assert not ok and errs[0].kind == MAILBOX_ORPHAN


def test_check_config_initial_agrees_with_program(programs):
    for nm in ["pingpongpang", "deadlock", "purchase"]:
        p = programs[nm]
        res = check_config({}, initial_config(p))
        direct = check_program(p)
        assert res.ok == direct.ok
        assert sorted(env_of(res.escape_env).items()) == sorted(
            env_of(direct.escape_env).items()
        )


def test_check_config_after_one_step(programs):
    p = programs["pingpongpang"]
    g0 = {}
    cfg = initial_config(p)
    graph = explore(p)
    # follow one full run, re-checking each state under the advanced env
    key = graph.initial
    seen = 0
    while True:
        outgoing = [e for e in graph.edges if e[0] == key]
        if not outgoing:
            break
        src, lbl, dst = outgoing[0]
        g0, why = advance_env(g0, graph.states[src], lbl)
        assert why is None, why
        res = check_config(g0, graph.states[dst])
        assert res.ok, [str(e) for e in res.errors]
        key = dst
        seen += 1
    assert seen >= 6


def test_check_config_rejects_forged_mark():
    # a mark nobody can consume anymore must not re-check
    p = programs = parse_program(
        """
        val a : [*?m.end] = actor{ react{ m => 0 } };
        val b : [!m.end] = actor{ a!m };
        0
        """
    )
    graph = explore(p)
    g = {}
    key = graph.initial
    for src, lbl, dst in graph.edges:
        if src == key:
            g, _ = advance_env(g, graph.states[src], lbl)
            key = dst
    # at the end both actors are gone; forging a pending mark on a dead
    # actor leaves an unconsumable claim
    a = next(u for u in g if u.name == "a")
    g[a] = parse_type("[*?m.end]")
    res = check_config(g, graph.states[key])
    assert not res.ok


# ---------------------------------------------------------------------------
# refined inference


def test_infer_hatpr_star_annotation(programs):
    res = check_program(programs["hatpr"], "refined")
    assert res.ok
    env = env_of(res.escape_env)
    t_star = "[[end]!pong([?pang.end]).?pang.end]"
    assert env["a"] == "[*?ping([*?pong([?pang.end]).end]).[end]!pong([?pang.end]).?pang.end]"
    assert env["b"] == f"[{t_star}!ping([*?pong([?pang.end]).end]).?pong([?pang.end]).end]"
    assert env["x"] == "[*?pong([?pang.end]).end]"
    assert env["y"] == "[?pang.end]"


def test_annotate_program_round_trips(programs):
    p = annotate_program(programs["pingpongpang"])
    assert p is not None
    res = check_program(p, "refined")
    assert res.ok
    env = env_of(res.escape_env)
    # b's opening send carries a's whole continuation, whose own send
    # carries x's continuation, and so on down to end
    assert env["b"] == (
        "[[[[end]!pang.end]!pong([*?pang.end]).?pang.end]"
        "!ping([*?pong([*?pang.end]).[end]!pang.end])"
        ".?pong([*?pang.end]).[end]!pang.end]"
    )


def test_annotate_program_none_on_cycle(programs):
    assert annotate_program(programs["deadlock"]) is None


def test_no_sends_nothing_to_annotate():
    p = parse_program("val a : [?m.end] = actor{ react{ m => 0 } }; 0")
    q = annotate_program(p)
    assert q is not None and q.defs[0].annot == p.defs[0].annot


FORWARDING = """
val d : [?go.end] = actor{ react{ go => 0 } };
val r2 : [*?fwd([*?go.end]).!go.end] = actor{ react{ fwd(v) => v!go } };
val r1 : [*?intro([?go.end]).!fwd([*?go.end]).end] = actor{ react{ intro(w) => r2!fwd(w) } };
val s : [!intro([?go.end]).end] = actor{ r1!intro(d) };
0
"""


def test_forwarded_name_consumed_downstream():
    # the mark travels with the forwarded position, not the binding one
    p = parse_program(FORWARDING)
    res = check_program(p, "basic")
    assert res.ok
    from ac.types import balanced

    assert balanced(res.escape_env).ok
    refined = check_program(p, "refined")
    assert refined.ok
    env = env_of(refined.escape_env)
    assert env["r1"] == "[*?intro([?go.end]).[[end]!go.end]!fwd([*?go.end]).end]"
    assert env["s"] == "[[[[end]!go.end]!fwd([*?go.end]).end]!intro([?go.end]).end]"


def test_forwarding_mark_at_binding_position_rejected():
    bad = FORWARDING.replace("[*?intro([?go.end])", "[*?intro([*?go.end])").replace(
        "val s : [!intro([?go.end])", "val s : [!intro([*?go.end])"
    )
    res = check_program(parse_program(bad), "basic")
    assert RESIDUAL_MARK in kinds(res)


ALIASED = """
val a : [*?m([*?k.end],[*?k.end]).!k.!k.?k.?k.end] = actor{
  react{ m(x1,x2) => x1!k; x2!k; react{ k => react{ k => 0 } } }
};
val b : [!m([*?k.end],[*?k.end]).end] = actor{ a!m(a, a) };
0
"""


def test_aliased_identical_views_warn_and_unbalance():
    # passing one actor twice with views that consume the same input is
    # typable but never balanced, and the checker points at it
    from ac.types import balanced

    p = parse_program(ALIASED)
    res = check_program(p, "basic")
    assert res.ok
    assert any("twice" in w for w in res.warnings)
    assert not balanced(res.escape_env).ok
    # with the first view covering both pending inputs everything lines up
    good = ALIASED.replace("[*?k.end],[*?k.end]", "[*?k.?k.end],[*?k.end]")
    resg = check_program(parse_program(good), "basic")
    assert resg.ok and not resg.warnings
    assert balanced(resg.escape_env).ok
    from ac.verifier import subject_reduction_harness

    assert subject_reduction_harness(parse_program(good)).ok


def test_refined_acceptance_implies_basic():
    # erasing the annotations from a refined-accepted program leaves a
    # basic-accepted one
    from dataclasses import replace as rep

    from ac.terms import Program, Spawn
    from ac.types import BType, Choice, End, Out

    def erase_seq(s):
        if isinstance(s, End):
            return s
        if isinstance(s, Out):
            return Out(
                s.label, tuple(BType(erase_seq(q.body)) for q in s.params),
                erase_seq(s.cont), None,
            )
        assert isinstance(s, Choice)
        return Choice(
            s.marked,
            tuple(
                rep(b, params=tuple(BType(erase_seq(q.body)) for q in b.params),
                    cont=erase_seq(b.cont))
                for b in s.branches
            ),
        )

    def erase_expr(e):
        from ac.terms import React, Send

        if isinstance(e, Send):
            return rep(e, cont=erase_expr(e.cont))
        if isinstance(e, React):
            return rep(e, branches=tuple(rep(b, body=erase_expr(b.body)) for b in e.branches))
        if isinstance(e, Spawn):
            return rep(e, annot=BType(erase_seq(e.annot.body)),
                       body=erase_expr(e.body), cont=erase_expr(e.cont))
        return e

    for nm in ["pingpongpang", "hatpr", "purchase", "alice-bob-carl"]:
        annotated = annotate_program(parse_file(str(fixture_path(nm))))
        assert annotated is not None
        assert check_program(annotated, "refined").ok
        erased = Program(
            tuple(
                rep(d, annot=BType(erase_seq(d.annot.body)), body=erase_expr(d.body))
                for d in annotated.defs
            )
        )
        assert check_program(erased, "basic").ok
