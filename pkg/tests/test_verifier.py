from __future__ import annotations

from ac import parse_program
from ac.generate import generate_accepted, plan_to_source, random_plan
from ac.semantics import explore
from ac.verifier import (
    advance_env,
    instrument,
    mailbox_lemma_harness,
    subject_reduction_harness,
    verify_safety,
)
from conftest import BALANCED, POSITIVE


def test_verdict_handshake(programs):
    v = verify_safety(programs["pingpongpang"])
    assert v.typed and v.balanced_ok and v.all_success and v.consistent


def test_verdict_hatpr(programs):
    v = verify_safety(programs["hatpr"])
    assert v.typed and not v.balanced_ok and not v.all_success and v.consistent
    assert str(v.balance.failing) == "a" and v.balance.uncovered == ["?pang"]


def test_verdict_deadlock_basic_and_refined(programs):
    basic = verify_safety(programs["deadlock"], "basic")
    assert basic.typed and basic.balanced_ok and not basic.all_success
    assert basic.consistent and any("basic mode" in n for n in basic.notes)
    refined = verify_safety(programs["deadlock"], "refined")
    assert not refined.typed and refined.refined_cycle is not None
    assert refined.consistent


def test_subject_reduction_on_all_fixtures(programs):
    for nm in POSITIVE:
        rep = subject_reduction_harness(programs[nm])
        assert rep.skipped is None
        assert rep.ok, (nm, rep.violations[:5])
        assert rep.states > 0 and rep.edges == rep.edges


def test_mailbox_lemma_on_balanced_fixtures(programs):
    for nm in BALANCED:
        rep = mailbox_lemma_harness(programs[nm])
        assert rep.skipped is None and rep.ok, (nm, rep.violations[:5])


def test_mailbox_lemma_skips_unbalanced(programs):
    rep = mailbox_lemma_harness(programs["hatpr"])
    assert rep.skipped is not None
    forced = mailbox_lemma_harness(programs["hatpr"], force=True)
    assert forced.skipped is None and forced.ok


def test_environments_agree_across_paths(programs):
    # confluence of the instrumentation: any two routes into a state carry
    # the same advanced environment (asserted inside instrument)
    for nm in ["pingpongpang", "nondet", "purchase"]:
        _, env_of, violations = instrument(programs[nm])
        assert not violations
        assert env_of  # every reachable state got an environment


def test_advance_env_rejects_unknown_send(programs):
    p = parse_program(
        "val a : [*?m.end] = actor{ react{ m => 0 } }; val b : [!m.end] = actor{ a!m }; 0"
    )
    graph, env_map, _ = instrument(p)
    send_edge = next(e for e in graph.edges if e[1].kind == "send")
    g = dict(env_map[send_edge[0]])
    # strip the pending mark: the send can no longer be accounted for
    from ac.parser import parse_type

    a = next(u for u in g if u.name == "a")
    g[a] = parse_type("[?m.end]")
    g2, why = advance_env(g, graph.states[send_edge[0]], send_edge[1])
    assert g2 is None and "no pending mark" in why


def test_generated_programs_safe_small():
    progs = generate_accepted(seed=11, count=60)
    for p in progs:
        g = explore(p)
        assert g.all_success


def test_generator_is_deterministic():
    a = [str(p) for p in generate_accepted(seed=5, count=10)]
    b = [str(p) for p in generate_accepted(seed=5, count=10)]
    assert a == b


def test_plan_sources_parse():
    import random

    rng = random.Random(0)
    for _ in range(50):
        parse_program(plan_to_source(random_plan(rng)))


def test_cycle_rejections_are_real_deadlocks():
    # plans the refined checker rejects for cyclic waiting, while still
    # typed and balanced in basic mode, really can get stuck
    import random

    from ac.checker import REFINED_CYCLE, check_program
    from ac.types import balanced

    rng = random.Random(5)
    confirmed = 0
    for _ in range(1500):
        if confirmed >= 10:
            break
        p = parse_program(plan_to_source(random_plan(rng)))
        res = check_program(p, "refined")
        if res.ok or not any(e.kind == REFINED_CYCLE for e in res.errors):
            continue
        basic = check_program(p, "basic")
        if not basic.ok or not balanced(basic.escape_env).ok:
            continue
        assert not explore(p).all_success
        confirmed += 1
    assert confirmed >= 10
