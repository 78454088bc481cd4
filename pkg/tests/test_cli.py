from __future__ import annotations

import json

from ac.cli import main
from conftest import fixture_path


def run(capsys, *argv) -> tuple[int, str]:
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_check_handshake(capsys):
    code, out = run(capsys, "check", str(fixture_path("pingpongpang")))
    assert code == 0
    assert "a : [*?ping([*?pong([*?pang.end]).!pang.end]).!pong([*?pang.end]).?pang.end]" in out
    assert "balanced: yes (a <- y, b <- x)" in out


def test_check_refined_cycle(capsys):
    code, out = run(capsys, "check", str(fixture_path("deadlock")), "--refined")
    assert code == 22
    assert "RefinedCycle" in out


def test_check_garbage_file(tmp_path, capsys):
    bad = tmp_path / "garbage.txt"
    bad.write_text("this is not a program", encoding="utf-8")
    code, _ = run(capsys, "check", str(bad))
    assert code == 10


def test_check_ill_formed(tmp_path, capsys):
    bad = tmp_path / "dup.ac"
    bad.write_text("val a : [end] = actor{ react{ m => 0, m => 0 } }; 0", encoding="utf-8")
    code, out = run(capsys, "check", str(bad))
    assert code == 11 and "duplicate input label" in out


def test_check_type_error_exit(capsys):
    code, _ = run(capsys, "check", str(fixture_path("bad_no_matching_input")))
    assert code == 20


def test_check_strict_balanced(capsys):
    code, _ = run(capsys, "check", str(fixture_path("hatpr")))
    assert code == 0
    code, _ = run(capsys, "check", str(fixture_path("hatpr")), "--strict-balanced")
    assert code == 21


def test_explore_exit_codes(capsys):
    assert run(capsys, "explore", str(fixture_path("pingpongpang")))[0] == 0
    code, out = run(capsys, "explore", str(fixture_path("hatpr")))
    assert code == 30 and "react{ pang => 0 }" in out
    code, out = run(capsys, "explore", str(fixture_path("nondet")))
    assert code == 30
    assert out.count("stuck: ") >= 2


def test_explore_limit_exit(capsys):
    code, _ = run(capsys, "explore", str(fixture_path("purchase")), "--max-states", "3")
    assert code == 31


def test_run_seeded(capsys):
    code, out1 = run(capsys, "run", str(fixture_path("pingpongpang")), "--seed", "3")
    assert code == 0 and "success" in out1
    _, out2 = run(capsys, "run", str(fixture_path("pingpongpang")), "--seed", "3")
    assert out1 == out2
    code, out = run(capsys, "run", str(fixture_path("deadlock")), "--seed", "1")
    assert code == 30 and "stuck" in out


def test_verify_exit_codes(capsys):
    assert run(capsys, "verify", str(fixture_path("pingpongpang")))[0] == 0
    assert run(capsys, "verify", str(fixture_path("hatpr")))[0] == 21
    assert run(capsys, "verify", str(fixture_path("deadlock")))[0] == 30
    assert run(capsys, "verify", str(fixture_path("deadlock")), "--refined")[0] == 22
    assert run(capsys, "verify", str(fixture_path("bad_double_claim")))[0] == 20


def test_verify_harness_flag(capsys):
    code, out = run(capsys, "verify", str(fixture_path("pingpongpang")), "--harness")
    assert code == 0
    assert "subject-reduction" in out and "no violations" in out


def test_json_schema_keys(capsys):
    code, out = run(capsys, "verify", str(fixture_path("hatpr")), "--json", "--quiet")
    assert code == 21
    payload = json.loads(out)
    assert set(payload) == {
        "wellFormed", "typed", "mode", "escapeEnv", "balanced", "balanceWitness",
        "exploration", "refinedCycle", "consistent", "errors",
    }
    assert payload["typed"] is True and payload["balanced"] is False
    assert payload["exploration"]["states"] == 8
    assert payload["exploration"]["terminals"]["success"] == 0
    assert len(payload["exploration"]["terminals"]["stuck"]) == 1


def test_quiet_suppresses_text(capsys):
    code, out = run(capsys, "check", str(fixture_path("pingpongpang")), "--quiet")
    assert code == 0 and out == ""


def test_json_on_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.ac"
    bad.write_text("val a : [end = actor{0}; 0", encoding="utf-8")
    code, out = run(capsys, "check", str(bad), "--json", "--quiet")
    assert code == 10
    payload = json.loads(out)
    assert payload["wellFormed"] is False and payload["errors"]


def test_dot_and_report_outputs(tmp_path, capsys):
    dot = tmp_path / "g.dot"
    rep = tmp_path / "report"
    code, _ = run(
        capsys, "verify", str(fixture_path("deadlock")),
        "--dot", str(dot), "--report", str(rep),
    )
    assert code == 30
    assert dot.read_text().startswith("digraph")
    assert (rep / "states.csv").exists()
    assert (rep / "edges.csv").exists()
    assert (rep / "graph.png").stat().st_size > 1000
    assert json.loads((rep / "verdict.json").read_text())["consistent"] is True
    with open(rep / "states.csv", encoding="utf-8") as fh:
        header = fh.readline().strip()
    assert header == "id,initial,terminal,config"


def test_grammar_and_version(capsys):
    assert run(capsys, "--grammar")[0] == 0
    assert "Program ::=" in capsys.readouterr().out or True
    code, out = run(capsys, "--grammar")
    assert "Program" in out
