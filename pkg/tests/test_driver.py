import shutil

import pytest

from conftest import CORPUS
from goldens import CHOOSE, LOOP_REBORROW, REBORROW, same
from borrowlab.cli import BAD_INPUT, FAILED, OK, STUCK, main
from borrowlab.driver import (
    CorpusEntry, EmptyCorpus, Observation, directives, run_concrete, run_corpus, run_differential, run_entry,
)
from borrowlab.llbc_state import MutLoan, make_state
from borrowlab.pretty import format_state, parse_state
from borrowlab.subsume import state_iso
from borrowlab.syntax import load_program

SPIN = "fn main() { loop { continue 0; } }"

STUCK_PROGRAM = """
fn main() {
    let x: u32;
    let y: u32;
    x = 1;
    y = move x;
    y = copy x;
}
"""


# ---------------------------------------------------------------- run_concrete

@pytest.mark.parametrize("sem", ["llbc", "hlpl", "pl"])
def test_reborrow_observation(sem):
    prog = load_program("//! observe: x\n" + REBORROW)
    assert str(run_concrete(prog, sem, 10).observation) == "unit (0)"


@pytest.mark.parametrize("sem", ["llbc", "hlpl", "pl"])
@pytest.mark.parametrize("fuel", [1, 4, 64])
def test_spin_diverges(sem, fuel):
    assert run_concrete(load_program(SPIN), sem, fuel).observation == Observation("diverge")


def test_stuck_reports_line():
    r = run_concrete(load_program(STUCK_PROGRAM), "llbc", 16)
    assert r.observation.tag == "stuck" and r.line == 7 and r.reason


def test_observation_rendering():
    assert str(Observation("return", ((1,), (True, 0)))) == "return (1) (true 0)"
    assert str(Observation("diverge")) == "diverge"


def test_directives():
    d = directives("//! expect: reject\n//! observe: x, y\nfn main() { }")
    assert d == {"expect": "reject", "observe": "x, y"}


# ---------------------------------------------------------------- differential

def test_differential_agrees_on_reborrow():
    rep = run_differential(load_program(REBORROW), (4, 16, 64))
    assert rep.ok and len(rep.rows) == 3
    assert "MISMATCH" not in rep.render()


def test_differential_divergence_aligned():
    rep = run_differential(load_program(LOOP_REBORROW.replace("fn g()", "fn main()")), (4, 16))
    assert rep.ok
    for _, res in rep.rows:
        assert {r.observation.tag for r in res.values()} == {"diverge"}


def test_differential_skips_rejected_programs():
    rep = run_differential(load_program(STUCK_PROGRAM))
    assert rep.skipped and "main" in rep.skipped


def test_differential_flags_stuck_runs():
    rep = run_differential(load_program(STUCK_PROGRAM), (8,), require_check=False)
    # PL moves are copies, so only the two borrow-aware semantics get stuck here
    assert not rep.ok and "llbc=stuck" in rep.render() and "MISMATCH" in rep.render()


# ---------------------------------------------------------------- corpus

def test_corpus_passes_quickly():
    s = run_corpus(CORPUS)
    assert s.failed == 0, s.render()
    assert len(s.results) >= 20
    assert s.wall < 5.0 and s.check_wall < 1.0


def test_failing_golden_shows_diff(tmp_path):
    shutil.copy(CORPUS / "reborrow_mut.llbc", tmp_path)
    (tmp_path / "reborrow_mut.llbc.llbc.golden").write_text("ret -> ()\nx -> 1\npx -> bot\n_ -> bot\n")
    s = run_corpus(tmp_path)
    assert s.failed == 1
    text = s.render()
    assert "-x -> 1" in text and "+x -> 0" in text
    assert main(["corpus", str(tmp_path)]) == FAILED


def test_wrong_expectation_fails(tmp_path):
    p = tmp_path / "e.llbc"
    p.write_text("//! expect: reject\nfn main() { let x: u32; x = 0; }\n")
    r = run_entry(CorpusEntry.load(p))
    assert not r.ok and r.verdict == "ok"


def test_wrong_output_fails(tmp_path):
    p = tmp_path / "e.llbc"
    p.write_text("//! observe: x\n//! output: unit (1)\nfn main() { let x: u32; x = 0; }\n")
    r = run_entry(CorpusEntry.load(p))
    assert not r.ok and "unit (0)" in r.detail


def test_parse_error_entry_is_an_error(tmp_path):
    p = tmp_path / "e.llbc"
    p.write_text("fn main( {")
    assert run_entry(CorpusEntry.load(p)).verdict == "error"


def test_empty_corpus(tmp_path):
    with pytest.raises(EmptyCorpus):
        run_corpus(tmp_path)
    assert main(["corpus", str(tmp_path)]) == FAILED


def test_state_entry_stuck():
    r = run_entry(CorpusEntry.load(CORPUS / "neg_merge_cycle.state"))
    assert r.ok and r.verdict == "stuck"


# ---------------------------------------------------------------- format_state

def test_format_normalizes_ids():
    assert format_state(make_state({"x": MutLoan(42)})) == "x -> loan^m l0"


def test_format_abstraction():
    st = parse_state("A7 { borrow^m l3 _, loan^m l9 }")
    assert format_state(st) == "A0 { borrow^m l0 _, loan^m l1 }"


def test_format_round_trip_on_symbolic_states():
    from borrowlab.symbolic import borrow_checks
    seen = []
    borrow_checks(load_program(CHOOSE), "main", on_step=lambda s, st: seen.append(st))
    for st in seen:
        back = parse_state(format_state(st))
        assert state_iso(back, st) is not None
        assert format_state(back) == format_state(st)


def test_parse_error_in_state_text():
    from borrowlab.syntax import LangError
    with pytest.raises(LangError):
        parse_state("x -> borrow^m")


# ---------------------------------------------------------------- CLI

def _write(tmp_path, text, name="p.llbc"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_check_ok(tmp_path, capsys):
    assert main(["check", _write(tmp_path, CHOOSE), "--explain"]) == OK
    out = capsys.readouterr().out
    assert "choose: ok" in out and "Le-MergeAbs" in out


def test_cli_check_rejects(tmp_path, capsys):
    assert main(["check", _write(tmp_path, STUCK_PROGRAM)]) == FAILED
    assert "REJECTED" in capsys.readouterr().out


def test_cli_check_set_branching(tmp_path):
    assert main(["check", _write(tmp_path, CHOOSE), "--branch", "set"]) == OK


def test_cli_run(tmp_path, capsys):
    assert main(["run", _write(tmp_path, "//! observe: x\n" + REBORROW), "--semantics", "pl", "--fuel", "10"]) == OK
    assert capsys.readouterr().out.startswith("unit (0)")


def test_cli_run_trace(tmp_path, capsys):
    assert main(["run", _write(tmp_path, REBORROW), "--trace"]) == OK
    out = capsys.readouterr().out
    assert "-- line 6: px = &mut x;" in out


def test_cli_run_stuck(tmp_path, capsys):
    assert main(["run", _write(tmp_path, STUCK_PROGRAM)]) == STUCK
    assert "stuck at line 7" in capsys.readouterr().err


def test_cli_run_without_main(tmp_path):
    assert main(["run", _write(tmp_path, "fn f() { }")]) == BAD_INPUT


def test_cli_parse_error(tmp_path, capsys):
    assert main(["check", _write(tmp_path, "fn main( {")]) == BAD_INPUT
    assert "error" in capsys.readouterr().err


def test_cli_missing_file(tmp_path):
    assert main(["check", str(tmp_path / "nope.llbc")]) == BAD_INPUT


def test_cli_diff(tmp_path, capsys):
    assert main(["diff", _write(tmp_path, REBORROW), "--fuels", "4,16"]) == OK
    assert capsys.readouterr().out.count("agree") == 2


def test_cli_diff_skips_rejected(tmp_path):
    assert main(["diff", _write(tmp_path, STUCK_PROGRAM)]) == FAILED


def test_cli_fixpoint(tmp_path, capsys):
    assert main(["fixpoint", _write(tmp_path, LOOP_REBORROW), "--fn", "g"]) == OK
    out = capsys.readouterr().out
    assert "candidate 0:" in out and "candidate 1:" in out and "fixpoint after 1 join(s):" in out


def test_cli_fixpoint_unknown_function(tmp_path):
    assert main(["fixpoint", _write(tmp_path, LOOP_REBORROW), "--fn", "zz"]) == BAD_INPUT


def test_cli_corpus(capsys):
    assert main(["corpus"]) == OK
    assert "0 failed" in capsys.readouterr().out


def test_cli_bad_fuels(tmp_path):
    with pytest.raises(SystemExit):
        main(["diff", _write(tmp_path, REBORROW), "--fuels", "a,b"])


def test_golden_files_parse_back():
    for g in CORPUS.glob("*.llbc.golden"):
        st = parse_state(g.read_text())
        assert same(st, g.read_text())
