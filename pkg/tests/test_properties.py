import pytest
from hypothesis import HealthCheck, given, settings

from conftest import corpus_programs
from strategies import programs, state_pairs, states
from borrowlab.driver import run_concrete
from borrowlab.interp_pl import sizeof
from borrowlab.join import JoinFailed, ResidualMarkers, collapse, join_states
from borrowlab.llbc_state import check_wellformed
from borrowlab.pretty import format_state
from borrowlab.subsume import state_iso, subsumes
from borrowlab.symbolic import borrow_checks
from borrowlab.syntax import load_program

def cases(n):
    return settings(max_examples=n, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def checked_corpus():
    """Corpus programs with a main whose every function borrow-checks."""
    out = []
    for path in corpus_programs():
        prog = load_program(path.read_text())
        if "main" in prog.funs and all(borrow_checks(prog, f).ok for f in prog.funs):
            out.append(pytest.param(prog, id=path.stem))
    return out


CHECKED = checked_corpus()


# ---------------------------------------------------------------- concrete semantics

@cases(100)
@given(programs())
def test_fuel_monotonicity(src):
    prog = load_program(src)
    for sem in ("llbc", "pl"):
        seen = [run_concrete(prog, sem, fuel).observation for fuel in (1, 2, 4, 8, 16, 64)]
        for n, obs in enumerate(seen):
            assert obs.tag != "stuck"
            if obs.tag != "diverge":
                assert all(later == obs for later in seen[n + 1:]), (sem, seen)


@cases(50)
@given(programs())
def test_generated_programs_agree_across_semantics(src):
    prog = load_program(src)
    for fuel in (4, 32):
        assert len({run_concrete(prog, s, fuel).observation for s in ("llbc", "hlpl", "pl")}) == 1


@pytest.mark.parametrize("prog", CHECKED)
def test_steps_preserve_wellformedness(prog):
    bad = []

    def check(s, st):
        errs = check_wellformed(st)
        if errs:
            bad.append((s.line, errs, format_state(st)))
    run_concrete(prog, "llbc", 64, on_step=check)
    assert bad == []


@pytest.mark.parametrize("prog", CHECKED)
def test_symbolic_steps_preserve_wellformedness(prog):
    bad = []

    def check(s, st):
        errs = check_wellformed(st, complete=False)
        if errs:
            bad.append((s.line, errs))
    for f in prog.funs:
        borrow_checks(prog, f, on_step=check)
    assert bad == []


@pytest.mark.parametrize("prog", CHECKED)
def test_pl_is_deterministic(prog):
    a = run_concrete(prog, "pl", 64)
    b = run_concrete(prog, "pl", 64)
    assert a.observation == b.observation and a.dump() == b.dump()


@cases(50)
@given(programs())
def test_pl_is_deterministic_on_generated_programs(src):
    prog = load_program(src)
    a, b = run_concrete(prog, "pl", 16), run_concrete(prog, "pl", 16)
    assert a.observation == b.observation and a.dump() == b.dump()


@pytest.mark.parametrize("prog", CHECKED)
def test_pl_writes_match_sizeof(prog):
    writes = []
    run_concrete(prog, "pl", 64, on_write=lambda p, n, size: writes.append((str(p), n, size)))
    assert all(n == size for _, n, size in writes), [w for w in writes if w[1] != w[2]]


def test_pl_write_hook_fires():
    writes = []
    prog = load_program("fn main() { let x: (u32, u32); x = (1, 2); }")
    run_concrete(prog, "pl", 8, on_write=lambda p, n, size: writes.append((n, size)))
    assert (2, 2) in writes


@pytest.mark.parametrize("prog", CHECKED)
def test_checked_programs_never_get_stuck(prog):
    for fuel in range(1, 25):
        for sem in ("llbc", "hlpl", "pl"):
            assert run_concrete(prog, sem, fuel).observation.tag != "stuck", (sem, fuel)


# ---------------------------------------------------------------- symbolic states

@cases(200)
@given(states())
def test_subsumes_is_reflexive(st):
    subsumes(st, st)


@cases(200)
@given(states())
def test_join_is_idempotent(st):
    assert state_iso(collapse(join_states(st, st)), st) is not None


@cases(200)
@given(states())
def test_format_parse_round_trip(st):
    from borrowlab.pretty import parse_state
    assert state_iso(parse_state(format_state(st)), st) is not None


@cases(200)
@given(state_pairs())
def test_join_collapse_is_sound(pair):
    left, right = pair
    try:
        c = collapse(join_states(left, right))
    except (JoinFailed, ResidualMarkers):
        return
    subsumes(left, c)
    subsumes(right, c)


def test_corpus_joins_are_sound():
    seen = []
    for path in corpus_programs():
        prog = load_program(path.read_text())
        for f in prog.funs:
            borrow_checks(prog, f, on_join=lambda l, r, c: seen.append((l, r, c)))
    assert len(seen) >= 3
    for left, right, c in seen:
        subsumes(left, c)
        subsumes(right, c)


def test_sizeof_used_by_hook_matches_types():
    from borrowlab.syntax import parse_type
    assert sizeof(parse_type("(u32, (bool, u32))")) == 3
