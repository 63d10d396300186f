from dataclasses import replace

import pytest

from goldens import (
    BRANCHES_COLLAPSED, BRANCHES_JOINED, LIST_WALK_FIX, LOOP_REBORROW_FIX, branch_join, list_walk_fixpoint,
    loop_reborrow_fixpoint, same, show,
)
from borrowlab.join import (
    JoinFailed, NoConvergence, ResidualMarkers, collapse, join_collapse, join_states, join_values, loop_fixpoint,
    project_marked,
)
from borrowlab.llbc_state import Abstraction, Bot, Fresh, Ignored, Lit, Marked, MutBorrow, MutLoan, Sym, Variant
from borrowlab.pretty import parse_state
from borrowlab.subsume import state_iso, subsumes
from borrowlab.symbolic import SymbolicMachine, borrow_checks, signature_states
from borrowlab.syntax import Loop, Seq, UNIT_TAG, load_program


def swap_markers(st):
    def flip(e):
        return Marked("R" if e.side == "L" else "L", e.value) if isinstance(e, Marked) else e
    return replace(st, abs=tuple(replace(a, elems=tuple(flip(e) for e in a.elems)) for a in st.abs))


def typed(f, text):
    """Parse a state of f's frame, taking binding types from f's declarations."""
    s0, _ = signature_states(f, Fresh())
    st = parse_state(text)
    tys = {b.key: b.ty for b in s0.env}
    return replace(st, env=tuple(replace(b, ty=tys[b.key]) for b in st.env), stack=s0.stack)


# ---------------------------------------------------------------- projection

def test_project_left():
    st = parse_state("x -> 0\nA0 { @l (borrow^m l0 _), @r (borrow^m l1 _), loan^m l2 }")
    assert same(project_marked(st, "L"), "x -> 0\nA0 { borrow^m l0 _, loan^m l2 }")


def test_project_right_drops_left_values():
    st = parse_state("x -> 0\nA0 { @l (borrow^m l0 _) }")
    assert project_marked(st, "R").abs[0].elems == ()


def test_project_unmarked_is_identity():
    st = parse_state("x -> loan^m l0\nA0 { borrow^m l0 _ }")
    assert project_marked(st, "L") == st


# ---------------------------------------------------------------- values

def test_join_same_values():
    st = parse_state("x -> 0")
    v, abss = join_values(st, st, Lit(3, "u32"), Lit(3, "u32"), Fresh(10))
    assert v == Lit(3, "u32") and abss == []


def test_join_different_literals_gives_symbolic():
    st = parse_state("x -> 0")
    v, abss = join_values(st, st, Lit(3, "u32"), Lit(4, "u32"), Fresh(10))
    assert isinstance(v, Sym) and abss == []


def test_join_mut_borrows():
    st = parse_state("x -> 0")
    v, abss = join_values(st, st, MutBorrow(0, Lit(0, "u32")), MutBorrow(1, Lit(1, "u32")), Fresh(10))
    assert isinstance(v, MutBorrow) and v.l not in (0, 1) and isinstance(v.value, Sym)
    (a,) = abss
    assert set(a.elems) == {Marked("L", MutBorrow(0, Ignored())), Marked("R", MutBorrow(1, Ignored())), MutLoan(v.l)}


def test_join_bottom_with_borrow():
    st = parse_state("x -> 0")
    v, abss = join_values(st, st, Bot(), MutBorrow(1, Lit(1, "u32")), Fresh(10))
    assert v == Bot()
    assert [a.elems for a in abss] == [(Marked("R", MutBorrow(1, Ignored())),)]


def test_join_bottom_with_outer_loan_fails():
    st = parse_state("x -> 0")
    with pytest.raises(JoinFailed):
        join_values(st, st, Bot(), MutLoan(3), Fresh(10))


def test_join_variants_with_loans_fail():
    st = parse_state("x -> 0")
    with pytest.raises(JoinFailed):
        join_values(st, st, Variant(0, MutLoan(1)), Variant(1, Lit(0, "u32")), Fresh(10))


# ---------------------------------------------------------------- states

def test_branch_join_matches():
    _, _, joined, _ = branch_join()
    assert same(joined, BRANCHES_JOINED), show(joined)


def test_branch_collapse_matches():
    _, _, _, collapsed = branch_join()
    assert same(collapsed, BRANCHES_COLLAPSED), show(collapsed)


def test_branch_join_is_sound_for_both_sides():
    left, right, _, collapsed = branch_join()
    subsumes(left, collapsed)
    subsumes(right, collapsed)


def test_join_with_itself():
    st = parse_state("x -> loan^m l0\np -> borrow^m l0 s1\nA2 { borrow^m l3 _, loan^m l4 }")
    assert state_iso(collapse(join_states(st, st)), st) is not None


def test_join_left_only_abstraction_is_marked():
    left = parse_state("x -> 0\nA0 { borrow^m l1 _ }")
    right = parse_state("x -> 0")
    j = join_states(left, right)
    assert j.abs[0].elems == (Marked("L", MutBorrow(1, Ignored())),)


def test_join_symmetric_up_to_markers():
    left, right, _, _ = branch_join()
    a = join_states(left, right)
    b = join_states(right, left)
    assert state_iso(swap_markers(a), b) is not None
    assert state_iso(collapse(a), collapse(b)) is not None


def test_collapse_unmarked_is_identity():
    st = parse_state("x -> loan^m l0\nA0 { borrow^m l0 _ }")
    assert collapse(st) == st


def test_collapse_lone_marker_fails():
    st = parse_state("x -> 0\nA0 { @l (borrow^m l0 _) }\nA1 { loan^m l5 }")
    with pytest.raises(ResidualMarkers):
        collapse(st)


def test_shared_loans_under_different_ids_do_not_collapse():
    left = parse_state("x0 -> borrow^s l1\nx1 -> loan^s l1 0")
    right = parse_state("x0 -> borrow^s l2\nx1 -> loan^s l2 0")
    with pytest.raises(ResidualMarkers):
        collapse(join_states(left, right))


def test_join_collapse_reports_on_join():
    left, right, _, _ = branch_join()
    seen = []
    out = join_collapse(left, right, on_join=lambda l, r, c: seen.append(c))
    assert seen == [out]


# ---------------------------------------------------------------- loops

def test_loop_reborrow_fixpoint():
    fix, joins = loop_reborrow_fixpoint()
    assert same(fix, LOOP_REBORROW_FIX), show(fix)
    assert joins == 1


def test_list_walk_fixpoint():
    fix, exits, joins = list_walk_fixpoint()
    assert same(fix, LIST_WALK_FIX), show(fix)
    assert joins == 1
    assert [t for t, _ in exits] == [UNIT_TAG]


def _loop_of(prog, fn):
    body = prog.funs[fn].body
    stmts = body.stmts if isinstance(body, Seq) else (body,)
    return next(s for s in stmts if isinstance(s, Loop))


def test_break_only_loop_is_its_own_fixpoint():
    prog = load_program("fn b() { let x: u32; x = 1; loop { break 0; } return; }")
    s0, _ = signature_states(prog.funs["b"], Fresh())
    st = s0.with_binding(s0.index_of("x"), Lit(1, "u32"))
    fix, exits, joins = loop_fixpoint(SymbolicMachine(prog, Fresh.above(st)), st, _loop_of(prog, "b").body)
    assert fix == st and joins == 0
    assert [t for t, _ in exits] == [UNIT_TAG] and exits[0][1] == st


def test_fixpoint_is_stable_under_another_iteration():
    fix, _ = loop_reborrow_fixpoint()
    prog = load_program(
        "fn g() { let x: u32; let p: &mut u32; x = 0; p = &mut x; loop { p = &mut *p; *p = copy *p + 1; continue 0; } }")
    fix2, _, joins = loop_fixpoint(SymbolicMachine(prog, Fresh.above(fix)), fix, _loop_of(prog, "g").body)
    assert joins == 0 and state_iso(fix2, fix) is not None


def test_no_convergence_is_reported():
    prog = load_program(
        "fn g() { let x: u32; let p: &mut u32; x = 0; p = &mut x; loop { p = &mut *p; continue 0; } }")
    st = typed(prog.funs["g"], "ret -> ()\nx -> loan^m l0\np -> borrow^m l0 0")
    with pytest.raises(NoConvergence):
        loop_fixpoint(SymbolicMachine(prog, Fresh.above(st)), st, _loop_of(prog, "g").body, max_iters=0)


def test_loop_joins_recorded_by_checker():
    seen = []
    r = borrow_checks(load_program(
        "fn g() { let x: u32; let p: &mut u32; x = 0; p = &mut x; loop { p = &mut *p; continue 0; } }"),
        "g", on_loop=lambda s, fix, n: seen.append(n))
    assert r.ok and seen == [1] and r.joins == [1]
