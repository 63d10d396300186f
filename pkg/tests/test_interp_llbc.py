import pytest

from borrowlab.interp_llbc import (
    Diverge, Done, LlbcMachine, MoveOfLoanedValue, PreconditionViolated, Stuck, StuckAccess,
    eval_operand, eval_rvalue, eval_statement, perform, reorganize, resolve_access,
)
from borrowlab.llbc_state import (
    BOT, IMM, Anon, Binding, Fresh, MutBorrow, MutLoan, ReservedBorrow, SharedBorrow, SharedLoan,
    State, check_wellformed, make_state,
)
from borrowlab.pretty import format_state, parse_state
from borrowlab.syntax import PANIC_TAG, UNIT_TAG, Copy, Lit, Move, Ref, load_program, parse_place

ZERO, ONE = Lit(0, "u32"), Lit(1, "u32")
P = parse_place


def run_main(src, fuel=10):
    prog = load_program(src)
    f = prog.funs["main"]
    m = LlbcMachine(prog, Fresh())
    st = m.push_frame(State(stack=()), f, [])
    return m.run(st, f.body, fuel)


def reborrow_state():
    return State((Binding("x", MutLoan(0)), Binding(Anon(10), MutBorrow(0, MutLoan(1))),
                  Binding("px", MutBorrow(1, ZERO))), (), (("x", "px"),))


def test_move_invalidates_source():
    v, s = eval_operand(make_state({"x": MutLoan(0), "px": MutBorrow(0, ZERO)}), Move(P("px")))
    assert v == MutBorrow(0, ZERO)
    assert s.lookup("px") == BOT


def test_copy_leaves_state():
    s0 = make_state({"x": Lit(5, "u32")})
    v, s = eval_operand(s0, Copy(P("x")))
    assert v == Lit(5, "u32") and s == s0


def test_move_of_loaned_value():
    # the lone loan has no borrow to end, so the move cannot go through
    with pytest.raises(MoveOfLoanedValue):
        eval_operand(make_state({"x": MutLoan(0)}), Move(P("x")))


def test_mut_borrow():
    v, s = eval_rvalue(make_state({"x": ZERO}), Ref("mut", P("x")), fresh=Fresh())
    assert v == MutBorrow(0, ZERO)
    assert s.lookup("x") == MutLoan(0)


def test_shared_borrow_reuses_loan():
    s0 = make_state({"x": SharedLoan(4, ZERO)})
    v, s = eval_rvalue(s0, Ref("shared", P("x")))
    assert v == SharedBorrow(4) and s == s0


def test_reserved_borrow():
    v, s = eval_rvalue(make_state({"x": ZERO}), Ref("reserved", P("x")), fresh=Fresh())
    assert v == ReservedBorrow(0)
    assert s.lookup("x") == SharedLoan(0, ZERO)


def test_end_borrows_innermost_first():
    s = reorganize(reborrow_state(), ("end_mut", 1))
    s = reorganize(s, ("end_mut", 0))
    assert s.lookup("x") == ZERO and s.lookup("px") == BOT
    assert s.anons()[0].value == BOT


def test_end_outer_borrow_first_is_a_precondition_violation():
    with pytest.raises(PreconditionViolated):
        reorganize(reborrow_state(), ("end_mut", 0))


def test_activate_reserved():
    s = make_state({"x": SharedLoan(0, ONE), "b": ReservedBorrow(0)})
    s = reorganize(s, ("activate", 0))
    assert s.lookup("x") == MutLoan(0)
    assert s.lookup("b") == MutBorrow(0, ONE)


def test_resolve_access_ends_the_reborrow_chain():
    s = resolve_access(reborrow_state(), P("x"), IMM)
    assert s.lookup("x") == ZERO


def test_resolve_access_is_identity_when_unblocked():
    s = make_state({"x": ZERO})
    assert resolve_access(s, P("x"), IMM) == s


def test_merge_cycle_is_stuck():
    st = parse_state("A0 { borrow^m l2 _, loan^m l0, borrow^m l1 _ }\nA1 { loan^m l1, borrow^m l0 _ }")
    with pytest.raises(StuckAccess):
        perform(st, ("end_mut", 1), Fresh.above(st))


def test_reborrow_program():
    r = run_main("fn main() { let x: u32; let px: &mut u32; x = 0; px = &mut x; px = &mut (*px); assert!(copy x == 0); }")
    assert isinstance(r, Done) and r.tag == UNIT_TAG
    assert format_state(r.state) == "ret -> ()\nx -> 0\npx -> bot\n_ -> bot"


def test_increment_through_borrow():
    r = run_main("fn main() { let x: u32; let px: &mut u32; x = 0; px = &mut x; *px = copy *px + 1; assert!(copy x == 1); }")
    assert r.tag == UNIT_TAG and r.state.lookup("x") == ONE


def test_failed_assert_panics():
    r = run_main("fn main() { let x: u32; x = 0; assert!(copy x == 1); }")
    assert r.tag == PANIC_TAG


def test_overflow_panics():
    r = run_main("fn main() { let x: u32; x = 0; x = copy x - 1; return; }")
    assert r.tag == PANIC_TAG


@pytest.mark.parametrize("fuel", [0, 1, 5, 50])
def test_infinite_loop_diverges(fuel):
    assert isinstance(run_main("fn main() { loop { continue 0; } }", fuel), Diverge)


def test_assignment_saves_overwritten_borrow():
    r = run_main("fn main() { let x: u32; let y: u32; let p: &mut u32; x = 0; y = 0; p = &mut x; p = &mut y; return; }")
    anons = [b.value for b in r.state.anons()]
    assert anons == [MutBorrow(0, ZERO)]
    assert check_wellformed(r.state) == []


def test_calls_inline_and_pop():
    src = """
    fn incr<'a>(p: &'a mut u32) { *p = copy *p + 1; return; }
    fn main() { let x: u32; let p: &mut u32; let u: (); x = 0; p = &mut x; u = incr<'_>(move p); assert!(copy x == 1); return; }
    """
    r = run_main(src)
    assert r.tag.kind == "return"
    assert [b.key for b in r.state.named()] == ["ret", "x", "p", "u"]


def test_calls_consume_fuel():
    src = """
    fn f() { return; }
    fn main() { let u: (); u = f(); return; }
    """
    # the body itself needs one unit of fuel once the call has consumed one
    assert isinstance(run_main(src, 1), Diverge)
    assert isinstance(run_main(src, 2), Done)


def test_use_after_move_is_stuck():
    r = run_main("fn main() { let b: Box<u32>; let c: Box<u32>; let y: u32; b = new(1); c = move b; y = copy *b; return; }")
    assert isinstance(r, Stuck) and r.line == 1


def test_trace_hook_sees_each_statement():
    seen = []
    prog = load_program("fn main() { let x: u32; x = 0; x = 1; }")
    f = prog.funs["main"]
    m = LlbcMachine(prog, Fresh(), trace=lambda s, st: seen.append(type(s).__name__))
    m.run(m.push_frame(State(stack=()), f, []), f.body, 4)
    assert seen == ["Assign", "Assign"]


def test_module_level_eval_statement():
    prog = load_program("fn main() { let x: u32; x = 0; }")
    f = prog.funs["main"]
    st = LlbcMachine(prog, Fresh()).push_frame(State(stack=()), f, [])
    r = eval_statement(st, f.body, 3, prog)
    assert r.tag == UNIT_TAG and r.state.lookup("x") == ZERO
