import pytest

from borrowlab.driver import run_concrete
from borrowlab.interp_hlpl import HlplMachine, OutstandingPointers, end_location, eval_rvalue_hlpl, reorganize_hlpl
from borrowlab.llbc_state import BOT, Anon, Binding, Fresh, Loc, Ptr, State, make_state
from borrowlab.interp_llbc import Done, Stuck, StuckError
from borrowlab.llbc_state import PathMismatch
from borrowlab.syntax import Lit, Move, Ref, Use, load_program, parse_place

ZERO = Lit(0, "u32")
P = parse_place


def run_main(src, fuel=10):
    prog = load_program(src)
    f = prog.funs["main"]
    m = HlplMachine(prog, Fresh())
    return m.run(m.push_frame(State(stack=()), f, []), f.body, fuel)


def reborrowed():
    return State((Binding("x", Loc(0, ZERO)), Binding("px", Ptr(0)), Binding(Anon(9), Ptr(0))), (), (("x", "px"),))


def test_borrow_wraps_in_location():
    v, s = eval_rvalue_hlpl(make_state({"x": ZERO}), Ref("mut", P("x")), fresh=Fresh())
    assert v == Ptr(0) and s.lookup("x") == Loc(0, ZERO)


def test_reborrow_reuses_location():
    s0 = make_state({"x": Loc(0, ZERO), "px": Ptr(0)})
    v, s = eval_rvalue_hlpl(s0, Ref("mut", P("*px")))
    assert v == Ptr(0) and s == s0


def test_move_of_location_is_refused_without_reorganization():
    m = HlplMachine(None, Fresh(1))
    m.lazy = False
    with pytest.raises(StuckError):
        m.eval_rvalue(make_state({"x": Loc(0, ZERO), "p": Ptr(0)}), Use(Move(P("x"))), None)


def test_move_of_location_ends_it_lazily():
    v, s = eval_rvalue_hlpl(make_state({"x": Loc(0, ZERO), "p": Ptr(0)}), Use(Move(P("x"))))
    assert v == ZERO and s.lookup("p") == BOT and s.lookup("x") == BOT


def test_end_pointers_then_location():
    s = end_location(reborrowed(), 0)
    assert s.lookup("x") == ZERO and s.lookup("px") == BOT
    assert s.anons()[0].value == BOT


def test_end_location_with_live_pointer():
    with pytest.raises(OutstandingPointers):
        reorganize_hlpl(reborrowed(), ("end_loc", 0))


def test_end_pointer_on_bottom_slot():
    s = make_state({"x": BOT})
    with pytest.raises(PathMismatch):
        reorganize_hlpl(s, ("end_ptr", (("e", 0), ())))


def test_reborrow_program_keeps_pointers():
    r = run_main("fn main() { let x: u32; let px: &mut u32; x = 0; px = &mut x; px = &mut (*px); assert!(copy x == 0); }")
    assert r.state.lookup("x") == Loc(0, ZERO)
    assert r.state.lookup("px") == Ptr(0)
    assert [b.value for b in r.state.anons()] == [Ptr(0)]


def test_write_ends_pointers_first():
    r = run_main("fn main() { let x: u32; let px: &mut u32; x = 0; px = &mut x; px = &mut (*px); x = 1; }")
    assert r.state.lookup("x") == Lit(1, "u32")
    assert r.state.lookup("px") == BOT


def test_free_with_interior_pointer_ends_it():
    # the interior pointer is invalidated rather than left dangling
    r = run_main("fn main() { let b: Box<u32>; let p: &mut u32; b = new(1); p = &mut *b; free(b); return; }")
    assert isinstance(r, Done)
    assert r.state.lookup("p") == BOT


def test_box_lives_in_heap_binding():
    r = run_main("fn main() { let b: Box<u32>; b = new(7); return; }")
    ptr = r.state.lookup("b")
    assert isinstance(ptr, Ptr) and ptr.box


def test_locations_never_move():
    """The binding holding each location is stable across non-reorganizing steps."""
    src = "fn main() { let x: (u32, u32); let p: &mut u32; let q: &u32; let y: u32; x = (1, 2); p = &mut x.0; q = &x.1; y = copy *q; *p = copy y; }"
    prog = load_program(src)
    f = prog.funs["main"]
    homes = {}

    def trace(s, st):
        for b in st.env:
            for loc in _locs(b.value):
                assert homes.setdefault(loc, b.key) == b.key

    m = HlplMachine(prog, Fresh(), trace)
    r = m.run(m.push_frame(State(stack=()), f, []), f.body, 4)
    assert isinstance(r, Done)
    assert homes


def _locs(v):
    from borrowlab.llbc_state import subvalues
    return [x.l for x in subvalues(v) if isinstance(x, Loc)]


def test_double_free_is_stuck():
    r = run_main("fn main() { let b: Box<u32>; let c: Box<u32>; b = new(1); c = copy b; return; }")
    assert isinstance(r, Stuck)
