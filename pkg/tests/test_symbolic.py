import pytest

from goldens import (
    CHOOSE, CHOOSE_CALLER_STEPS, CHOOSE_FINAL, CHOOSE_INIT, choose_caller_steps, choose_signature, same, show,
)
from borrowlab.llbc_state import (
    Abstraction, BoxV, Fresh, Ignored, Lit, MutBorrow, MutLoan, Pair, SharedBorrow, Sym, check_wellformed,
    make_state,
)
from borrowlab.symbolic import (
    AbstractionHasLoans, MissingSharedLoan, ShapeMismatch, SymbolicMachine, borrow_checks, end_abstraction,
    eval_statement_symbolic, expand_symbolic, init_signature, inst_sig, signature_states,
)
from borrowlab.syntax import BOOL, U32, PairT, BoxT, Seq, SumT, UNIT_TAG, PANIC_TAG, load_program, parse_program

ID = """
fn id(x: u32) -> u32 { ret = move x; return; }
"""

BAD = """
fn bad<'a>(x: &'a mut u32) -> &'a mut u32 {
    let y: u32;
    y = 0;
    ret = &mut y;
    return;
}
"""

FORK = """
fn k(b: bool) {
    let x: u32;
    if copy b { x = 0; } else { x = 1; }
    return;
}
"""

SHARED_CALLEE = """
fn peek<'a>(x: &'a u32) -> u32 { ret = copy *x; return; }
"""


def _stmts(body):
    return body.stmts if isinstance(body, Seq) else [body]


# ---------------------------------------------------------------- signatures

def test_choose_init_state():
    init, _ = choose_signature()
    assert same(init, CHOOSE_INIT), show(init)


def test_choose_final_state():
    _, final = choose_signature()
    assert same(final, CHOOSE_FINAL), show(final)


def test_choose_external_borrows_shared_between_init_and_final():
    init, final = choose_signature()
    ext = lambda st: {e.l for a in st.abs for e in a.elems if isinstance(e, MutBorrow)}
    assert ext(init) == ext(final) and len(ext(init)) == 2


def test_no_region_signature_has_no_abstractions():
    f = load_program(ID).funs["id"]
    vals, abss, _ = init_signature(f, Fresh())
    assert abss == [] and isinstance(vals[0], Sym)


def test_inst_sig_choose_call():
    prog = load_program(CHOOSE)
    st = make_state({"x": MutLoan(0), "y": MutLoan(1)})
    args = [Lit(True, "bool"), MutBorrow(0, Lit(0, "u32")), MutBorrow(1, Lit(0, "u32"))]
    abss, out = inst_sig(st, prog.funs["choose"], args, Fresh(10), {"T": U32})
    assert len(abss) == 1
    elems = abss[0].elems
    assert MutBorrow(0, Ignored()) in elems and MutBorrow(1, Ignored()) in elems
    assert isinstance(out, MutBorrow) and isinstance(out.value, Sym) and out.value.ty == U32
    assert MutLoan(out.l) in elems and len(elems) == 3


def test_inst_sig_no_regions():
    prog = load_program(ID)
    abss, out = inst_sig(make_state({}), prog.funs["id"], [Lit(3, "u32")], Fresh(5))
    assert abss == [] and isinstance(out, Sym)


def test_inst_sig_requires_shared_loan():
    prog = load_program(SHARED_CALLEE)
    with pytest.raises(MissingSharedLoan):
        inst_sig(make_state({"p": SharedBorrow(7)}), prog.funs["peek"], [SharedBorrow(7)], Fresh(10))


# ---------------------------------------------------------------- abstractions and expansion

def test_end_abstraction_returns_borrows_as_anons():
    st = make_state({"x": MutLoan(0), "y": MutLoan(1)},
                    [Abstraction(5, (MutBorrow(0, Ignored(U32)), MutBorrow(1, Ignored(U32)), Sym(4, U32)))])
    out = end_abstraction(st, 5, Fresh(10))
    assert out.abs == ()
    assert sorted(b.value.l for b in out.anons()) == [0, 1]
    assert all(isinstance(b.value.value, Sym) for b in out.anons())


def test_end_abstraction_with_loan_fails():
    st = make_state({"pz": MutBorrow(2, Sym(3))}, [Abstraction(5, (MutBorrow(0, Ignored()), MutLoan(2)))])
    with pytest.raises(AbstractionHasLoans) as e:
        end_abstraction(st, 5, Fresh(10))
    assert e.value.loans == [2]


def test_end_empty_abstraction():
    st = make_state({"x": Lit(1, "u32")}, [Abstraction(5, ())])
    out = end_abstraction(st, 5, Fresh(10))
    assert out.abs == () and out.anons() == []


def test_expand_pair():
    s = Sym(0, PairT(U32, U32))
    out = expand_symbolic(make_state({"p": s}), s, "pair", Fresh(1))
    v = out.lookup("p")
    assert isinstance(v, Pair) and isinstance(v.fst, Sym) and isinstance(v.snd, Sym) and v.fst.id != v.snd.id


def test_expand_box():
    s = Sym(0, BoxT(U32))
    v = expand_symbolic(make_state({"b": s}), s, "box", Fresh(1)).lookup("b")
    assert isinstance(v, BoxV) and isinstance(v.value, Sym)


def test_expand_bool_forks():
    s = Sym(0, BOOL)
    t, f = expand_symbolic(make_state({"b": s, "c": s}), s, "bool", Fresh(1))
    assert t.lookup("b") == t.lookup("c") == Lit(True, "bool")
    assert f.lookup("b") == Lit(False, "bool")


def test_expand_sum_forks():
    s = Sym(0, SumT(U32, BOOL))
    left, right = expand_symbolic(make_state({"o": s}), s, "sum", Fresh(1))
    assert left.lookup("o").tag == 0 and right.lookup("o").tag == 1


def test_expand_shape_mismatch():
    s = Sym(0, U32)
    with pytest.raises(ShapeMismatch):
        expand_symbolic(make_state({"x": s}), s, "pair", Fresh(1))


# ---------------------------------------------------------------- evaluation

def test_if_on_symbolic_with_set_branching_gives_two_states():
    prog = load_program(FORK)
    f = prog.funs["k"]
    s0, _ = signature_states(f, Fresh())
    if_stmt = _stmts(f.body)[0]
    outs = eval_statement_symbolic(s0, if_stmt, prog, Fresh.above(s0), branch="set")
    assert [t for t, _ in outs] == [UNIT_TAG, UNIT_TAG]
    assert sorted(st.lookup("x").value for _, st in outs) == [0, 1]


def test_if_on_symbolic_with_join_gives_one_state():
    prog = load_program(FORK)
    f = prog.funs["k"]
    s0, _ = signature_states(f, Fresh())
    outs = eval_statement_symbolic(s0, _stmts(f.body)[0], prog, Fresh.above(s0), branch="join")
    assert len(outs) == 1 and isinstance(outs[0][1].lookup("x"), Sym)


def test_increment_through_borrow_refreshes_symbolic_value():
    before, after = [], []
    prog = load_program(CHOOSE)
    borrow_checks(prog, "main",
                  trace=lambda s, st: before.append(st) if s.line == 9 else None,
                  on_step=lambda s, st: after.append(st) if s.line == 9 else None)
    pz0, pz1 = before[0].lookup("pz"), after[0].lookup("pz")
    assert pz0.l == pz1.l and isinstance(pz1.value, Sym) and pz1.value.id != pz0.value.id


@pytest.mark.parametrize("i", range(4))
def test_choose_caller_steps(i):
    st = choose_caller_steps()[i]
    assert same(st, CHOOSE_CALLER_STEPS[i]), show(st)


def test_symbolic_states_stay_wellformed():
    seen = []
    borrow_checks(load_program(CHOOSE), "main", on_step=lambda s, st: seen.append(st))
    assert seen
    for st in seen:
        assert check_wellformed(st, complete=False) == []


# ---------------------------------------------------------------- borrow_checks

def test_choose_borrow_checks():
    prog = load_program(CHOOSE)
    assert borrow_checks(prog, "choose").ok
    assert borrow_checks(prog, "main").ok


def test_choose_derivation_uses_expected_rules():
    r = borrow_checks(load_program(CHOOSE), "choose")
    rules = set(r.branches[0].derivation.rules())
    assert {"Le-MoveValue", "Le-ToAbs", "Le-MergeAbs"} <= rules


def test_escaping_local_is_rejected():
    r = borrow_checks(load_program(BAD), "bad")
    assert not r.ok
    assert "bad: REJECTED" in r.render()


def test_identity_borrow_checks():
    assert borrow_checks(load_program(ID), "id").ok


def test_panic_branch_is_accepted():
    r = borrow_checks(load_program(CHOOSE), "main")
    assert PANIC_TAG in [b.tag for b in r.branches]


def test_escaping_break_fails():
    # the resolver rejects this program; the checker must still refuse it
    prog = parse_program("fn e() { break 0; }")
    r = borrow_checks(prog, "e")
    assert not r.ok and "escapes" in r.branches[0].reason


def test_machine_exec_rejects_forks():
    prog = load_program(FORK)
    f = prog.funs["k"]
    s0, _ = signature_states(f, Fresh())
    m = SymbolicMachine(prog, Fresh.above(s0), branch="set")
    with pytest.raises(Exception):
        m.exec(s0, _stmts(f.body)[0])
