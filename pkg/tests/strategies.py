"""Hypothesis generators: small programs over u32 variables and small well-formed symbolic states."""

from __future__ import annotations

from dataclasses import replace

from hypothesis import strategies as st

from borrowlab.llbc_state import (
    BOT, Abstraction, Bot, Fresh, Ignored, Lit, MutBorrow, MutLoan, Pair, SharedBorrow, SharedLoan, Sym,
    check_wellformed, has_borrows, has_loans, make_state,
)
from borrowlab.syntax import U32

# ---------------------------------------------------------------- programs

VARS = ("a", "b", "c")
HEADER = """//! observe: a, b, c
fn inc(x: u32) -> u32 { ret = copy x + 1; return; }
fn main() {
    let a: u32; let b: u32; let c: u32; let p: &mut u32;
"""


@st.composite
def _stmt(draw, depth: int, avoid: str = ""):
    free = [v for v in VARS if v != avoid]
    v = draw(st.sampled_from(free))
    w = draw(st.sampled_from(VARS))
    k = draw(st.integers(0, 5))
    kinds = ["const", "add", "sub", "call", "borrow", "assert"]
    if depth > 0:
        kinds += ["if", "loop"]
    kind = draw(st.sampled_from(kinds))
    if kind == "const":
        return f"{v} = {k};"
    if kind == "add":
        return f"{v} = copy {w} + {k};"
    if kind == "sub":
        return f"{v} = copy {w} - {k};"
    if kind == "call":
        return f"{v} = inc(copy {w});"
    if kind == "borrow":
        return f"p = &mut {v}; *p = copy *p + {k};"
    if kind == "assert":
        return f"assert!(copy {w} < {k + 3});"
    if kind == "if":
        then = draw(_block(depth - 1, avoid))
        els = draw(_block(depth - 1, avoid))
        return f"if copy {w} < {k} {{ {then} }} else {{ {els} }}"
    # a counting loop; its body leaves the counter alone
    body = draw(_block(depth - 1, v))
    bound = draw(st.integers(0, 6))
    return (f"loop {{ if copy {v} < {bound} {{ {v} = copy {v} + 1; {body} continue 0; }} "
            f"else {{ break 0; }} }}")


@st.composite
def _block(draw, depth: int, avoid: str = ""):
    return " ".join(draw(st.lists(_stmt(depth, avoid), min_size=0, max_size=3)))


@st.composite
def programs(draw):
    inits = " ".join(f"{v} = {draw(st.integers(0, 4))};" for v in VARS)
    body = draw(_block(2))
    return HEADER + "    " + inits + "\n    " + body + "\n}\n"


# ---------------------------------------------------------------- states

def _plain(v) -> bool:
    return not has_loans(v) and not has_borrows(v)


def _value(draw, fresh):
    kind = draw(st.sampled_from(["lit", "sym", "bot", "pair"]))
    if kind == "lit":
        return Lit(draw(st.integers(0, 3)), "u32")
    if kind == "sym":
        return Sym(fresh(), U32)
    if kind == "bot":
        return BOT
    return Pair(Lit(draw(st.integers(0, 3)), "u32"), Sym(fresh(), U32))


def _apply(draw, vals: list, abss: list, fresh, n_ops: int, max_abs: int = 2):
    """Random LLBC-style transitions; each keeps the state well formed."""
    n = len(vals)
    for _ in range(n_ops):
        op = draw(st.sampled_from(["borrow", "shared", "move", "set", "reborrow", "end", "abs_borrow", "abs_loan"]))
        i = draw(st.integers(0, n - 1))
        j = draw(st.integers(0, n - 1))
        vi, vj = vals[i], vals[j]
        if op == "borrow" and i != j and _plain(vi) and not isinstance(vi, Bot) and _plain(vj):
            l = fresh()
            vals[i], vals[j] = MutLoan(l), MutBorrow(l, vi)
        elif op == "shared" and i != j and _plain(vi) and not isinstance(vi, Bot) and _plain(vj):
            l = fresh()
            vals[i], vals[j] = SharedLoan(l, vi), SharedBorrow(l)
        elif op == "move" and i != j and _plain(vj) and not isinstance(vi, (MutLoan, SharedLoan)) \
                and not any(isinstance(x, (MutLoan, SharedLoan)) for x in _tops(vi)):
            vals[j], vals[i] = vi, BOT
        elif op == "set" and _plain(vi):
            vals[i] = _value(draw, fresh)
        elif op == "reborrow" and i != j and isinstance(vi, MutBorrow) and _plain(vi.value) and _plain(vj):
            l = fresh()
            vals[i], vals[j] = MutBorrow(vi.l, MutLoan(l)), MutBorrow(l, vi.value)
        elif op == "end" and isinstance(vi, MutBorrow) and _plain(vi.value):
            k = next((k for k, v in enumerate(vals) if v == MutLoan(vi.l)), None)
            if k is not None:
                vals[k], vals[i] = vi.value, BOT
        elif op == "abs_borrow" and _plain(vi) and not isinstance(vi, Bot):
            l = fresh()
            vals[i] = MutLoan(l)
            _add_to_abs(draw, abss, MutBorrow(l, Ignored(U32)), fresh, max_abs)
        elif op == "abs_loan" and _plain(vi):
            l = fresh()
            if _add_to_abs(draw, abss, MutLoan(l), fresh, max_abs):
                vals[i] = MutBorrow(l, Sym(fresh(), U32))


def _tops(v):
    return (v.fst, v.snd) if isinstance(v, Pair) else ()


def _add_to_abs(draw, abss: list, e, fresh, max_abs: int) -> bool:
    if abss and (len(abss) >= max_abs or draw(st.booleans())):
        k = draw(st.integers(0, len(abss) - 1))
        abss[k] = replace(abss[k], elems=abss[k].elems + (e,))
        return True
    if len(abss) >= max_abs:
        return False
    abss.append(Abstraction(fresh(), (e,)))
    return True


def _build(names, vals, abss):
    s = make_state(list(zip(names, vals, [None] * len(vals))), abss)
    assert check_wellformed(s, complete=False) == [], s
    return s


@st.composite
def states(draw, fresh_start: int = 0):
    """Well-formed symbolic state with at most 4 named bindings and 2 abstractions."""
    fresh = Fresh(fresh_start)
    n = draw(st.integers(1, 4))
    names = [f"x{i}" for i in range(n)]
    vals = [_value(draw, fresh) for _ in names]
    abss = []
    _apply(draw, vals, abss, fresh, draw(st.integers(0, 6)))
    return _build(names, vals, abss)


@st.composite
def state_pairs(draw):
    """Two branches from a common ancestor: same variables, disjoint fresh ids."""
    fresh = Fresh(0)
    n = draw(st.integers(1, 4))
    names = [f"x{i}" for i in range(n)]
    vals = [_value(draw, fresh) for _ in names]
    abss = []
    _apply(draw, vals, abss, fresh, draw(st.integers(0, 4)))
    sides = []
    for start in (1000, 2000):
        v, a = list(vals), list(abss)
        _apply(draw, v, a, Fresh(start), draw(st.integers(0, 4)))
        sides.append(_build(names, v, a))
    return tuple(sides)
