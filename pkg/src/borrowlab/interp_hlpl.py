"""Pointer/location semantics: the same statements over `loc`/`ptr` values.

A borrow of any kind wraps the borrowed value in a location (or reuses the
one already there) and returns a pointer to it.  Boxes are pointers to heap
bindings appended to the environment.  Locations are ended lazily: when an
access is blocked by one, every pointer to it is invalidated, then the
wrapper is removed.
"""

from __future__ import annotations

from dataclasses import replace

from .interp_llbc import LlbcMachine, PreconditionViolated, StuckError
from .llbc_state import (
    BOT, IMM, MOV, MUT, BlockedByBot, BlockedByLocation, Binding, Fresh, Heap, Loc,
    PathMismatch, Ptr, State, focus, get_at, set_at, subvalues, walk,
)
from .syntax import Place, Ref


class OutstandingPointers(PreconditionViolated):
    def __init__(self, l):
        super().__init__("EndLoc", l)


def reorganize_hlpl(st: State, action: tuple) -> State:
    """("end_ptr", loc) sets one pointer slot to bottom; ("end_loc", l) unwraps a location."""
    kind, x = action
    if kind == "end_ptr":
        v = get_at(st, x)
        if not isinstance(v, Ptr) or v.box:
            raise PathMismatch(f"no pointer at {x}")
        return set_at(st, x, BOT)
    if kind == "end_loc":
        if any(isinstance(v, Ptr) and not v.box and v.l == x for _, v, _ in walk(st)):
            raise OutstandingPointers(x)
        for loc, v, _ in walk(st):
            if isinstance(v, Loc) and v.l == x:
                return set_at(st, loc, v.value)
        raise PreconditionViolated("EndLoc", x)
    raise ValueError(action)


def end_location(st: State, l: int) -> State:
    """End every pointer to l, then l itself."""
    while True:
        ptrs = [loc for loc, v, _ in walk(st) if isinstance(v, Ptr) and not v.box and v.l == l]
        if not ptrs:
            break
        st = reorganize_hlpl(st, ("end_ptr", ptrs[0]))
    return reorganize_hlpl(st, ("end_loc", l))


class HlplMachine(LlbcMachine):
    def unblock(self, st, e):
        if isinstance(e, BlockedByLocation):
            return end_location(st, e.l)
        raise StuckError(str(e), st)

    def check_movable(self, v, p):
        for x in subvalues(v):
            if x is BOT:
                raise BlockedByBot(str(p))
            if isinstance(x, Loc):
                raise BlockedByLocation(x.l)

    def eval_rvalue(self, st, rv, ty):
        if type(rv).__name__ == "New":
            v, st = self.eval_operand(st, rv.op)
            b = self.fresh()
            return Ptr(b, box=True), st.add(Binding(Heap(b), v, ty.inner if ty is not None else None, -1))
        return super().eval_rvalue(st, rv, ty)

    def borrow(self, st, rv: Ref):
        k = MUT if rv.kind == "mut" else IMM

        def attempt(s):
            loc = focus(s, rv.place, k, stop_at_loan=True)
            return loc, get_at(s, loc), s
        loc, v, st = self.access(st, attempt)
        if isinstance(v, Loc):
            return Ptr(v.l), st
        l = self.fresh()
        return Ptr(l), set_at(st, loc, Loc(l, v))

    def assign(self, st, p: Place, v):
        def attempt(s):
            loc = focus(s, p, MUT)
            old = get_at(s, loc)
            for x in subvalues(old):
                if isinstance(x, Loc):
                    raise BlockedByLocation(x.l)
            return loc, old, s
        loc, old, st = self.access(st, attempt)
        st = set_at(st, loc, v)
        return self.save_anon(st, old, self.ty(p.ty))

    def match_tag(self, st, p: Place):
        def attempt(s):
            v = get_at(s, focus(s, p, IMM))
            while isinstance(v, Loc):
                v = v.value
            if v is BOT:
                raise BlockedByBot(str(p))
            if not hasattr(v, "tag"):
                raise PathMismatch(f"match on non-sum value at {p}")
            return v.tag, s
        return self.access(st, attempt)

    def free(self, st, p: Place):
        def attempt(s):
            ptr = get_at(s, focus(s, p, MOV))
            if not (isinstance(ptr, Ptr) and ptr.box):
                raise PathMismatch(f"free of non-box at {p}")
            i = next((i for i, b in enumerate(s.env) if b.key == Heap(ptr.l)), None)
            if i is None:
                raise PathMismatch(f"double free of b{ptr.l}")
            for x in subvalues(s.env[i].value):
                if isinstance(x, Loc):
                    raise BlockedByLocation(x.l)
            return i, s
        i, st = self.access(st, attempt)
        heap = st.env[i]
        env = st.env[:i] + st.env[i + 1:]
        st = State(env, st.abs, st.stack)
        st = self.save_anon(st, heap.value, heap.ty)
        return self.access(st, lambda s: (None, set_at(s, focus(s, p, MOV), BOT)))[1]

    def pop_frame(self, st, f):
        for x, t in f.args + f.locals:
            st = self.assign(st, Place(x, (), (t,)), BOT)

        def attempt(s):
            v = s.lookup("ret")
            self.check_movable(v, "ret")
            return v, s
        v, st = self.access(st, attempt)
        from .interp_llbc import drop_frame
        return v, drop_frame(st)


def eval_rvalue_hlpl(st, rv, program=None, fresh=None, ty=None):
    return HlplMachine(program, fresh or Fresh.above(st)).eval_rvalue(st, rv, ty)


def eval_statement_hlpl(st, s, fuel: int, program=None, fresh=None, trace=None):
    return HlplMachine(program, fresh or Fresh.above(st), trace).run(st, s, fuel)
