"""Fuel-indexed big-step evaluator for LLBC, with on-demand reorganizations.

`Machine` holds the control flow shared by the three concrete semantics
(sequencing, branches, loops, calls, fuel accounting); the value-level
operations are hooks.  `LlbcMachine` implements them with loans and borrows,
and is reused by the symbolic interpreter, which adds symbolic expansion and
region abstractions on top.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .llbc_state import (
    BOT, IMM, LOANS, MOV, MUT, AccessError, Anon, Binding, BlockedByBot, BlockedByLoan,
    BlockedByReserved, BoxV, Fresh, Ignored, Lit, Marked, MoveOfLoanedValue, MutBorrow,
    MutLoan, NeedsExpansion, NotCopyable, Pair, PathMismatch, ReservedBorrow,
    SharedBorrow, SharedLoan, State, Sym, Variant, children, copy_value, find_borrows,
    find_loan, focus, get_at, is_inert, outer_loans, set_at, subvalues, walk,
)
from .syntax import (
    PE, PANIC_TAG, RETURN_TAG, UNIT, UNIT_LIT, UNIT_TAG, Assert, Assign, BinOp, BoxT,
    Break, Call, Const, Continue, Copy, Free, If, Loop, Match, MkPair, MkSum, Move, New,
    Nop, PairT, Panic, Place, Prim, Ref, Return, Seq, Tag, UnOp, Use, subst_type, unfold,
)

# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class Done:
    tag: Tag
    state: object


@dataclass(frozen=True)
class Diverge:
    pass


@dataclass(frozen=True)
class Stuck:
    reason: str
    state: object = None
    line: int = 0


class Diverged(Exception):
    pass


class StuckError(Exception):
    def __init__(self, reason: str, state=None, line: int = 0):
        super().__init__(reason)
        self.reason = reason
        self.state = state
        self.line = line


class PanicSignal(Exception):
    """Arithmetic overflow: the statement evaluates to panic."""


class PreconditionViolated(Exception):
    def __init__(self, rule: str, l, needs=None):
        super().__init__(f"{rule}({l}) not applicable" + (f", needs {needs}" if needs else ""))
        self.rule = rule
        self.l = l
        self.needs = needs


class StuckAccess(StuckError):
    pass


class MovedLoan(StuckError, MoveOfLoanedValue):
    """A move of a value whose loans cannot be ended."""


# ---------------------------------------------------------------- literals


_RANGES = {"u32": (0, 2**32 - 1), "i32": (-(2**31), 2**31 - 1)}


def apply_unop(op: str, a: Lit) -> Lit:
    if op == "not":
        if a.ty != "bool":
            raise StuckError(f"not applied to {a.ty}")
        return Lit(not a.value, "bool")
    if a.ty not in _RANGES:
        raise StuckError(f"neg applied to {a.ty}")
    r = -a.value
    lo, hi = _RANGES[a.ty]
    if not lo <= r <= hi:
        raise PanicSignal("overflow")
    return Lit(r, a.ty)


def apply_binop(op: str, a: Lit, b: Lit) -> Lit:
    if a.ty != b.ty:
        raise StuckError(f"operand types differ: {a.ty} {op} {b.ty}")
    if op == "==":
        return Lit(a.value == b.value, "bool")
    if a.ty not in _RANGES:
        raise StuckError(f"{op} applied to {a.ty}")
    if op == "<":
        return Lit(a.value < b.value, "bool")
    r = a.value + b.value if op == "+" else a.value - b.value
    lo, hi = _RANGES[a.ty]
    if not lo <= r <= hi:
        raise PanicSignal("overflow")
    return Lit(r, a.ty)


def binop_type(op: str, a, b):
    if op in ("==", "<"):
        return Prim("bool")
    for x in (a, b):
        if isinstance(x, Lit):
            return Prim(x.ty)
        if isinstance(x, Sym) and x.ty is not None:
            return x.ty
    return None


# ---------------------------------------------------------------- reorganizations


def _ancestor_need(anc):
    """Action ending the innermost borrowed value that encloses a hole."""
    for a in reversed(anc):
        if isinstance(a, MutBorrow):
            return ("end_mut", a.l)
        if isinstance(a, SharedLoan):
            return ("end_shared_loan", a.l)
    return None


def _loan_need(v):
    """Action ending the first loan (or reserved borrow) inside v."""
    for x in subvalues(v):
        if isinstance(x, MutLoan):
            return ("end_mut", x.l)
        if isinstance(x, SharedLoan):
            return ("end_shared_loan", x.l)
        if isinstance(x, ReservedBorrow):
            return ("end_shared_borrow", x.l)
    return None


def reorganize(st: State, action: tuple, fresh: Fresh | None = None) -> State:
    """Apply one reorganization rule exactly; raise PreconditionViolated if it does not apply.

    Actions: ("end_mut", l), ("end_shared_borrow", l), ("end_shared_loan", l),
    ("activate", l), ("end_abs", abstraction id).
    """
    kind, x = action
    if kind == "end_mut":
        found = [(loc, v, anc) for loc, v, anc in find_borrows(st, x) if isinstance(v, MutBorrow)]
        if not found:
            raise PreconditionViolated("EndMutBorrow", x)
        loc, v, anc = found[0]
        if loc[0][0] == "a":
            raise PreconditionViolated("EndMutBorrow", x, ("end_abs", st.abs[loc[0][1]].id))
        need = _ancestor_need(anc) or _loan_need(v.value)
        if need:
            raise PreconditionViolated("EndMutBorrow", x, need)
        lloc = find_loan(st, x)
        if lloc is None or not isinstance(get_at(st, lloc), MutLoan):
            raise PreconditionViolated("EndMutBorrow", x)
        payload = v.value
        if isinstance(payload, Ignored):
            raise PreconditionViolated("EndMutBorrow", x)
        return set_at(set_at(st, lloc, payload), loc, BOT)
    if kind == "end_shared_borrow":
        found = find_borrows(st, x)
        found = [f for f in found if isinstance(f[1], SharedBorrow)] + [f for f in found if isinstance(f[1], ReservedBorrow)]
        if not found:
            raise PreconditionViolated("EndSharedBorrow", x)
        loc, v, anc = found[0]
        if loc[0][0] == "a":
            raise PreconditionViolated("EndSharedBorrow", x, ("end_abs", st.abs[loc[0][1]].id))
        need = _ancestor_need(anc)
        if need:
            raise PreconditionViolated("EndSharedBorrow", x, need)
        return set_at(st, loc, BOT)
    if kind == "end_shared_loan":
        lloc = find_loan(st, x)
        if lloc is None or not isinstance(get_at(st, lloc), SharedLoan):
            raise PreconditionViolated("EndSharedLoan", x)
        if find_borrows(st, x):
            raise PreconditionViolated("EndSharedLoan", x, ("end_shared_borrow", x))
        return set_at(st, lloc, get_at(st, lloc).value)
    if kind == "activate":
        lloc = find_loan(st, x)
        if lloc is None or not isinstance(get_at(st, lloc), SharedLoan):
            raise PreconditionViolated("ActivateReserved", x)
        borrows = find_borrows(st, x)
        shared = [b for b in borrows if isinstance(b[1], SharedBorrow)]
        if shared:
            raise PreconditionViolated("ActivateReserved", x, ("end_shared_borrow", x))
        reserved = [b for b in borrows if isinstance(b[1], ReservedBorrow)]
        if len(reserved) != 1:
            raise PreconditionViolated("ActivateReserved", x)
        bloc, _, anc = reserved[0]
        if bloc[0][0] == "a":
            raise PreconditionViolated("ActivateReserved", x, ("end_abs", st.abs[bloc[0][1]].id))
        for a in reversed(anc):
            if isinstance(a, SharedLoan):
                raise PreconditionViolated("ActivateReserved", x, ("end_shared_loan", a.l))
        payload = get_at(st, lloc).value
        need = _loan_need(payload)
        if need:
            raise PreconditionViolated("ActivateReserved", x, need)
        return set_at(set_at(st, lloc, MutLoan(x)), bloc, MutBorrow(x, payload))
    if kind == "end_abs":
        return end_abstraction(st, x, fresh)
    raise ValueError(action)


def end_abstraction(st: State, aid: int, fresh: Fresh) -> State:
    """Remove a loan-free abstraction, handing its borrows back as anonymous bindings."""
    a = st.find_abs(aid)
    for e in a.elems:
        for v in subvalues(e):
            if isinstance(v, MutLoan):
                raise PreconditionViolated("EndAbstraction", aid, ("end_mut", v.l))
            if isinstance(v, SharedLoan):
                raise PreconditionViolated("EndAbstraction", aid, ("end_shared_loan", v.l))
    st = st.remove_abs(aid)
    for e in a.elems:
        if isinstance(e, Marked):
            e = e.value
        for v in subvalues(e):
            if isinstance(v, MutBorrow):
                ty = v.value.ty if isinstance(v.value, Ignored) else None
                payload = Sym(fresh(), ty) if isinstance(v.value, Ignored) else v.value
                st = st.add(Binding(Anon(fresh()), MutBorrow(v.l, payload), None, st.depth))
            elif isinstance(v, SharedBorrow):
                st = st.add(Binding(Anon(fresh()), v, None, st.depth))
    return st


def perform(st: State, action: tuple, fresh: Fresh, chain: tuple = (), budget: list | None = None,
            hook=None) -> State:
    """Apply an action, first performing whatever it needs (lazy strategy).

    hook(action, state) is called after every rule application, innermost first.
    """
    if action in chain:
        raise StuckAccess(f"cyclic dependency while ending {_fmt_action(action)}: "
                          + " -> ".join(_fmt_action(a) for a in chain + (action,)), st)
    budget = budget if budget is not None else [2000]
    while True:
        budget[0] -= 1
        if budget[0] < 0:
            raise StuckAccess("reorganization budget exhausted", st)
        try:
            st = reorganize(st, action, fresh)
        except PreconditionViolated as e:
            if e.needs is None:
                raise StuckAccess(f"cannot apply {_fmt_action(action)}", st) from None
            st = perform(st, e.needs, fresh, chain + (action,), budget, hook)
            continue
        if hook:
            hook(action, st)
        return st


def _fmt_action(a) -> str:
    names = {"end_mut": "EndMutBorrow", "end_shared_borrow": "EndSharedBorrow",
             "end_shared_loan": "EndSharedLoan", "activate": "ActivateReserved", "end_abs": "EndAbstraction"}
    return f"{names.get(a[0], a[0])}({'A' if a[0] == 'end_abs' else 'l'}{a[1]})"


# ---------------------------------------------------------------- shared control flow


class Machine:
    """Concrete big-step statement evaluation with fuel; value operations are hooks."""

    def __init__(self, program, fresh: Fresh | None = None, trace=None, on_step=None):
        self.program = program
        self.fresh = fresh or Fresh()
        self.trace = trace
        self.on_step = on_step
        self.tsubst = [{}]

    # hooks -------------------------------------------------------
    def eval_rvalue(self, st, rv, ty):
        raise NotImplementedError

    def eval_operand(self, st, op):
        raise NotImplementedError

    def assign(self, st, p: Place, v):
        raise NotImplementedError

    def match_tag(self, st, p: Place):
        raise NotImplementedError

    def free(self, st, p: Place):
        raise NotImplementedError

    def push_frame(self, st, f, argvals):
        raise NotImplementedError

    def pop_frame(self, st, f):
        raise NotImplementedError

    # helpers -----------------------------------------------------
    def ty(self, t):
        return subst_type(t, self.tsubst[-1]) if t is not None else None

    def truth(self, v) -> bool:
        while isinstance(v, SharedLoan):
            v = v.value
        if not isinstance(v, Lit) or v.ty != "bool":
            raise StuckError(f"condition is not a boolean: {v}")
        return bool(v.value)

    # entry points ------------------------------------------------
    def run(self, st, s, fuel: int):
        try:
            tag, st = self.exec(st, s, fuel)
            return Done(tag, st)
        except Diverged:
            return Diverge()
        except StuckError as e:
            return Stuck(e.reason, e.state, e.line)

    def exec(self, st, s, fuel: int):
        if fuel <= 0:
            raise Diverged()
        if self.trace and not isinstance(s, Seq):
            self.trace(s, st)
        try:
            out = self._exec(st, s, fuel)
        except StuckError as e:
            if not e.line:
                e.line = getattr(s, "line", 0)
            if e.state is None:
                e.state = st
            raise
        except AccessError as e:
            raise StuckError(str(e), st, getattr(s, "line", 0)) from None
        if self.on_step and not isinstance(s, Seq):
            self.on_step(s, out[1])
        return out

    def _exec(self, st, s, fuel):
        if isinstance(s, Seq):
            for x in s.stmts:
                tag, st = self.exec(st, x, fuel)
                if tag != UNIT_TAG:
                    return tag, st
            return UNIT_TAG, st
        if isinstance(s, Nop):
            return UNIT_TAG, st
        if isinstance(s, Assign):
            try:
                v, st = self.eval_rvalue(st, s.rv, self.ty(s.place.ty))
            except PanicSignal:
                return PANIC_TAG, st
            return UNIT_TAG, self.assign(st, s.place, v)
        if isinstance(s, (If, Assert)):
            try:
                v, st = self.eval_rvalue(st, s.cond, Prim("bool"))
            except PanicSignal:
                return PANIC_TAG, st
            if isinstance(s, Assert):
                return (UNIT_TAG, st) if self.truth(v) else (PANIC_TAG, st)
            return self.exec(st, s.then if self.truth(v) else s.els, fuel)
        if isinstance(s, Match):
            tag, st = self.match_tag(st, s.place)
            return self.exec(st, s.left if tag == 0 else s.right, fuel)
        if isinstance(s, Free):
            return UNIT_TAG, self.free(st, s.place)
        if isinstance(s, Return):
            return RETURN_TAG, st
        if isinstance(s, Panic):
            return PANIC_TAG, st
        if isinstance(s, Break):
            return Tag("break", s.depth), st
        if isinstance(s, Continue):
            return Tag("continue", s.depth), st
        if isinstance(s, Loop):
            while True:
                fuel -= 1
                tag, st = self.exec(st, s.body, fuel)
                if tag == UNIT_TAG or tag == Tag("continue", 0):
                    continue
                if tag == Tag("break", 0):
                    return UNIT_TAG, st
                if tag.kind in ("break", "continue"):
                    return Tag(tag.kind, tag.depth - 1), st
                return tag, st
        if isinstance(s, Call):
            return self.call(st, s, fuel)
        raise TypeError(s)

    def call(self, st, s: Call, fuel):
        f = self.program.funs[s.fn]
        vals = []
        for a in s.args:
            v, st = self.eval_operand(st, a)
            vals.append(v)
        self.tsubst.append({n: self.ty(t) for n, t in zip(f.tparams, s.targs)})
        try:
            st = self.push_frame(st, f, vals)
            tag, st = self.exec(st, f.body, fuel - 1)
            if tag == PANIC_TAG:
                return PANIC_TAG, st
            if tag not in (RETURN_TAG, UNIT_TAG):
                raise StuckError(f"{tag} escapes function {f.name}", st)
            v, st = self.pop_frame(st, f)
        finally:
            self.tsubst.pop()
        return UNIT_TAG, self.assign(st, s.dest, v)


# ---------------------------------------------------------------- LLBC


class LlbcMachine(Machine):
    """LLBC values: loans, borrows, boxes; reorganizations on demand."""

    symbolic = False
    lazy = True  # False: no reorganization, every blocked access is stuck
    on_reorg = None

    def access(self, st, attempt):
        """Run attempt(st), ending borrows/loans it is blocked on until it succeeds."""
        for _ in range(10000):
            try:
                return attempt(st)
            except AccessError as e:
                if not e.fixable or not self.lazy:
                    raise StuckError(str(e), st) from None
                try:
                    st = self.unblock(st, e)
                except StuckError as err:
                    if isinstance(e, MoveOfLoanedValue):
                        raise MovedLoan(f"{e}: {err.reason}", err.state) from None
                    raise
        raise StuckError("too many reorganizations", st)

    def unblock(self, st, e):
        if isinstance(e, BlockedByLoan):
            return perform(st, ("end_shared_loan" if e.shared else "end_mut", e.l), self.fresh, hook=self.on_reorg)
        if isinstance(e, BlockedByReserved):
            return perform(st, ("activate", e.l), self.fresh, hook=self.on_reorg)
        if isinstance(e, NeedsExpansion):
            return self.expand(st, e.loc, e.sym)
        raise StuckError(str(e), st)

    def expand(self, st, loc, sym: Sym):
        ty = unfold(sym.ty) if sym.ty is not None else None
        if isinstance(ty, PairT):
            return set_at(st, loc, Pair(Sym(self.fresh(), ty.fst), Sym(self.fresh(), ty.snd)))
        if isinstance(ty, BoxT):
            return set_at(st, loc, BoxV(Sym(self.fresh(), ty.inner)))
        raise StuckError(f"cannot expand symbolic value of type {sym.ty} here", st)

    def fresh_sym(self, v: Sym):
        return Sym(self.fresh(), v.ty)

    # operands ----------------------------------------------------
    def eval_operand(self, st, op):
        if isinstance(op, Const):
            return op.lit, st
        if isinstance(op, Copy):
            def attempt(s):
                v = get_at(s, focus(s, op.place, IMM))
                for x in subvalues(v):
                    if isinstance(x, MutLoan):
                        raise BlockedByLoan(x.l)
                    if x is BOT:
                        raise BlockedByBot(str(op.place))
                return copy_value(v, self.fresh_sym), s
            return self.access(st, attempt)
        if isinstance(op, Move):
            def attempt(s):
                try:
                    loc = focus(s, op.place, MOV)
                except BlockedByLoan as e:
                    raise MoveOfLoanedValue_(e.l, e.shared, op.place) from None
                v = get_at(s, loc)
                self.check_movable(v, op.place)
                return v, set_at(s, loc, BOT)
            return self.access(st, attempt)
        raise TypeError(op)

    def check_movable(self, v, p):
        for x in subvalues(v):
            if x is BOT:
                raise BlockedByBot(str(p))
            if isinstance(x, LOANS):
                raise MoveOfLoanedValue_(x.l, isinstance(x, SharedLoan), p)
            if isinstance(x, ReservedBorrow):
                raise BlockedByReserved(x.l)
            if isinstance(x, Ignored):
                raise PathMismatch(f"move of ignored value at {p}")

    def eval_rvalue(self, st, rv, ty):
        if isinstance(rv, Use):
            return self.eval_operand(st, rv.op)
        if isinstance(rv, UnOp):
            v, st = self.eval_operand(st, rv.arg)
            if isinstance(v, Sym):
                return Sym(self.fresh(), Prim("bool") if rv.op == "not" else v.ty), st
            return apply_unop(rv.op, v), st
        if isinstance(rv, BinOp):
            a, st = self.eval_operand(st, rv.lhs)
            b, st = self.eval_operand(st, rv.rhs)
            if isinstance(a, Sym) or isinstance(b, Sym):
                return Sym(self.fresh(), binop_type(rv.op, a, b)), st
            return apply_binop(rv.op, a, b), st
        if isinstance(rv, New):
            v, st = self.eval_operand(st, rv.op)
            return BoxV(v), st
        if isinstance(rv, MkPair):
            a, st = self.eval_operand(st, rv.fst)
            b, st = self.eval_operand(st, rv.snd)
            return Pair(a, b), st
        if isinstance(rv, MkSum):
            v, st = self.eval_operand(st, rv.op)
            return Variant(rv.tag, v), st
        if isinstance(rv, Ref):
            return self.borrow(st, rv)
        raise TypeError(rv)

    def borrow(self, st, rv: Ref):
        p = rv.place
        if rv.kind == "mut":
            def attempt(s):
                loc = focus(s, p, MUT)
                v = get_at(s, loc)
                for x in subvalues(v):
                    if x is BOT:
                        raise BlockedByBot(str(p))
                    if isinstance(x, LOANS):
                        raise BlockedByLoan(x.l, isinstance(x, SharedLoan))
                    if isinstance(x, ReservedBorrow):
                        raise BlockedByReserved(x.l)
                return loc, v, s
            loc, v, st = self.access(st, attempt)
            l = self.fresh()
            return MutBorrow(l, v), set_at(st, loc, MutLoan(l))

        def attempt(s):
            loc = focus(s, p, IMM, stop_at_loan=True)
            v = get_at(s, loc)
            for x in subvalues(v):
                if x is BOT:
                    raise BlockedByBot(str(p))
                if isinstance(x, MutLoan):
                    raise BlockedByLoan(x.l)
                if isinstance(x, ReservedBorrow):
                    raise BlockedByReserved(x.l)
            return loc, v, s
        loc, v, st = self.access(st, attempt)
        mk = SharedBorrow if rv.kind == "shared" else ReservedBorrow
        if isinstance(v, SharedLoan):
            return mk(v.l), st
        l = self.fresh()
        return mk(l), set_at(st, loc, SharedLoan(l, v))

    # statements --------------------------------------------------
    def assign(self, st, p: Place, v):
        def attempt(s):
            loc = focus(s, p, MUT)
            old = get_at(s, loc)
            for x in outer_loans(old):
                raise BlockedByLoan(x.l, isinstance(x, SharedLoan))
            return loc, old, s
        loc, old, st = self.access(st, attempt)
        st = set_at(st, loc, v)
        return self.save_anon(st, old, self.ty(p.ty))

    def save_anon(self, st, v, ty):
        # overwritten values that nothing can refer to are not worth a slot
        if is_inert(v):
            return st
        return st.add(Binding(Anon(self.fresh()), v, ty, st.depth))

    def match_tag(self, st, p: Place):
        def attempt(s):
            v = get_at(s, focus(s, p, IMM))
            while isinstance(v, SharedLoan):
                v = v.value
            if isinstance(v, MutLoan):
                raise BlockedByLoan(v.l)
            if isinstance(v, Variant):
                return v.tag, s
            if v is BOT:
                raise BlockedByBot(str(p))
            raise PathMismatch(f"match on non-sum value at {p}")
        return self.access(st, attempt)

    def free(self, st, p: Place):
        def attempt(s):
            loc = focus(s, p, MOV)
            v = get_at(s, loc)
            if isinstance(v, Sym):
                raise NeedsExpansion(loc, v)
            if not isinstance(v, BoxV):
                raise PathMismatch(f"free of non-box at {p}")
            return None, s
        _, st = self.access(st, attempt)
        inner = Place(p.base, p.path + (PE.DEREF,), (p.types + (unfold(p.ty).inner,)) if p.types else None)
        st = self.assign(st, inner, BOT)

        def clear(s):
            return None, set_at(s, focus(s, p, MOV), BOT)
        return self.access(st, clear)[1]

    def init_value(self, ty):
        return UNIT_LIT if ty == UNIT else BOT

    def push_frame(self, st, f, argvals):
        depth = len(st.stack)
        names = ("ret",) + tuple(x for x, _ in f.args) + tuple(x for x, _ in f.locals)
        env = list(st.env)
        ret_ty = self.ty(f.ret)
        env.append(Binding("ret", self.init_value(ret_ty), ret_ty, depth))
        for (x, t), v in zip(f.args, argvals):
            env.append(Binding(x, v, self.ty(t), depth))
        for x, t in f.locals:
            env.append(Binding(x, BOT, self.ty(t), depth))
        return State(tuple(env), st.abs, st.stack + (names,))

    def pop_frame(self, st, f):
        for x, t in f.args + f.locals:
            st = self.assign(st, Place(x, (), (t,)), BOT)

        def attempt(s):
            v = s.lookup("ret")
            for x in subvalues(v):
                if x is BOT:
                    raise BlockedByBot("ret")
                if isinstance(x, LOANS):
                    raise BlockedByLoan(x.l, isinstance(x, SharedLoan))
                if isinstance(x, ReservedBorrow):
                    raise BlockedByReserved(x.l)
            return v, s
        v, st = self.access(st, attempt)
        return v, drop_frame(st)


def drop_frame(st: State) -> State:
    top = st.depth
    env = []
    for b in st.env:
        if b.frame != top:
            env.append(b)
        elif isinstance(b.key, Anon) and not is_inert(b.value):
            env.append(replace(b, frame=top - 1))
    return State(tuple(env), st.abs, st.stack[:-1])


class MoveOfLoanedValue_(MoveOfLoanedValue, BlockedByLoan):
    """E-Move premise failure; fixable by ending the loan."""

    fixable = True

    def __init__(self, l, shared, p):
        BlockedByLoan.__init__(self, l, shared)
        self.args = (f"move of loaned value at {p} (l{l})",)


# ---------------------------------------------------------------- module-level API


def eval_operand(st, op, program=None, fresh=None):
    return LlbcMachine(program, fresh or Fresh.above(st)).eval_operand(st, op)


def eval_rvalue(st, rv, program=None, fresh=None, ty=None):
    return LlbcMachine(program, fresh or Fresh.above(st)).eval_rvalue(st, rv, ty)


def resolve_access(st, p: Place, k: str, fresh=None):
    """Reorganize st lazily until p is accessible at capability k."""
    m = LlbcMachine(None, fresh or Fresh.above(st))
    return m.access(st, lambda s: (None, (focus(s, p, k), s)[1]))[1]


def eval_statement(st, s, fuel: int, program=None, fresh=None, trace=None):
    return LlbcMachine(program, fresh or Fresh.above(st), trace).run(st, s, fuel)
