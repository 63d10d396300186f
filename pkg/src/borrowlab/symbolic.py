"""Symbolic execution with region abstractions: the borrow checker.

Functions are checked one at a time against their signature.  Calls are
not followed: the callee's signature decides which borrows the caller gives
up (they go into a fresh region abstraction) and what it gets back (fresh
borrows whose loans sit in that abstraction).  Branching on an unknown value
explores both sides; the results are joined at the end of the branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .interp_llbc import (
    LlbcMachine, PanicSignal, PreconditionViolated, StuckError, end_abstraction as _end_abs,
    perform,
)
from .llbc_state import (
    BOT, IMM, AccessError, Abstraction, Binding, BoxV, Fresh, Ignored, Lit, MutBorrow, MutLoan,
    Pair, SharedBorrow, SharedLoan, State, Sym, Variant, find_loan, focus, get_at, has_borrows,
    map_value, outer_loans, set_at,
)
from .syntax import (
    RecT,
    BOOL, PANIC_TAG, RETURN_TAG, UNIT, UNIT_LIT, UNIT_TAG, Assert, Assign, BoxT, Break, Call,
    Continue, Copy, Free, If, Loop, Match, Move, Nop, PairT, Panic, Place, Prim, RefT, Return,
    Seq, SumT, Tag, TVar, Use, has_borrows_type, subst_type, unfold,
)


class BorrowCheckError(StuckError):
    pass


class NestedBorrowUnsupported(Exception):
    pass


class MissingSharedLoan(Exception):
    def __init__(self, l):
        super().__init__(f"no shared loan for borrow l{l}")
        self.l = l


class AbstractionHasLoans(Exception):
    def __init__(self, loans):
        super().__init__("abstraction still holds loans " + ", ".join(f"l{l}" for l in loans))
        self.loans = loans


class ShapeMismatch(Exception):
    pass


# ---------------------------------------------------------------- state helpers


def substitute(st: State, sid: int, w) -> State:
    """Replace every occurrence of symbolic value sid by w."""
    def f(v):
        return w if isinstance(v, Sym) and v.id == sid else v

    def sub(v):
        return map_value(v, f)
    env = tuple(b if sid not in _sym_ids(b.value) else Binding(b.key, sub(b.value), b.ty, b.frame) for b in st.env)
    abss = tuple(Abstraction(a.id, tuple(sub(e) for e in a.elems), a.region) for a in st.abs)
    return State(env, abss, st.stack)


def _sym_ids(v) -> set:
    from .llbc_state import subvalues
    return {x.id for x in subvalues(v) if isinstance(x, Sym)}


def expand_symbolic(st: State, sym: Sym, shape: str, fresh: Fresh):
    """Pair/box expand in place; bool/sum split into two states."""
    ty = unfold(sym.ty) if sym.ty is not None else None
    if shape == "pair":
        if not isinstance(ty, PairT):
            raise ShapeMismatch(f"s{sym.id} is not a pair")
        return substitute(st, sym.id, Pair(Sym(fresh(), ty.fst), Sym(fresh(), ty.snd)))
    if shape == "box":
        if not isinstance(ty, BoxT):
            raise ShapeMismatch(f"s{sym.id} is not a box")
        return substitute(st, sym.id, BoxV(Sym(fresh(), ty.inner)))
    if shape == "bool":
        if ty is not None and ty != BOOL:
            raise ShapeMismatch(f"s{sym.id} is not a boolean")
        return substitute(st, sym.id, Lit(True, "bool")), substitute(st, sym.id, Lit(False, "bool"))
    if shape == "sum":
        if not isinstance(ty, SumT):
            raise ShapeMismatch(f"s{sym.id} is not a sum")
        return (substitute(st, sym.id, Variant(0, Sym(fresh(), ty.left))),
                substitute(st, sym.id, Variant(1, Sym(fresh(), ty.right))))
    raise ShapeMismatch(shape)


def end_abstraction(st: State, aid: int, fresh: Fresh) -> State:
    """End a loan-free abstraction; its borrows come back as anonymous bindings."""
    a = st.find_abs(aid)
    loans = [x.l for e in a.elems for x in _subs(e) if isinstance(x, (MutLoan, SharedLoan))]
    if loans:
        raise AbstractionHasLoans(loans)
    return _end_abs(st, aid, fresh)


def _subs(v):
    from .llbc_state import subvalues
    return subvalues(v)


# ---------------------------------------------------------------- signatures


def _regions_in(ty) -> set:
    if isinstance(ty, RecT):
        return _regions_in(ty.body)
    if isinstance(ty, RefT):
        return {ty.region} | _regions_in(ty.inner)
    if isinstance(ty, PairT):
        return _regions_in(ty.fst) | _regions_in(ty.snd)
    if isinstance(ty, SumT):
        return _regions_in(ty.left) | _regions_in(ty.right)
    if isinstance(ty, BoxT):
        return _regions_in(ty.inner)
    return set()


def proj_input(region: str, v, ty) -> list:
    """The part of argument v (of type ty) owned by region: borrows with ignored payloads."""
    if region not in _regions_in(ty):
        return []
    t = unfold(ty)
    if isinstance(t, PairT):
        if not isinstance(v, Pair):
            raise NestedBorrowUnsupported(f"argument of type {ty} is not a pair value")
        return proj_input(region, v.fst, t.fst) + proj_input(region, v.snd, t.snd)
    if isinstance(t, RefT) and t.region == region and not has_borrows_type(t.inner):
        if t.mut:
            if not isinstance(v, MutBorrow):
                raise NestedBorrowUnsupported(f"expected a mutable borrow for {ty}")
            if has_borrows(v.value):
                raise NestedBorrowUnsupported(f"borrow l{v.l} holds borrows")
            return [MutBorrow(v.l, Ignored(t.inner))]
        if not isinstance(v, SharedBorrow):
            raise NestedBorrowUnsupported(f"expected a shared borrow for {ty}")
        return [SharedBorrow(v.l)]
    raise NestedBorrowUnsupported(f"region {region} nested inside {ty}")


def proj_output(ty, fresh: Fresh, out: dict):
    """Fresh value of type ty; loans of its borrows are added to out[region]."""
    t = unfold(ty) if ty is not None else None
    if not has_borrows_type(ty):
        return Sym(fresh(), ty)
    if isinstance(t, PairT):
        return Pair(proj_output(t.fst, fresh, out), proj_output(t.snd, fresh, out))
    if isinstance(t, RefT) and not has_borrows_type(t.inner):
        l = fresh()
        s = Sym(fresh(), t.inner)
        if t.mut:
            out.setdefault(t.region, []).append(MutLoan(l))
            return MutBorrow(l, s)
        out.setdefault(t.region, []).append(SharedLoan(l, s))
        return SharedBorrow(l)
    raise NestedBorrowUnsupported(f"unsupported borrow structure in {ty}")


def init_extern(ty, fresh: Fresh, out: dict):
    """Borrows standing for the caller's side of each input borrow."""
    t = unfold(ty) if ty is not None else None
    if not has_borrows_type(ty):
        return
    if isinstance(t, PairT):
        init_extern(t.fst, fresh, out)
        init_extern(t.snd, fresh, out)
        return
    if isinstance(t, RefT) and not has_borrows_type(t.inner):
        l = fresh()
        out.setdefault(t.region, []).append(MutBorrow(l, Ignored(t.inner)) if t.mut else SharedBorrow(l))
        return
    raise NestedBorrowUnsupported(f"unsupported borrow structure in {ty}")


def inst_sig(st: State, f, argvals, fresh: Fresh, tsubst: dict | None = None):
    """Abstractions and output value for a call of f on argvals."""
    tsubst = tsubst or {}
    for v in argvals:
        for x in _subs(v):
            if isinstance(x, SharedBorrow):
                loc = find_loan(st, x.l)
                if loc is None or not isinstance(get_at(st, loc), SharedLoan):
                    raise MissingSharedLoan(x.l)
    arg_tys = [subst_type(t, tsubst) for _, t in f.args]
    outs = {}
    vout = proj_output(subst_type(f.ret, tsubst), fresh, outs)
    abss = []
    for r in f.regions:
        elems = []
        for v, t in zip(argvals, arg_tys):
            elems.extend(proj_input(r, v, t))
        elems.extend(outs.get(r, []))
        if elems:
            abss.append(Abstraction(fresh(), tuple(elems), r))
    return abss, vout


def init_signature(f, fresh: Fresh, ext: dict | None = None):
    """(input values, abstractions, external borrows per region)."""
    if ext is None:
        ext = {}
        for _, t in f.args:
            init_extern(t, fresh, ext)
    loans = {}
    vals = [proj_output(t, fresh, loans) for _, t in f.args]
    abss = []
    for r in f.regions:
        elems = list(ext.get(r, [])) + loans.get(r, [])
        if elems:
            abss.append(Abstraction(fresh(), tuple(elems), r))
    return vals, abss, ext


def final_signature(f, fresh: Fresh, ext: dict):
    loans = {}
    vout = proj_output(f.ret, fresh, loans)
    abss = []
    for r in f.regions:
        elems = list(ext.get(r, [])) + loans.get(r, [])
        if elems:
            abss.append(Abstraction(fresh(), tuple(elems), r))
    return vout, abss


def _frame_env(f, ret, args, locals_):
    env = [Binding("ret", ret, f.ret, 0)]
    env += [Binding(x, v, t, 0) for (x, t), v in zip(f.args, args)]
    env += [Binding(x, v, t, 0) for (x, t), v in zip(f.locals, locals_)]
    names = ("ret",) + tuple(x for x, _ in f.args) + tuple(x for x, _ in f.locals)
    return env, (names,)


def signature_states(f, fresh: Fresh):
    """Entry and exit states of f's signature, sharing the external borrows."""
    vals, abss, ext = init_signature(f, fresh)
    ret0 = UNIT_LIT if f.ret == UNIT else BOT
    env, stack = _frame_env(f, ret0, vals, [BOT] * len(f.locals))
    s0 = State(tuple(env), tuple(abss), stack)
    vout, abss1 = final_signature(f, fresh, ext)
    env, stack = _frame_env(f, vout, [BOT] * len(f.args), [BOT] * len(f.locals))
    s1 = State(tuple(env), tuple(abss1), stack)
    return s0, s1


# ---------------------------------------------------------------- the machine


class SymbolicMachine(LlbcMachine):
    """Set-valued statement evaluation over symbolic states."""

    symbolic = True

    def __init__(self, program, fresh: Fresh | None = None, branch: str = "join", precise: bool = False,
                 max_iters: int = 10, trace=None, on_reorg=None, on_join=None, on_step=None, on_loop=None, on_iter=None):
        super().__init__(program, fresh, trace, on_step)
        self.branch = branch
        self.precise = precise
        self.max_iters = max_iters
        self.on_reorg = on_reorg
        self.on_join = on_join
        self.on_loop = on_loop
        self.on_iter = on_iter
        self.loop_joins = []

    # joins --------------------------------------------------------
    def merge(self, outs):
        """Join the Unit-tagged states (join mode); other tags are kept apart."""
        units = [st for tag, st in outs if tag == UNIT_TAG]
        if self.branch != "join" or len(units) < 2:
            return outs
        from .join import JoinFailed, ResidualMarkers, join_collapse
        try:
            acc = units[0]
            for st in units[1:]:
                acc = join_collapse(acc, st, self.fresh, self.precise, self.on_join)
        except (JoinFailed, ResidualMarkers):
            return outs
        return [(UNIT_TAG, acc)] + [(t, st) for t, st in outs if t != UNIT_TAG]

    # evaluation ---------------------------------------------------
    def exec_set(self, st, s):
        if self.trace and not isinstance(s, Seq):
            self.trace(s, st)
        try:
            outs = self._exec_set(st, s)
        except BorrowCheckError:
            raise
        except StuckError as e:
            raise BorrowCheckError(e.reason, e.state if e.state is not None else st,
                                   e.line or getattr(s, "line", 0)) from None
        except AccessError as e:
            raise BorrowCheckError(str(e), st, getattr(s, "line", 0)) from None
        except (MissingSharedLoan, NestedBorrowUnsupported, ShapeMismatch) as e:
            raise BorrowCheckError(str(e), st, getattr(s, "line", 0)) from None
        if self.on_step and not isinstance(s, Seq):
            for _, out in outs:
                self.on_step(s, out)
        return outs

    def _exec_set(self, st, s):
        if isinstance(s, Seq):
            states = [(UNIT_TAG, st)]
            for x in s.stmts:
                nxt = []
                for tag, cur in states:
                    if tag != UNIT_TAG:
                        nxt.append((tag, cur))
                    else:
                        nxt.extend(self.exec_set(cur, x))
                states = self.merge(nxt)
            return states
        if isinstance(s, Nop):
            return [(UNIT_TAG, st)]
        if isinstance(s, Return):
            return [(RETURN_TAG, st)]
        if isinstance(s, Panic):
            return [(PANIC_TAG, st)]
        if isinstance(s, Break):
            return [(Tag("break", s.depth), st)]
        if isinstance(s, Continue):
            return [(Tag("continue", s.depth), st)]
        if isinstance(s, Assign):
            try:
                v, st = self.eval_rvalue(st, s.rv, self.ty(s.place.ty))
            except PanicSignal:
                return [(PANIC_TAG, st)]
            return [(UNIT_TAG, self.assign(st, s.place, v))]
        if isinstance(s, Free):
            return [(UNIT_TAG, self.free(st, s.place))]
        if isinstance(s, (If, Assert)):
            orig = self._cond_sym(st, s.cond)
            try:
                v, st = self.eval_rvalue(st, s.cond, BOOL)
            except PanicSignal:
                return [(PANIC_TAG, st)]
            if isinstance(v, Sym):
                branches = []
                for val in (True, False):
                    b = substitute(st, v.id, Lit(val, "bool"))
                    if orig is not None:
                        b = substitute(b, orig, Lit(val, "bool"))
                    branches.append((val, b))
            else:
                branches = [(self.truth(v), st)]
            outs = []
            for val, b in branches:
                if isinstance(s, Assert):
                    outs.append((UNIT_TAG if val else PANIC_TAG, b))
                else:
                    outs.extend(self.exec_set(b, s.then if val else s.els))
            return self.merge(outs) if isinstance(s, If) else outs
        if isinstance(s, Match):
            outs = []
            for tag, b in self._match_branches(st, s.place):
                outs.extend(self.exec_set(b, s.left if tag == 0 else s.right))
            return self.merge(outs)
        if isinstance(s, Loop):
            from .join import loop_fixpoint
            fix, exits, joins = loop_fixpoint(self, st, s.body, self.max_iters, self.on_iter)
            self.loop_joins.append(joins)
            if self.on_loop:
                self.on_loop(s, fix, joins)
            return exits
        if isinstance(s, Call):
            return [(UNIT_TAG, self.call_symbolic(st, s))]
        raise TypeError(s)

    def _cond_sym(self, st, cond):
        """Id of the symbolic value a condition reads directly, if any."""
        if isinstance(cond, Use) and isinstance(cond.op, (Copy, Move)):
            try:
                v = get_at(st, focus(st, cond.op.place, IMM))
            except AccessError:
                return None
            while isinstance(v, SharedLoan):
                v = v.value
            if isinstance(v, Sym):
                return v.id
        return None

    def _match_branches(self, st, p: Place):
        def attempt(s):
            v = get_at(s, focus(s, p, IMM))
            while isinstance(v, SharedLoan):
                v = v.value
            if isinstance(v, MutLoan):
                from .llbc_state import BlockedByLoan
                raise BlockedByLoan(v.l)
            return v, s
        v, st = self.access(st, attempt)
        if isinstance(v, Sym):
            left, right = expand_symbolic(st, v, "sum", self.fresh)
            return [(0, left), (1, right)]
        if isinstance(v, Variant):
            return [(v.tag, st)]
        tag, st = self.match_tag(st, p)
        return [(tag, st)]

    def call_symbolic(self, st, s: Call):
        f = self.program.funs[s.fn]
        vals = []
        for a in s.args:
            v, st = self.eval_operand(st, a)
            vals.append(v)
        tsubst = {n: self.ty(t) for n, t in zip(f.tparams, s.targs)}
        abss, vout = inst_sig(st, f, vals, self.fresh, tsubst)
        st = st.add_abs(*abss)
        return self.assign(st, s.dest, vout)

    def exec(self, st, s, fuel=None):
        outs = self.exec_set(st, s)
        if len(outs) != 1:
            raise BorrowCheckError("statement has several outcomes; use exec_set", st)
        return outs[0]


def eval_statement_symbolic(st: State, s, program=None, fresh=None, branch: str = "join", **kw):
    """Tagged result states of s from st."""
    m = SymbolicMachine(program, fresh or Fresh.above(st), branch, **kw)
    return m.exec_set(st, s)


# ---------------------------------------------------------------- borrow checking


@dataclass
class Branch:
    tag: Tag
    ok: bool
    state: State
    reason: str = ""
    derivation: object = None


@dataclass
class Report:
    fn: str
    ok: bool
    branches: list = field(default_factory=list)
    error: str = ""
    line: int = 0
    state: State | None = None
    init: State | None = None
    final: State | None = None
    joins: list = field(default_factory=list)

    def render(self, explain: bool = False) -> str:
        from .pretty import format_state
        lines = [f"{self.fn}: {'ok' if self.ok else 'REJECTED'}"]
        if self.error:
            where = f" (line {self.line})" if self.line else ""
            lines.append(f"  stuck{where}: {self.error}")
            if self.state is not None:
                lines += ["    " + x for x in format_state(self.state).splitlines()]
        for i, b in enumerate(self.branches):
            lines.append(f"  branch {i}: {b.tag} -> {'ok' if b.ok else 'fail'}" + (f": {b.reason}" if b.reason else ""))
            if not b.ok:
                lines += ["    " + x for x in format_state(b.state).splitlines()]
            elif explain and b.derivation is not None:
                lines.append(b.derivation.render())
        return "\n".join(lines)


def end_outer_loans(st: State, names, fresh: Fresh, hook=None) -> State:
    """End every outer loan held by the given variables."""
    for x in names:
        while True:
            ol = outer_loans(st.lookup(x))
            if not ol:
                break
            l = ol[0]
            st = perform(st, ("end_shared_loan" if isinstance(l, SharedLoan) else "end_mut", l.l), fresh, hook=hook)
    return st


def borrow_checks(program, fname: str, branch: str = "join", precise: bool = False, max_iters: int = 10,
                  on_join=None, on_step=None, on_reorg=None, trace=None, on_iter=None, on_loop=None) -> Report:
    """Check fname's body against its signature."""
    from .subsume import SubsumptionFailed, subsumes
    f = program.funs[fname]
    fresh = Fresh()
    try:
        s0, s1 = signature_states(f, fresh)
    except NestedBorrowUnsupported as e:
        return Report(fname, False, error=str(e))
    m = SymbolicMachine(program, fresh, branch, precise, max_iters, trace=trace, on_reorg=on_reorg,
                        on_join=on_join, on_step=on_step, on_loop=on_loop, on_iter=on_iter)
    report = Report(fname, True, init=s0, final=s1)
    from .join import JoinFailed, NoConvergence, ResidualMarkers
    try:
        outs = m.exec_set(s0, f.body)
    except BorrowCheckError as e:
        report.ok, report.error, report.line, report.state = False, e.reason, e.line, e.state
        return report
    except (JoinFailed, NoConvergence, ResidualMarkers) as e:
        report.ok, report.error = False, f"{type(e).__name__}: {e}"
        return report
    report.joins = m.loop_joins
    locals_ = [x for x, _ in f.args] + [x for x, _ in f.locals]
    for tag, st in outs:
        if tag == PANIC_TAG:
            report.branches.append(Branch(tag, True, st))
            continue
        if tag not in (RETURN_TAG, UNIT_TAG):
            report.branches.append(Branch(tag, False, st, f"{tag} escapes the function body"))
            continue
        try:
            st2 = end_outer_loans(st, locals_, fresh)
            d = subsumes(st2, s1, Fresh(max(fresh.last + 1, 0)))
            report.branches.append(Branch(tag, True, st2, derivation=d))
        except StuckError as e:
            report.branches.append(Branch(tag, False, st, f"cannot end local loans: {e.reason}"))
        except SubsumptionFailed as e:
            report.branches.append(Branch(tag, False, st, f"signature not satisfied: {e}"))
    report.ok = all(b.ok for b in report.branches)
    return report
