"""Joining symbolic states, collapsing the result, and computing loop fixpoints.

A join keeps track of where each piece of borrow-graph residue came from by
wrapping it in a side marker (`Marked("L", v)` for ⌊v⌋, `Marked("R", v)` for
⌈v⌉).  Collapse merges abstractions until every marker has been cancelled or
paired with its counterpart from the other side.
"""

from __future__ import annotations

from dataclasses import replace

from .llbc_state import (
    Abstraction, Anon, Binding, Bot, BoxV, Fresh, Ignored, Lit, Marked, MutBorrow, MutLoan,
    Pair, ReservedBorrow, SharedBorrow, SharedLoan, State, Sym, Variant, find_loan, get_at,
    has_borrows, has_bot, has_loans, outer_loans,
)
from .subsume import NestedBorrow, _core, _part, _side, merge_abs, state_iso, subsumes, to_abs, SubsumptionFailed
from .syntax import UNIT_TAG, Tag


class JoinFailed(Exception):
    pass


class ResidualMarkers(Exception):
    def __init__(self, marked):
        super().__init__(f"{len(marked)} marked value(s) left after collapse")
        self.marked = marked


class NoConvergence(Exception):
    pass


# ---------------------------------------------------------------- projection


def _proj(v, side):
    if isinstance(v, Marked):
        return _proj(v.value, side) if v.side == side else None
    return v


def project_marked(st: State, side: str) -> State:
    """Keep the values of one side: drop the other side's marked values, strip our markers."""
    abss = []
    for a in st.abs:
        elems = tuple(e for e in (_proj(e, side) for e in a.elems) if e is not None)
        abss.append(replace(a, elems=elems))
    return State(st.env, tuple(abss), st.stack)


def _mark(abss, side):
    return [replace(a, elems=tuple(e if isinstance(e, Marked) else Marked(side, e) for e in a.elems)) for a in abss]


# ---------------------------------------------------------------- values


def _clean(v) -> bool:
    """No mutable loan, borrow or bottom inside."""
    return not (has_borrows(v) or has_bot(v) or any(isinstance(x, MutLoan) for x in _walk(v)))


def _walk(v):
    from .llbc_state import subvalues
    return subvalues(v)


def _shared_payload(st: State, l: int):
    loc = find_loan(st, l)
    if loc is None:
        return None
    v = get_at(st, loc)
    return v.value if isinstance(v, SharedLoan) else None


class _Joiner:
    def __init__(self, left: State, right: State, fresh: Fresh, precise: bool):
        self.left = left
        self.right = right
        self.fresh = fresh
        self.precise = precise

    def sym(self, ty, *vs):
        if ty is None:
            ty = next((v.ty for v in vs if isinstance(v, Sym) and v.ty is not None), None)
        return Sym(self.fresh(), ty)

    def value(self, vl, vr, ty):
        """(joined value, list of new abstractions)."""
        if vl == vr:
            return vl, []
        if isinstance(vl, Bot) or isinstance(vr, Bot):
            other, side = (vr, "R") if isinstance(vl, Bot) else (vl, "L")
            if outer_loans(other):
                raise JoinFailed("cannot join bottom with a value holding outer loans")
            try:
                return Bot(), _mark(to_abs(other, self.fresh, ty), side)
            except NestedBorrow as e:
                raise JoinFailed(str(e)) from None
        if not (has_loans(vl) or has_borrows(vl) or has_loans(vr) or has_borrows(vr)):
            return self.sym(ty, vl, vr), []
        if isinstance(vl, MutLoan) and isinstance(vr, MutLoan):
            l2 = self.fresh()
            a = Abstraction(self.fresh(), (MutBorrow(l2, Ignored(ty)), Marked("L", vl), Marked("R", vr)))
            return MutLoan(l2), [a]
        if isinstance(vl, MutLoan) or isinstance(vr, MutLoan):
            loan_left = isinstance(vl, MutLoan)
            other = vr if loan_left else vl
            if has_borrows(other) or has_bot(other):
                raise JoinFailed("cannot join a mutable loan with a value holding borrows")
            l1 = self.fresh()
            side = "R" if loan_left else "L"
            abss = _mark(to_abs(MutBorrow(l1, other), self.fresh, None), side)
            v, more = self.value(vl, MutLoan(l1), ty) if loan_left else self.value(MutLoan(l1), vr, ty)
            return v, abss + more
        if isinstance(vl, SharedLoan) and isinstance(vr, SharedLoan):
            if vl.l == vr.l:
                if has_bot(vl.value) or has_bot(vr.value):
                    raise JoinFailed("shared loans over bottom")
                v, abss = self.value(vl.value, vr.value, ty)
                return SharedLoan(vl.l, v), abss
            if not (_clean(vl.value) and _clean(vr.value)):
                raise JoinFailed("shared loans over values with borrows")
            l2 = self.fresh()
            a = Abstraction(self.fresh(), (SharedBorrow(l2), Marked("L", vl), Marked("R", vr)))
            return SharedLoan(l2, self.sym(ty, vl.value, vr.value)), [a]
        if isinstance(vl, SharedLoan):
            return self.value(vl, SharedLoan(self.fresh(), vr), ty)
        if isinstance(vr, SharedLoan):
            return self.value(SharedLoan(self.fresh(), vl), vr, ty)
        if isinstance(vl, MutBorrow) and isinstance(vr, MutBorrow):
            inner = _part(ty, 0)
            v2, abss = self.value(vl.value, vr.value, inner)
            if vl.l == vr.l:
                return MutBorrow(vl.l, v2), abss
            l2 = self.fresh()
            if self.precise:
                l0, l1 = self.fresh(), self.fresh()
                new = [Abstraction(self.fresh(), (Marked("L", MutBorrow(vl.l, Ignored(inner))), MutLoan(l0))),
                       Abstraction(self.fresh(), (Marked("R", MutBorrow(vr.l, Ignored(inner))), MutLoan(l1))),
                       Abstraction(self.fresh(), (MutBorrow(l0, Ignored(inner)), MutBorrow(l1, Ignored(inner)), MutLoan(l2)))]
            else:
                new = [Abstraction(self.fresh(), (Marked("L", MutBorrow(vl.l, Ignored(inner))),
                                                  Marked("R", MutBorrow(vr.l, Ignored(inner))), MutLoan(l2)))]
            return MutBorrow(l2, v2), new + abss
        if isinstance(vl, SharedBorrow) and isinstance(vr, SharedBorrow):
            pl, pr = _shared_payload(self.left, vl.l), _shared_payload(self.right, vr.l)
            if pl is None or pr is None or not (_clean(pl) and _clean(pr)):
                raise JoinFailed("shared borrows without matching plain shared loans")
            l2 = self.fresh()
            inner = _part(ty, 0)
            if self.precise:
                l0, l1 = self.fresh(), self.fresh()
                new = [Abstraction(self.fresh(), (Marked("L", vl), SharedLoan(l0, self.sym(inner, pl)))),
                       Abstraction(self.fresh(), (Marked("R", vr), SharedLoan(l1, self.sym(inner, pr)))),
                       Abstraction(self.fresh(), (SharedBorrow(l0), SharedBorrow(l1), SharedLoan(l2, self.sym(inner, pl))))]
            else:
                new = [Abstraction(self.fresh(), (Marked("L", vl), Marked("R", vr), SharedLoan(l2, self.sym(inner, pl, pr))))]
            return SharedBorrow(l2), new
        if isinstance(vl, Pair) and isinstance(vr, Pair):
            a, a_abs = self.value(vl.fst, vr.fst, _part(ty, 0))
            b, b_abs = self.value(vl.snd, vr.snd, _part(ty, 1))
            return Pair(a, b), a_abs + b_abs
        if isinstance(vl, Variant) and isinstance(vr, Variant) and vl.tag == vr.tag:
            v, abss = self.value(vl.value, vr.value, _part(ty, vl.tag))
            return Variant(vl.tag, v), abss
        if isinstance(vl, BoxV) and isinstance(vr, BoxV):
            v, abss = self.value(vl.value, vr.value, _part(ty, 0))
            return BoxV(v), abss
        raise JoinFailed(f"cannot join {type(vl).__name__} with {type(vr).__name__}")


def join_values(left: State, right: State, vl, vr, fresh: Fresh, ty=None, precise: bool = False):
    return _Joiner(left, right, fresh, precise).value(vl, vr, ty)


def join_states(left: State, right: State, fresh: Fresh | None = None, precise: bool = False) -> State:
    """Pointwise join of two states over the same variables; the result may carry markers."""
    from .llbc_state import max_id
    fresh = fresh or Fresh(max(max_id(left), max_id(right)) + 1)
    j = _Joiner(left, right, fresh, precise)
    ln, rn = left.named(), right.named()
    if [(b.key, b.frame) for b in ln] != [(b.key, b.frame) for b in rn]:
        raise JoinFailed("states bind different variables")
    env, abss = [], []
    for bl, br in zip(ln, rn):
        v, new = j.value(bl.value, br.value, bl.ty or br.ty)
        env.append(replace(bl, value=v))
        abss.extend(new)
    ra = {b.key: b for b in right.anons()}
    for b in left.anons():
        other = ra.get(b.key)
        if other is not None and other.value == b.value:
            env.append(b)
            del ra[b.key]
        else:
            abss.extend(_anon_to_abs(b, fresh, "L"))
    for b in ra.values():
        abss.extend(_anon_to_abs(b, fresh, "R"))
    rabs = {a.id: a for a in right.abs}
    kept = []
    for a in left.abs:
        other = rabs.get(a.id)
        if other is not None and other.elems == a.elems:
            kept.append(a)
            del rabs[a.id]
        else:
            abss.extend(_mark([a], "L"))
    abss.extend(_mark(list(rabs.values()), "R"))
    return State(tuple(env), tuple(kept + abss), left.stack)


def _anon_to_abs(b: Binding, fresh, side):
    try:
        return _mark(to_abs(b.value, fresh, b.ty), side)
    except NestedBorrow as e:
        raise JoinFailed(f"anonymous value: {e}") from None


# ---------------------------------------------------------------- collapse


def _has_cancel(a0, a1) -> bool:
    for e in a0.elems:
        c, side = _core(e), _side(e)
        want = MutBorrow if isinstance(c, MutLoan) else SharedBorrow if isinstance(c, SharedLoan) else None
        if want and any(isinstance(_core(f), want) and _core(f).l == c.l and _side(f) == side for f in a1.elems):
            return True
    return False


def _key(e):
    c = _core(e)
    return (type(c).__name__, getattr(c, "l", None))


def _has_dup(a0, a1) -> bool:
    lefts = {_key(e) for e in a0.elems if _side(e) == "L"} | {_key(e) for e in a1.elems if _side(e) == "L"}
    rights0 = {_key(e) for e in a0.elems if _side(e) == "R"}
    rights1 = {_key(e) for e in a1.elems if _side(e) == "R"}
    l0 = {_key(e) for e in a0.elems if _side(e) == "L"}
    l1 = {_key(e) for e in a1.elems if _side(e) == "L"}
    return bool((l0 & rights1) or (l1 & rights0))


def _dedup(a: Abstraction, fresh) -> Abstraction:
    elems = list(a.elems)
    changed = True
    while changed:
        changed = False
        for i, e in enumerate(elems):
            if _side(e) != "L":
                continue
            j = next((j for j, f in enumerate(elems) if _side(f) == "R" and _key(f) == _key(e)), None)
            if j is None:
                continue
            c, d = _core(e), _core(elems[j])
            if isinstance(c, SharedLoan):
                if not (_clean(c.value) and _clean(d.value)):
                    continue
                merged = c if c.value == d.value else SharedLoan(c.l, Sym(fresh(), getattr(c.value, "ty", None)))
            else:
                merged = c
            elems = [x for k, x in enumerate(elems) if k not in (i, j)] + [merged]
            changed = True
            break
    return replace(a, elems=tuple(elems))


def collapse(st: State, fresh: Fresh | None = None) -> State:
    """Merge abstractions until no marker is left; ResidualMarkers if that is impossible."""
    from .llbc_state import max_id
    fresh = fresh or Fresh(max_id(st) + 1)
    abss = [_dedup(a, fresh) for a in st.abs]
    while True:
        pair = None
        # marked (or plain) loan/borrow pairs first, then left/right duplicates
        for test in (_has_cancel, _has_dup):
            for i, a0 in enumerate(abss):
                for j, a1 in enumerate(abss):
                    if i != j and test(a0, a1):
                        pair = (i, j)
                        break
                if pair:
                    break
            if pair:
                break
        if pair is None:
            break
        i, j = pair
        merged = _dedup(merge_abs(abss[i], abss[j], fresh()), fresh)
        abss = [a for k, a in enumerate(abss) if k not in (i, j)] + [merged]
    abss = [a for a in abss if a.elems]
    marked = [e for a in abss for e in a.elems if isinstance(e, Marked)]
    marked += [b.value for b in st.env if any(isinstance(x, Marked) for x in _walk(b.value))]
    if marked:
        raise ResidualMarkers(marked)
    return State(st.env, tuple(abss), st.stack)


def join_collapse(left: State, right: State, fresh: Fresh | None = None, precise: bool = False,
                  on_join=None) -> State:
    from .llbc_state import max_id
    fresh = fresh or Fresh(max(max_id(left), max_id(right)) + 1)
    out = collapse(join_states(left, right, fresh, precise), fresh)
    if on_join:
        on_join(left, right, out)
    return out


# ---------------------------------------------------------------- loops


def _abstract_fresh(st: State, entry: State, fresh: Fresh) -> State:
    """ToAbs the anonymous bindings created since loop entry, then merge the
    new abstractions with any abstraction they share a loan with."""
    old_anons = {b.key for b in entry.anons()}
    old_abs = {a.id for a in entry.abs}
    env, new = [], []
    for b in st.env:
        if isinstance(b.key, Anon) and b.key not in old_anons:
            try:
                new.extend(to_abs(b.value, fresh, b.ty))
            except NestedBorrow as e:
                raise JoinFailed(f"anonymous value: {e}") from None
        else:
            env.append(b)
    abss = list(st.abs) + new
    while True:
        pair = None
        for i, a0 in enumerate(abss):
            for j, a1 in enumerate(abss):
                if i != j and (a0.id not in old_abs or a1.id not in old_abs) and _has_cancel(a0, a1):
                    pair = (i, j)
                    break
            if pair:
                break
        if pair is None:
            break
        i, j = pair
        merged = merge_abs(abss[i], abss[j], fresh())
        abss = [a for k, a in enumerate(abss) if k not in pair] + [merged]
    return State(tuple(env), tuple(a for a in abss if a.elems), st.stack)


def _converged(st: State, c: State) -> bool:
    if state_iso(st, c) is not None:
        return True
    try:
        subsumes(st, c)
        return True
    except SubsumptionFailed:
        return False


def loop_fixpoint(machine, entry: State, body, max_iters: int = 10, on_iter=None):
    """Fixpoint of a loop body over symbolic states.

    Returns (fixpoint, exit states, number of joins).  machine.exec_set runs
    the body; its Continue(0)/Unit results feed the next candidate.
    """
    fresh = machine.fresh
    c = entry
    joins = 0
    for _ in range(max_iters + 1):
        if on_iter:
            on_iter(joins, c)
        outs = machine.exec_set(c, body)
        conts = [_abstract_fresh(st, c, fresh) for tag, st in outs if tag in (UNIT_TAG, Tag("continue", 0))]
        if all(_converged(st, c) for st in conts):
            exits = []
            for tag, st in outs:
                if tag in (UNIT_TAG, Tag("continue", 0)):
                    continue
                if tag == Tag("break", 0):
                    exits.append((UNIT_TAG, st))
                elif tag.kind in ("break", "continue"):
                    exits.append((Tag(tag.kind, tag.depth - 1), st))
                else:
                    exits.append((tag, st))
            return c, machine.merge(exits), joins
        if joins >= max_iters:
            break
        for st in conts:
            if not _converged(st, c):
                c = join_collapse(c, st, fresh, machine.precise, machine.on_join)
        joins += 1
    raise NoConvergence(f"loop did not converge after {max_iters} joins")
