"""The ≤ relation between symbolic states, implemented as directed rewriting.

`subsumes(src, tgt)` rewrites the source binding by binding until it lines
up with the target, then looks for an id renaming (`state_iso`) that makes
the two states equal.  Every rewrite is recorded as a `Step`; replaying the
steps on the source and applying the final renaming reproduces the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .llbc_state import (
    BOT, Abstraction, Anon, Binding, Bot, BoxV, Fresh, Heap, Ignored, Lit, Loc, Marked,
    MutBorrow, MutLoan, Pair, Ptr, ReservedBorrow, SharedBorrow, SharedLoan, State, Sym,
    Variant, has_borrows, has_bot, has_loans, is_plain, max_id, outer_loans, subvalues, walk,
)
from .syntax import BoxT, PairT, RefT, SumT, unfold


class NestedBorrow(Exception):
    """ToAbs of a mutable borrow whose payload holds borrows or bottom."""


class SubsumptionFailed(Exception):
    def __init__(self, msg: str, goal=None):
        super().__init__(msg)
        self.goal = goal


# ---------------------------------------------------------------- ToAbs


def _part(ty, i):
    t = unfold(ty) if ty is not None else None
    if isinstance(t, PairT):
        return t.fst if i == 0 else t.snd
    if isinstance(t, SumT):
        return t.left if i == 0 else t.right
    if isinstance(t, (BoxT, RefT)):
        return t.inner
    return None


def _to_abs_groups(v, ty) -> list:
    if isinstance(v, Marked):
        return [[Marked(v.side, e) for e in g] for g in _to_abs_groups(v.value, ty)]
    if not (has_loans(v) or has_borrows(v)):
        return []
    if isinstance(v, Pair):
        return _to_abs_groups(v.fst, _part(ty, 0)) + _to_abs_groups(v.snd, _part(ty, 1))
    if isinstance(v, Variant):
        return _to_abs_groups(v.value, _part(ty, v.tag))
    if isinstance(v, BoxV):
        return _to_abs_groups(v.value, _part(ty, 0))
    if isinstance(v, MutLoan):
        return [[v]]
    if isinstance(v, (SharedBorrow, ReservedBorrow)):
        return [[SharedBorrow(v.l)]]
    if isinstance(v, SharedLoan):
        if has_borrows(v.value) or has_bot(v.value):
            raise NestedBorrow(f"shared loan l{v.l} holds borrows")
        return [[v]]
    if isinstance(v, MutBorrow):
        if has_borrows(v.value) or has_bot(v.value):
            raise NestedBorrow(f"borrow l{v.l} holds borrows or bottom")
        inner = _part(ty, 0)
        if inner is None and isinstance(v.value, Sym):
            inner = v.value.ty
        elems = [MutBorrow(v.l, Ignored(inner))]
        for g in _to_abs_groups(v.value, inner):
            elems.extend(g)
        return [elems]
    raise NestedBorrow(f"cannot abstract {type(v).__name__}")


def to_abs(v, fresh: Fresh, ty=None) -> list:
    """Fresh abstractions covering every loan and borrow of v; plain parts vanish."""
    return [Abstraction(fresh(), tuple(g)) for g in _to_abs_groups(v, ty) if g]


# ---------------------------------------------------------------- MergeAbs


def _side(e):
    return e.side if isinstance(e, Marked) else None


def _core(e):
    return e.value if isinstance(e, Marked) else e


def merge_abs(a0: Abstraction, a1: Abstraction, aid: int | None = None) -> Abstraction:
    """a0 ⋈ a1: union, cancelling each loan of a0 against its borrow in a1.

    The cancellation is directed: a borrow of a0 never cancels a loan of a1.
    Markers must agree on both sides of a cancelled pair. A marked shared
    loan keeps its marker, so each projection only sees its own loans.
    """
    left = list(a0.elems)
    right = list(a1.elems)
    i = 0
    while i < len(left):
        e = left[i]
        c, side = _core(e), _side(e)
        if isinstance(c, MutLoan):
            j = next((j for j, f in enumerate(right)
                      if isinstance(_core(f), MutBorrow) and _core(f).l == c.l and _side(f) == side), None)
            if j is not None:
                del left[i]
                del right[j]
                continue
        elif isinstance(c, SharedLoan):
            js = [j for j, f in enumerate(right)
                  if isinstance(_core(f), SharedBorrow) and _core(f).l == c.l and _side(f) == side]
            if js:
                for j in reversed(js):
                    del right[j]
        i += 1
    return Abstraction(a0.id if aid is None else aid, tuple(left + right), a0.region)


# ---------------------------------------------------------------- isomorphism


def _unify(v, w, m: dict, inv: dict):
    """Extend the renaming m (kind, id) -> id so that v maps onto w; None on failure."""
    if type(v) is not type(w):
        return None
    if isinstance(v, (Lit, Bot, Ignored)):
        return m if v == w else None
    if isinstance(v, Sym):
        return _bind(("s", v.id), w.id, m, inv)
    if isinstance(v, Ptr):
        if v.box != w.box:
            return None
        return _bind(("b" if v.box else "l", v.l), w.l, m, inv)
    if isinstance(v, (MutLoan, MutBorrow, SharedLoan, SharedBorrow, ReservedBorrow, Loc)):
        m = _bind(("l", v.l), w.l, m, inv)
        if m is None:
            return None
    if isinstance(v, Variant) and v.tag != w.tag:
        return None
    if isinstance(v, Marked) and v.side != w.side:
        return None
    if isinstance(v, Pair):
        m = _unify(v.fst, w.fst, m, inv)
        return None if m is None else _unify(v.snd, w.snd, m, inv)
    if hasattr(v, "value"):
        return _unify(v.value, w.value, m, inv)
    return m


def _bind(key, target, m, inv):
    if key in m:
        return m if m[key] == target else None
    ikey = (key[0], target)
    if ikey in inv:
        return None
    m = dict(m)
    m[key] = target
    inv[ikey] = key
    return m


def _match_multiset(xs, ys, unify, m, inv):
    """Backtracking bijection between xs and ys under unify; returns the final map or None."""
    if len(xs) != len(ys):
        return None
    used = [False] * len(ys)

    def go(i, m):
        if i == len(xs):
            return m
        for j, y in enumerate(ys):
            if used[j]:
                continue
            snap = dict(inv)
            m2 = unify(xs[i], y, m, inv)
            if m2 is not None:
                used[j] = True
                r = go(i + 1, m2)
                if r is not None:
                    return r
                used[j] = False
            inv.clear()
            inv.update(snap)
        return None
    return go(0, m)


def _unify_abs(a, b, m, inv):
    m = _bind(("A", a.id), b.id, m, inv)
    if m is None:
        return None
    return _match_multiset(list(a.elems), list(b.elems), _unify, m, inv)


def state_iso(s0: State, s1: State) -> dict | None:
    """Injective renaming of loan/symbolic/abstraction/box ids mapping s0 onto s1, or None.

    Named bindings must agree in order; anonymous bindings, boxes and
    abstractions are compared as multisets.
    """
    n0, n1 = s0.named(), s1.named()
    if [(b.key, b.frame) for b in n0] != [(b.key, b.frame) for b in n1]:
        return None
    m, inv = {}, {}
    for a, b in zip(n0, n1):
        m = _unify(a.value, b.value, m, inv)
        if m is None:
            return None
    h0 = [b for b in s0.env if isinstance(b.key, Heap)]
    h1 = [b for b in s1.env if isinstance(b.key, Heap)]

    def unify_heap(a, b, m, inv):
        m = _bind(("b", a.key.id), b.key.id, m, inv)
        return None if m is None else _unify(a.value, b.value, m, inv)
    m = _match_multiset(h0, h1, unify_heap, m, inv)
    if m is None:
        return None
    m = _match_multiset([b.value for b in s0.anons()], [b.value for b in s1.anons()], _unify, m, inv)
    if m is None:
        return None
    return _match_multiset(list(s0.abs), list(s1.abs), _unify_abs, m, inv)


def rename(st: State, m: dict) -> State:
    """Apply a renaming produced by state_iso (ids outside its domain are kept)."""
    def val(v):
        if isinstance(v, Sym):
            return Sym(m.get(("s", v.id), v.id), v.ty)
        if isinstance(v, Ptr):
            return Ptr(m.get(("b" if v.box else "l", v.l), v.l), v.box)
        if isinstance(v, Pair):
            return Pair(val(v.fst), val(v.snd))
        if isinstance(v, (MutLoan, SharedBorrow, ReservedBorrow)):
            return type(v)(m.get(("l", v.l), v.l))
        if isinstance(v, (MutBorrow, SharedLoan, Loc)):
            return type(v)(m.get(("l", v.l), v.l), val(v.value))
        if isinstance(v, (Variant, BoxV, Marked)):
            return replace(v, value=val(v.value))
        return v
    env = []
    for b in st.env:
        key = Heap(m.get(("b", b.key.id), b.key.id)) if isinstance(b.key, Heap) else b.key
        env.append(replace(b, key=key, value=val(b.value)))
    abss = tuple(Abstraction(m.get(("A", a.id), a.id), tuple(val(e) for e in a.elems), a.region) for a in st.abs)
    return State(tuple(env), abss, st.stack)


# ---------------------------------------------------------------- derivations


@dataclass
class Step:
    rule: str
    detail: str
    apply: object = field(repr=False, compare=False)

    def __str__(self):
        return f"{self.rule}: {self.detail}"


@dataclass
class Derivation:
    steps: list
    subst: dict
    result: State

    def rules(self) -> list:
        return [s.rule for s in self.steps]

    def replay(self, src: State) -> State:
        for s in self.steps:
            src = s.apply(src)
        return src

    def render(self) -> str:
        lines = [f"  {i + 1}. {s}" for i, s in enumerate(self.steps)]
        if self.subst:
            ren = ", ".join(f"{k[0] if k[0] != 'l' else 'l'}{k[1]}->{v}" for k, v in sorted(self.subst.items())
                            if k[1] != v)
            if ren:
                lines.append(f"  {len(self.steps) + 1}. Le-Subst: {ren}")
        return "\n".join(lines) if lines else "  (identical)"


def _set_named(i: int, v):
    return lambda st: st.with_binding(i, v)


def _add_anon(key: int, v, ty, frame):
    return lambda st: st.add(Binding(Anon(key), v, ty, frame))


def _remove_key(key):
    return lambda st: State(tuple(b for b in st.env if b.key != key), st.abs, st.stack)


def _add_abs(*a):
    return lambda st: st.add_abs(*a)


def _replace_abs(old_ids: tuple, new: Abstraction | None):
    def f(st):
        keep = tuple(a for a in st.abs if a.id not in old_ids)
        return State(st.env, keep + ((new,) if new is not None else ()), st.stack)
    return f


class _Subsumer:
    def __init__(self, src: State, tgt: State, fresh: Fresh | None):
        self.src = src
        self.tgt = tgt
        self.fresh = fresh or Fresh(max(max_id(src), max_id(tgt)) + 1)
        self.steps = []
        self.lmap = {}
        self.limg = set()
        self.smap = {}
        self.simg = set()
        self.s_ids = _loan_ids_of(src)
        self.t_ids = _loan_ids_of(tgt)

    def step(self, rule, detail, fn):
        self.steps.append(Step(rule, detail, fn))
        self.src = fn(self.src)

    # id mapping ---------------------------------------------------
    def map_loan(self, ls, lt) -> bool:
        if ls in self.lmap:
            return self.lmap[ls] == lt
        if lt in self.limg:
            return False
        if ls != lt and (ls in self.t_ids or lt in self.s_ids):
            return False
        self.lmap[ls] = lt
        self.limg.add(lt)
        return True

    def map_sym(self, ss, st) -> bool:
        if ss in self.smap:
            return self.smap[ss] == st
        if st in self.simg:
            return False
        self.smap[ss] = st
        self.simg.add(st)
        return True

    # values -------------------------------------------------------
    def value(self, vs, vt, where, ty):
        """Rewrite vs towards vt; returns (new value, pending side effects)."""
        if isinstance(vt, Bot):
            if isinstance(vs, Bot):
                return vs
            raise SubsumptionFailed(f"{where}: cannot move out of a nested position", where)
        if isinstance(vt, Sym):
            if isinstance(vs, Sym) and self.map_sym(vs.id, vt.id):
                return vs
            if has_loans(vs) or has_borrows(vs) or has_bot(vs):
                raise SubsumptionFailed(f"{where}: cannot turn a value with loans or borrows into a symbolic value", where)
            s = Sym(self.fresh(), vt.ty)
            self.map_sym(s.id, vt.id)
            self.pending.append(("Le-ToSymbolic", f"{where} becomes s{s.id}"))
            return s
        if isinstance(vt, Lit):
            if vs == vt:
                return vs
            raise SubsumptionFailed(f"{where}: literal mismatch", where)
        if isinstance(vt, Pair):
            if not isinstance(vs, Pair):
                raise SubsumptionFailed(f"{where}: expected a pair", where)
            return Pair(self.value(vs.fst, vt.fst, where + ".0", _part(ty, 0)),
                        self.value(vs.snd, vt.snd, where + ".1", _part(ty, 1)))
        if isinstance(vt, Variant):
            if not isinstance(vs, Variant) or vs.tag != vt.tag:
                raise SubsumptionFailed(f"{where}: variant mismatch", where)
            return Variant(vs.tag, self.value(vs.value, vt.value, where, _part(ty, vs.tag)))
        if isinstance(vt, BoxV):
            if not isinstance(vs, BoxV):
                raise SubsumptionFailed(f"{where}: expected a box", where)
            return BoxV(self.value(vs.value, vt.value, "*" + where, _part(ty, 0)))
        if isinstance(vt, MutBorrow):
            if not isinstance(vs, MutBorrow):
                raise SubsumptionFailed(f"{where}: expected a mutable borrow", where)
            if self.map_loan(vs.l, vt.l):
                return MutBorrow(vs.l, self.value(vs.value, vt.value, "*" + where, _part(ty, 0)))
            l = self.fresh()
            self.map_loan(l, vt.l)
            a = Abstraction(self.fresh(), (MutBorrow(vs.l, Ignored(_part(ty, 0))), MutLoan(l)))
            self.new_abs.append(a)
            self.pending.append(("Le-Reborrow-MutBorrow-Abs", f"{where}: l{vs.l} reborrowed as l{l}"))
            return MutBorrow(l, self.value(vs.value, vt.value, "*" + where, _part(ty, 0)))
        if isinstance(vt, MutLoan):
            if isinstance(vs, MutLoan):
                if self.map_loan(vs.l, vt.l):
                    return vs
                l = self.fresh()
                self.map_loan(l, vt.l)
                self.new_abs.append(Abstraction(self.fresh(), (MutBorrow(l, Ignored(ty)), MutLoan(vs.l))))
                self.pending.append(("Le-Reborrow-MutLoan-Abs", f"{where}: loan l{vs.l} replaced by l{l}"))
                return MutLoan(l)
            if has_bot(vs) or has_borrows(vs) or outer_loans(vs):
                raise SubsumptionFailed(f"{where}: expected a mutable loan", where)
            l = self.fresh()
            self.map_loan(l, vt.l)
            self.new_abs.extend(to_abs(MutBorrow(l, vs), self.fresh, RefT("'_", ty, True)))
            self.pending.append(("Le-Fresh-MutLoan-Abs", f"{where}: value lent out as l{l}"))
            return MutLoan(l)
        if isinstance(vt, SharedLoan):
            if isinstance(vs, SharedLoan):
                if not self.map_loan(vs.l, vt.l):
                    raise SubsumptionFailed(f"{where}: shared loan l{vs.l} cannot match l{vt.l}", where)
                return SharedLoan(vs.l, self.value(vs.value, vt.value, where, ty))
            if has_bot(vs) or outer_loans(vs):
                raise SubsumptionFailed(f"{where}: expected a shared loan", where)
            l = self.fresh()
            self.map_loan(l, vt.l)
            self.pending.append(("Le-Fresh-SharedLoan", f"{where}: value shared as l{l}"))
            return SharedLoan(l, self.value(vs, vt.value, where, ty))
        if isinstance(vt, (SharedBorrow, ReservedBorrow)):
            if type(vs) is type(vt) and self.map_loan(vs.l, vt.l):
                return vs
            raise SubsumptionFailed(f"{where}: shared borrow mismatch", where)
        raise SubsumptionFailed(f"{where}: no rule relates {type(vs).__name__} to {type(vt).__name__}", where)

    # driver -------------------------------------------------------
    def run(self) -> Derivation:
        src, tgt = self.src, self.tgt
        if [(b.key, b.frame) for b in src.named()] != [(b.key, b.frame) for b in tgt.named()]:
            raise SubsumptionFailed("states bind different variables")
        for tb in tgt.named():
            i = next(i for i, b in enumerate(self.src.env) if b.key == tb.key and b.frame == tb.frame)
            sb = self.src.env[i]
            self.pending, self.new_abs = [], []
            if isinstance(tb.value, Bot) and not isinstance(sb.value, Bot):
                if outer_loans(sb.value):
                    raise SubsumptionFailed(f"{tb.key}: cannot move out a value with outer loans", tb.key)
                key = self.fresh()
                self.step("Le-MoveValue", f"{tb.key} moved to an anonymous binding",
                          _chain(_set_named(i, BOT), _add_anon(key, sb.value, sb.ty, sb.frame)))
                continue
            v = self.value(sb.value, tb.value, tb.key, sb.ty or tb.ty)
            for rule, detail in self.pending:
                self.steps.append(Step(rule, detail, _noop))
            # the value rewrites above are recorded as one combined update
            if self.pending or self.new_abs:
                self.steps[-1] = Step(self.steps[-1].rule, self.steps[-1].detail,
                                      _chain(_set_named(i, v), _add_abs(*self.new_abs)))
                self.src = self.steps[-1].apply(self.src)
        self.anons()
        self.abstractions()
        m = state_iso(self.src, self.tgt)
        if m is None:
            raise SubsumptionFailed("no id renaming relates the rewritten source to the target",
                                    self.src)
        return Derivation(self.steps, m, self.src)

    def anons(self):
        targets = [b.value for b in self.tgt.anons()]
        for b in list(self.src.anons()):
            j = next((j for j, t in enumerate(targets) if _unify(b.value, t, {}, {}) is not None), None)
            if j is not None:
                del targets[j]
                continue
            if isinstance(b.value, Bot) or is_plain(b.value) or not (has_loans(b.value) or has_borrows(b.value)):
                self.step("Le-RemoveAnon", f"anonymous {_short(b.value)} dropped", _remove_key(b.key))
                continue
            try:
                new = to_abs(b.value, self.fresh, b.ty)
            except NestedBorrow as e:
                raise SubsumptionFailed(f"anonymous value: {e}", b.value) from None
            self.step("Le-ToAbs", f"anonymous {_short(b.value)} into {len(new)} abstraction(s)",
                      _chain(_remove_key(b.key), _add_abs(*new)))
        if targets:
            raise SubsumptionFailed("target has anonymous values the source lacks", targets[0])

    def abstractions(self):
        tgt_elems = [e for a in self.tgt.abs for e in a.elems]
        keep_plain = any(not (has_loans(e) or has_borrows(e)) for e in tgt_elems)
        # local clean-ups inside each abstraction
        for a in list(self.src.abs):
            elems = []
            for e in a.elems:
                elems.extend(_deconstruct(e))
            if len(elems) != len(a.elems):
                na = replace(a, elems=tuple(elems))
                self.step("Le-Abs-DeconstructPair", f"A{a.id} flattened", _replace_abs((a.id,), na))
                a = na
            if not keep_plain:
                plain = [e for e in a.elems if not (has_loans(e) or has_borrows(e))]
                if plain:
                    na = replace(a, elems=tuple(e for e in a.elems if has_loans(e) or has_borrows(e)))
                    self.step("Le-Abs-ClearValue", f"A{a.id} drops {len(plain)} plain value(s)", _replace_abs((a.id,), na))
                    a = na
            dup = _dedup_shared(a.elems)
            if len(dup) != len(a.elems):
                na = replace(a, elems=dup)
                self.step("Le-Abs-End-DupSharedBorrow", f"A{a.id}", _replace_abs((a.id,), na))
                a = na
            if not a.elems:
                self.step("Le-ClearAbs", f"A{a.id} is empty", _replace_abs((a.id,), None))

        def image(l):
            if l in self.lmap:
                return self.lmap[l]
            if l in self.t_ids and l not in self.limg:
                return l
            return None

        # internal loan/borrow pairs must cancel
        while True:
            pair = _cancel_pair(self.src.abs, lambda l: image(l) is None)
            if pair is None:
                break
            a0, a1 = pair
            merged = merge_abs(a0, a1, self.fresh())
            self.step("Le-MergeAbs", f"A{a0.id} with A{a1.id}", _replace_abs((a0.id, a1.id), merged))

        self.clear_empty()

        # internal shared loans whose borrows are all gone end in place
        live = {x.l for _, x, _ in walk(self.src) if isinstance(x, (SharedBorrow, ReservedBorrow))}
        for a in list(self.src.abs):
            ended = [e for e in a.elems if isinstance(e, SharedLoan) and e.l not in live and image(e.l) is None]
            if not ended:
                continue
            elems = []
            for e in a.elems:
                if e in ended:
                    self.steps.append(Step("Le-Abs-End-SharedLoan", f"l{e.l} in A{a.id}", _noop))
                    if has_loans(e.value) or has_borrows(e.value):
                        elems.append(e.value)
                    else:
                        self.steps.append(Step("Le-Abs-ClearValue", f"A{a.id}", _noop))
                else:
                    elems.append(e)
            na = replace(a, elems=tuple(elems)) if elems else None
            self.step("Le-ClearAbs" if na is None else "Le-Abs-End-SharedLoan", f"A{a.id}", _replace_abs((a.id,), na))

        # group the remaining abstractions by the target abstraction they feed
        owner = {}
        for ta in self.tgt.abs:
            for e in ta.elems:
                for x in subvalues(e):
                    if hasattr(x, "l") and not isinstance(x, Ptr):
                        owner.setdefault(x.l, ta.id)
        groups = {}
        for a in self.src.abs:
            targets = set()
            for e in a.elems:
                for x in subvalues(e):
                    if hasattr(x, "l") and not isinstance(x, Ptr):
                        im = image(x.l)
                        if im is not None and im in owner:
                            targets.add(owner[im])
            if len(targets) > 1:
                raise SubsumptionFailed(f"A{a.id} straddles several target abstractions", a)
            if targets:
                groups.setdefault(targets.pop(), []).append(a)
        for tid, members in groups.items():
            while len(members) > 1:
                i, j = _best_merge(members)
                a0, a1 = members[i], members[j]
                merged = merge_abs(a0, a1, self.fresh())
                self.step("Le-MergeAbs", f"A{a0.id} with A{a1.id}", _replace_abs((a0.id, a1.id), merged))
                members = [m for k, m in enumerate(members) if k not in (i, j)] + [merged]
        self.clear_empty()

    def clear_empty(self):
        for a in list(self.src.abs):
            if not a.elems:
                self.step("Le-ClearAbs", f"A{a.id} is empty", _replace_abs((a.id,), None))


def _noop(st):
    return st


def _chain(*fs):
    def f(st):
        for g in fs:
            st = g(st)
        return st
    return f


def _short(v) -> str:
    from .pretty import format_value
    s = format_value(v)
    return s if len(s) < 40 else s[:37] + "..."


def _loan_ids_of(st: State) -> set:
    out = set()
    for b in st.env:
        for x in subvalues(b.value):
            if isinstance(x, (MutLoan, MutBorrow, SharedLoan, SharedBorrow, ReservedBorrow)):
                out.add(x.l)
    for a in st.abs:
        for e in a.elems:
            for x in subvalues(e):
                if isinstance(x, (MutLoan, MutBorrow, SharedLoan, SharedBorrow, ReservedBorrow)):
                    out.add(x.l)
    return out


def _deconstruct(e) -> list:
    """Split tuples, variants and boxes inside an abstraction into their parts."""
    side = _side(e)
    c = _core(e)
    if isinstance(c, (Pair, Variant, BoxV)):
        from .llbc_state import children
        out = []
        for k in children(c):
            out.extend(_deconstruct(Marked(side, k) if side else k))
        return out
    return [e]


def _dedup_shared(elems) -> tuple:
    seen = set()
    out = []
    for e in elems:
        if isinstance(e, SharedBorrow):
            if e.l in seen:
                continue
            seen.add(e.l)
        out.append(e)
    return tuple(out)


def _cancel_pair(abss, internal):
    """Two abstractions where a loan of the first is borrowed by the second."""
    for a0 in abss:
        for e in a0.elems:
            c = _core(e)
            if isinstance(c, (MutLoan, SharedLoan)) and internal(c.l):
                want = MutBorrow if isinstance(c, MutLoan) else SharedBorrow
                for a1 in abss:
                    if a1 is a0:
                        continue
                    if any(isinstance(_core(f), want) and _core(f).l == c.l and _side(f) == _side(e) for f in a1.elems):
                        return a0, a1
    return None


def _best_merge(members):
    for i, a0 in enumerate(members):
        loans = {_core(e).l for e in a0.elems if isinstance(_core(e), (MutLoan, SharedLoan))}
        for j, a1 in enumerate(members):
            if i != j and any(isinstance(_core(f), (MutBorrow, SharedBorrow)) and _core(f).l in loans for f in a1.elems):
                return i, j
    return 0, 1


def subsumes(src: State, tgt: State, fresh: Fresh | None = None) -> Derivation:
    """Derive src ≤ tgt, or raise SubsumptionFailed naming the stuck goal."""
    return _Subsumer(src, tgt, fresh).run()


def check_subsumes(src: State, tgt: State) -> bool:
    try:
        subsumes(src, tgt)
        return True
    except SubsumptionFailed:
        return False
