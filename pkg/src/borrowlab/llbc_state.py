"""Borrow-centric values, environments and the capability-indexed read/write judgments.

The same value and state classes serve LLBC (loans and borrows), the symbolic
extension (symbolic values, region abstractions, ignored borrow payloads) and
HLPL (locations and pointers), so the generic traversals below know about all
of them.  A concrete LLBC state simply never contains the other forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .syntax import PE, Lit, Place

IMM, MUT, MOV = "imm", "mut", "mov"


# ---------------------------------------------------------------- values


@dataclass(frozen=True, slots=True)
class Bot:
    pass


BOT = Bot()


@dataclass(frozen=True, slots=True)
class Pair:
    fst: object
    snd: object


@dataclass(frozen=True, slots=True)
class Variant:
    tag: int  # 0 = Left, 1 = Right
    value: object


@dataclass(frozen=True, slots=True)
class BoxV:
    value: object


@dataclass(frozen=True, slots=True)
class MutLoan:
    l: int


@dataclass(frozen=True, slots=True)
class MutBorrow:
    l: int
    value: object


@dataclass(frozen=True, slots=True)
class SharedLoan:
    l: int
    value: object


@dataclass(frozen=True, slots=True)
class SharedBorrow:
    l: int


@dataclass(frozen=True, slots=True)
class ReservedBorrow:
    l: int


@dataclass(frozen=True, slots=True)
class Sym:
    """Symbolic value; the type is carried along but ignored by equality."""

    id: int
    ty: object = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class Ignored:
    """The `_` payload of a mutable borrow held by a region abstraction."""

    ty: object = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class Loc:
    l: int
    value: object


@dataclass(frozen=True, slots=True)
class Ptr:
    l: int
    box: bool = False


@dataclass(frozen=True, slots=True)
class Marked:
    """Join marker on an abstraction element: side is "L" or "R"."""

    side: str
    value: object


_ONE_CHILD = (Variant, BoxV, MutBorrow, SharedLoan, Loc, Marked)


def children(v) -> tuple:
    if isinstance(v, Pair):
        return (v.fst, v.snd)
    if isinstance(v, _ONE_CHILD):
        return (v.value,)
    return ()


def with_child(v, i: int, c):
    if isinstance(v, Pair):
        return Pair(c, v.snd) if i == 0 else Pair(v.fst, c)
    return replace(v, value=c)


def subvalues(v):
    """Pre-order iteration over v and all its sub-values."""
    stack = [v]
    while stack:
        x = stack.pop()
        yield x
        stack.extend(reversed(children(x)))


def map_value(v, f):
    """Bottom-up rebuild: f is applied to every node after its children."""
    if isinstance(v, Pair):
        return f(Pair(map_value(v.fst, f), map_value(v.snd, f)))
    if isinstance(v, _ONE_CHILD):
        return f(replace(v, value=map_value(v.value, f)))
    return f(v)


LOANS = (MutLoan, SharedLoan)
BORROWS = (MutBorrow, SharedBorrow, ReservedBorrow)


def has_loans(v) -> bool:
    return any(isinstance(x, LOANS) for x in subvalues(v))


def has_borrows(v) -> bool:
    return any(isinstance(x, BORROWS) for x in subvalues(v))


def has_bot(v) -> bool:
    return any(x is BOT or isinstance(x, Bot) for x in subvalues(v))


def outer_loans(v) -> list:
    """Loans of v that are not under a borrow."""
    out = []
    stack = [v]
    while stack:
        x = stack.pop()
        if isinstance(x, LOANS):
            out.append(x)
        if isinstance(x, (MutBorrow, Loc, Ptr)):
            continue
        stack.extend(children(x))
    return out


def loan_ids(v) -> set:
    return {x.l for x in subvalues(v) if isinstance(x, LOANS)}


def is_plain(v) -> bool:
    """No loans, borrows, locations, pointers or bottom inside."""
    return not any(isinstance(x, (Bot, MutLoan, SharedLoan, MutBorrow, SharedBorrow, ReservedBorrow, Loc, Ptr, Ignored))
                   for x in subvalues(v))


def is_inert(v) -> bool:
    """Nothing in v can be referenced from elsewhere: safe to forget."""
    return not any(isinstance(x, (MutLoan, SharedLoan, MutBorrow, SharedBorrow, ReservedBorrow, Loc, Ptr))
                   for x in subvalues(v))


# ---------------------------------------------------------------- bindings and states


@dataclass(frozen=True, slots=True)
class Anon:
    id: int


@dataclass(frozen=True, slots=True)
class Heap:
    """HLPL box binding key."""

    id: int


@dataclass(frozen=True, slots=True)
class Binding:
    key: object  # str for named variables, Anon or Heap otherwise
    value: object
    ty: object = field(default=None, compare=False)
    frame: int = 0


@dataclass(frozen=True, slots=True)
class Abstraction:
    id: int
    elems: tuple
    region: object = field(default=None, compare=False)


@dataclass(frozen=True)
class State:
    env: tuple = ()
    abs: tuple = ()
    stack: tuple = ((),)  # one tuple of variable names per frame

    @property
    def depth(self) -> int:
        return len(self.stack) - 1

    def index_of(self, name: str) -> int:
        top = self.depth
        for i, b in enumerate(self.env):
            if b.key == name and b.frame == top:
                return i
        for i in range(len(self.env) - 1, -1, -1):
            if self.env[i].key == name:
                return i
        raise PathMismatch(f"unbound variable {name}")

    def lookup(self, name: str):
        return self.env[self.index_of(name)].value

    def binding(self, name: str) -> Binding:
        return self.env[self.index_of(name)]

    def named(self):
        return [b for b in self.env if isinstance(b.key, str)]

    def anons(self):
        return [b for b in self.env if isinstance(b.key, Anon)]

    def with_binding(self, i: int, v) -> State:
        env = list(self.env)
        env[i] = replace(env[i], value=v)
        return replace(self, env=tuple(env))

    def add(self, b: Binding) -> State:
        return replace(self, env=self.env + (b,))

    def add_abs(self, *a: Abstraction) -> State:
        return replace(self, abs=self.abs + tuple(a))

    def remove_abs(self, aid: int) -> State:
        return replace(self, abs=tuple(a for a in self.abs if a.id != aid))

    def find_abs(self, aid: int) -> Abstraction:
        for a in self.abs:
            if a.id == aid:
                return a
        raise KeyError(aid)


def make_state(bindings: dict | list, abstractions=()) -> State:
    """Convenience constructor: {name: value} or [(name, value[, type])]."""
    items = bindings.items() if isinstance(bindings, dict) else bindings
    env = []
    names = []
    for item in items:
        key, v = item[0], item[1]
        ty = item[2] if len(item) > 2 else None
        env.append(Binding(key, v, ty, 0))
        if isinstance(key, str):
            names.append(key)
    return State(tuple(env), tuple(abstractions), (tuple(names),))


class Fresh:
    """Monotone id allocator shared by loans, symbolic values, abstractions, anonymous slots and boxes."""

    def __init__(self, start: int = 0):
        self._it = itertools.count(start)
        self.last = start - 1

    def __call__(self) -> int:
        self.last = next(self._it)
        return self.last

    @staticmethod
    def above(state: State) -> "Fresh":
        return Fresh(max_id(state) + 1)


def all_ids(v) -> set:
    out = set()
    for x in subvalues(v):
        if isinstance(x, (MutLoan, SharedLoan, MutBorrow, SharedBorrow, ReservedBorrow, Loc, Ptr)):
            out.add(x.l)
        elif isinstance(x, Sym):
            out.add(x.id)
    return out


def max_id(state: State) -> int:
    m = -1
    for b in state.env:
        if isinstance(b.key, (Anon, Heap)):
            m = max(m, b.key.id)
        for i in all_ids(b.value):
            m = max(m, i)
    for a in state.abs:
        m = max(m, a.id)
        for e in a.elems:
            for i in all_ids(e):
                m = max(m, i)
    return m


# ---------------------------------------------------------------- locations


# A location is (root, path): root ("e", binding index) or ("a", abstraction
# index, element index); path is the tuple of child indices below the root.


def get_at(state: State, loc):
    root, path = loc
    v = state.env[root[1]].value if root[0] == "e" else state.abs[root[1]].elems[root[2]]
    for i in path:
        v = children(v)[i]
    return v


def _set_path(v, path, w):
    if not path:
        return w
    return with_child(v, path[0], _set_path(children(v)[path[0]], path[1:], w))


def set_at(state: State, loc, w) -> State:
    root, path = loc
    if root[0] == "e":
        b = state.env[root[1]]
        return state.with_binding(root[1], _set_path(b.value, path, w))
    a = state.abs[root[1]]
    elems = list(a.elems)
    elems[root[2]] = _set_path(elems[root[2]], path, w)
    abss = list(state.abs)
    abss[root[1]] = replace(a, elems=tuple(elems))
    return replace(state, abs=tuple(abss))


def walk(state: State):
    """Yield (location, value, ancestors) for every sub-value of the state."""
    for i, b in enumerate(state.env):
        yield from _walk_value(("e", i), b.value)
    for i, a in enumerate(state.abs):
        for j, e in enumerate(a.elems):
            yield from _walk_value(("a", i, j), e)


def _walk_value(root, v):
    stack = [((), v, ())]
    while stack:
        path, x, anc = stack.pop()
        yield (root, path), x, anc
        kids = children(x)
        for i in range(len(kids) - 1, -1, -1):
            stack.append((path + (i,), kids[i], anc + (x,)))


def find_loan(state: State, l: int):
    for loc, v, _ in walk(state):
        if isinstance(v, LOANS) and v.l == l:
            return loc
    return None


def find_borrows(state: State, l: int) -> list:
    return [(loc, v, anc) for loc, v, anc in walk(state) if isinstance(v, BORROWS) and v.l == l]


def find_loc(state: State, l: int):
    for loc, v, _ in walk(state):
        if isinstance(v, Loc) and v.l == l:
            return loc
    return None


# ---------------------------------------------------------------- access errors


class AccessError(Exception):
    """An access that cannot proceed as is."""

    fixable = False


class BlockedByLoan(AccessError):
    fixable = True

    def __init__(self, l: int, shared: bool = False):
        super().__init__(f"blocked by {'shared' if shared else 'mutable'} loan l{l}")
        self.l = l
        self.shared = shared


class BlockedByReserved(AccessError):
    fixable = True

    def __init__(self, l: int):
        super().__init__(f"blocked by reserved borrow l{l}")
        self.l = l


class BlockedByLocation(AccessError):
    fixable = True

    def __init__(self, l: int):
        super().__init__(f"blocked by location l{l}")
        self.l = l


class NeedsExpansion(AccessError):
    """A symbolic value must be expanded before the path can proceed."""

    fixable = True

    def __init__(self, loc, sym: Sym):
        super().__init__(f"symbolic value s{sym.id} needs expansion")
        self.loc = loc
        self.sym = sym


class BlockedByBot(AccessError):
    def __init__(self, what: str = ""):
        super().__init__(f"read of bottom{(' at ' + what) if what else ''}")


class NoMatchingSharedLoan(AccessError):
    def __init__(self, l: int):
        super().__init__(f"no shared loan for l{l}")
        self.l = l


class PathMismatch(AccessError):
    pass


class NotCopyable(AccessError):
    pass


class MoveOfLoanedValue(AccessError):
    pass


# ---------------------------------------------------------------- read / write


def focus(state: State, p: Place, k: str, stop_at_loan: bool = False):
    """Location addressed by p under capability k.

    Dereferencing a shared borrow (or an HLPL pointer) lands in the payload
    of the matching loan (location); with stop_at_loan the last such
    dereference stops at the loan node itself, which is what the borrow
    rvalues need to reuse an existing loan.
    """
    i = state.index_of(p.base)
    loc = (("e", i), ())
    v = state.env[i].value
    n = len(p.path)
    for step, e in enumerate(p.path):
        # wrappers that can be traversed only when reading at imm
        while isinstance(v, (SharedLoan, Loc)):
            if k != IMM:
                raise BlockedByLoan(v.l, shared=True) if isinstance(v, SharedLoan) else BlockedByLocation(v.l)
            loc = (loc[0], loc[1] + (0,))
            v = v.value
        last = step == n - 1
        if isinstance(v, MutLoan):
            raise BlockedByLoan(v.l)
        if isinstance(v, Bot):
            raise BlockedByBot(str(p))
        if isinstance(v, Sym):
            raise NeedsExpansion(loc, v)
        if e is PE.DEREF:
            if isinstance(v, BoxV):
                loc, v = (loc[0], loc[1] + (0,)), v.value
            elif isinstance(v, MutBorrow):
                if k == MOV:
                    raise PathMismatch(f"cannot move out from under borrow in {p}")
                loc, v = (loc[0], loc[1] + (0,)), v.value
            elif isinstance(v, SharedBorrow):
                if k != IMM:
                    raise PathMismatch(f"cannot access {p} through a shared borrow at {k}")
                lloc = find_loan(state, v.l)
                if lloc is None:
                    raise NoMatchingSharedLoan(v.l)
                loc = lloc if (stop_at_loan and last) else (lloc[0], lloc[1] + (0,))
                v = get_at(state, loc)
            elif isinstance(v, ReservedBorrow):
                raise BlockedByReserved(v.l)
            elif isinstance(v, Ptr):
                if v.box:
                    loc = _heap_loc(state, v.l)
                else:
                    if k == MOV:
                        raise PathMismatch(f"cannot move out from under pointer in {p}")
                    lloc = find_loc(state, v.l)
                    if lloc is None:
                        raise PathMismatch(f"dangling pointer l{v.l}")
                    loc = lloc if (stop_at_loan and last) else (lloc[0], lloc[1] + (0,))
                v = get_at(state, loc)
            else:
                raise PathMismatch(f"cannot dereference {type(v).__name__} in {p}")
        elif e in (PE.FIELD0, PE.FIELD1):
            if not isinstance(v, Pair):
                raise PathMismatch(f"expected a pair in {p}, got {type(v).__name__}")
            j = 0 if e is PE.FIELD0 else 1
            loc, v = (loc[0], loc[1] + (j,)), children(v)[j]
        else:
            tag = 0 if e is PE.LEFT else 1
            if not isinstance(v, Variant) or v.tag != tag:
                raise PathMismatch(f"variant mismatch in {p}")
            loc, v = (loc[0], loc[1] + (0,)), v.value
    if isinstance(v, MutLoan):
        raise BlockedByLoan(v.l)
    return loc


def _heap_loc(state: State, bid: int):
    for i, b in enumerate(state.env):
        if b.key == Heap(bid):
            return (("e", i), ())
    raise PathMismatch(f"dangling box pointer b{bid}")


def read_place(state: State, p: Place, k: str):
    return get_at(state, focus(state, p, k))


def write_place(state: State, p: Place, k: str, w) -> State:
    return set_at(state, focus(state, p, k), w)


def copy_value(v, fresh_sym=None):
    """Copy rules: shared loans are stripped, shared borrows duplicated."""
    if isinstance(v, Lit):
        return v
    if isinstance(v, Pair):
        return Pair(copy_value(v.fst, fresh_sym), copy_value(v.snd, fresh_sym))
    if isinstance(v, Variant):
        return Variant(v.tag, copy_value(v.value, fresh_sym))
    if isinstance(v, (SharedLoan, Loc)):
        return copy_value(v.value, fresh_sym)
    if isinstance(v, SharedBorrow):
        return v
    if isinstance(v, Ptr) and not v.box:
        return v
    if isinstance(v, Sym) and fresh_sym is not None:
        return fresh_sym(v)
    raise NotCopyable(f"cannot copy {type(v).__name__}")


# ---------------------------------------------------------------- well-formedness


def check_wellformed(state: State, complete: bool = True) -> list[str]:
    """Every violated invariant as a string; empty when the state is well formed."""
    issues = []
    loans, mborrows, borrow_ids = {}, {}, set()
    for loc, v, anc in walk(state):
        if isinstance(v, Marked):
            continue
        if isinstance(v, LOANS):
            loans[v.l] = loans.get(v.l, 0) + 1
            if isinstance(v, SharedLoan):
                for x in _shallow(v.value):
                    if isinstance(x, (MutLoan, Bot)):
                        issues.append(f"bad-shared-loan-payload(l{v.l})")
                        break
        elif isinstance(v, MutBorrow):
            mborrows[v.l] = mborrows.get(v.l, 0) + 1
            borrow_ids.add(v.l)
        elif isinstance(v, (SharedBorrow, ReservedBorrow)):
            borrow_ids.add(v.l)
    for l, c in sorted(loans.items()):
        if c > 1:
            issues.append(f"duplicate-loan(l{l})")
    for l, c in sorted(mborrows.items()):
        if c > 1:
            issues.append(f"duplicate-borrow(l{l})")
    if complete:
        for l in sorted(borrow_ids):
            if l not in loans:
                issues.append(f"dangling-borrow(l{l})")
    locs = {}
    for _, v, _ in walk(state):
        if isinstance(v, Loc):
            locs[v.l] = locs.get(v.l, 0) + 1
    for l, c in sorted(locs.items()):
        if c > 1:
            issues.append(f"duplicate-location(l{l})")
    return issues


def _shallow(v):
    """Sub-values of v not below a borrow."""
    stack = [v]
    while stack:
        x = stack.pop()
        yield x
        if not isinstance(x, (MutBorrow,)):
            stack.extend(children(x))
