"""Block-and-offset machine and the concretization of pointer states into it.

Every variable and every allocation owns a block of word-sized cells.  A
cell holds a literal, an address `(block, offset)` or the poison value
`UNDEF`.  Places are resolved to addresses using the static types; sums are
tagged unions whose first cell is the tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .interp_llbc import Machine, PanicSignal, StuckError, apply_binop, apply_unop
from .llbc_state import BOT, Bot, Heap, Loc, Pair, Ptr, State, Variant
from .syntax import (
    PE, UNIT, UNIT_LIT, BoxT, Const, Copy, Lit, MkPair, MkSum, Move, New, PairT, Place,
    Prim, RecT, Ref, RefT, SumT, TVar, UnOp, BinOp, Use, unfold,
)


class PlError(StuckError):
    kind = "PlError"

    def __init__(self, msg: str = ""):
        super().__init__(f"{self.kind}: {msg}" if msg else self.kind)


class ReadUndef(PlError):
    kind = "ReadUndef"


class OutOfBounds(PlError):
    kind = "OutOfBounds"


class UseAfterFree(PlError):
    kind = "UseAfterFree"


class DoubleFree(PlError):
    kind = "DoubleFree"


class DerefOfNonAddress(PlError):
    kind = "DerefOfNonAddress"


class UnknownBlock(PlError):
    kind = "UnknownBlock"


class InfiniteSize(PlError):
    kind = "InfiniteSize"


class SizeMismatch(PlError):
    kind = "SizeMismatch"


class IncompatibleMaps(Exception):
    pass


class ShapeMismatch(Exception):
    pass


@dataclass(frozen=True, slots=True)
class Undef:
    def __str__(self):
        return "undef"


UNDEF = Undef()


@dataclass(frozen=True, slots=True)
class Addr:
    block: int
    offset: int

    def __str__(self):
        return f"&b{self.block}+{self.offset}"


@dataclass(frozen=True)
class Block:
    cells: tuple
    ty: object = field(compare=False)


@dataclass(frozen=True)
class PlState:
    env: tuple = ()  # ((name, block id, frame), ...)
    heap: tuple = ()  # ((block id, Block), ...) in allocation order
    stack: tuple = ()

    def block_of(self, name: str) -> int:
        top = len(self.stack) - 1
        for x, b, fr in reversed(self.env):
            if x == name and fr == top:
                return b
        for x, b, _ in reversed(self.env):
            if x == name:
                return b
        raise UnknownBlock(f"no block for {name}")

    def block(self, bi: int) -> Block:
        for b, blk in self.heap:
            if b == bi:
                return blk
        raise UseAfterFree(f"block b{bi} is not allocated")

    def has_block(self, bi: int) -> bool:
        return any(b == bi for b, _ in self.heap)

    def set_block(self, bi: int, blk: Block) -> PlState:
        heap = tuple((b, blk if b == bi else x) for b, x in self.heap)
        return replace(self, heap=heap)

    def add_block(self, bi: int, blk: Block) -> PlState:
        return replace(self, heap=self.heap + ((bi, blk),))

    def remove_block(self, bi: int) -> PlState:
        if not self.has_block(bi):
            raise DoubleFree(f"block b{bi} freed twice")
        return replace(self, heap=tuple((b, x) for b, x in self.heap if b != bi))


# ---------------------------------------------------------------- sizes and addresses


def sizeof(ty, _unfolding: frozenset = frozenset()) -> int:
    if isinstance(ty, Prim) or isinstance(ty, (BoxT, RefT)):
        return 1
    if isinstance(ty, PairT):
        return sizeof(ty.fst, _unfolding) + sizeof(ty.snd, _unfolding)
    if isinstance(ty, SumT):
        return 1 + max(sizeof(ty.left, _unfolding), sizeof(ty.right, _unfolding))
    if isinstance(ty, RecT):
        if ty in _unfolding:
            raise InfiniteSize(f"recursion in {ty} is not guarded by a box")
        return sizeof(unfold(ty), _unfolding | {ty})
    if isinstance(ty, TVar):
        raise InfiniteSize(f"size of unsubstituted type variable {ty}")
    raise TypeError(ty)


def resolve_address(st: PlState, p: Place, types: tuple | None = None) -> Addr:
    """Address of p; types are the (substituted) types along the path."""
    types = types or p.types
    addr = Addr(st.block_of(p.base), 0)
    for e, ty in zip(p.path, types):
        u = unfold(ty)
        if e is PE.DEREF:
            cell = _cells(st, addr, 1)[0]
            if cell is UNDEF:
                raise ReadUndef(f"dereference of undefined pointer in {p}")
            if not isinstance(cell, Addr):
                raise DerefOfNonAddress(f"{p}: {cell} is not an address")
            addr = cell
        elif e is PE.FIELD0:
            pass
        elif e is PE.FIELD1:
            addr = Addr(addr.block, addr.offset + sizeof(u.fst))
        else:
            addr = Addr(addr.block, addr.offset + 1)
        _bounds(st, addr, 1)
    return addr


def _bounds(st: PlState, addr: Addr, n: int):
    blk = st.block(addr.block)
    if addr.offset < 0 or addr.offset + n > len(blk.cells):
        raise OutOfBounds(f"{n} cells at b{addr.block}+{addr.offset} (block has {len(blk.cells)})")


def _cells(st: PlState, addr: Addr, n: int) -> tuple:
    _bounds(st, addr, n)
    return st.block(addr.block).cells[addr.offset:addr.offset + n]


def read_place_pl(st: PlState, p: Place, types: tuple | None = None) -> tuple:
    types = types or p.types
    return _cells(st, resolve_address(st, p, types), sizeof(types[-1]))


def write_place_pl(st: PlState, p: Place, cells: tuple, types: tuple | None = None) -> PlState:
    types = types or p.types
    n = sizeof(types[-1])
    if len(cells) != n:
        raise SizeMismatch(f"writing {len(cells)} cells into {p} of size {n}")
    addr = resolve_address(st, p, types)
    _bounds(st, addr, n)
    blk = st.block(addr.block)
    new = blk.cells[:addr.offset] + tuple(cells) + blk.cells[addr.offset + n:]
    return st.set_block(addr.block, Block(new, blk.ty))


def check_defined(cells: tuple, ty, what: str = ""):
    """Raise ReadUndef if a meaningful cell (not sum padding) is undefined."""
    def go(i, ty):
        u = unfold(ty)
        if isinstance(u, PairT):
            return go(go(i, u.fst), u.snd)
        if isinstance(u, SumT):
            tag = cells[i]
            if tag is UNDEF:
                raise ReadUndef(f"undefined tag in {what}")
            go(i + 1, u.left if tag.value == 0 else u.right)
            return i + sizeof(u)
        if cells[i] is UNDEF:
            raise ReadUndef(f"read of undefined value in {what}")
        return i + 1
    go(0, ty)


# ---------------------------------------------------------------- machine


class PlMachine(Machine):
    def __init__(self, program, fresh=None, trace=None, on_step=None, on_write=None):
        super().__init__(program, fresh, trace, on_step)
        self.on_write = on_write

    def types_of(self, p: Place) -> tuple:
        return tuple(self.ty(t) for t in p.types)

    def read(self, st, p):
        return read_place_pl(st, p, self.types_of(p))

    def write(self, st, p, cells):
        types = self.types_of(p)
        if self.on_write:
            self.on_write(p, len(cells), sizeof(types[-1]))
        return write_place_pl(st, p, cells, types)

    def eval_operand(self, st, op):
        if isinstance(op, Const):
            return (op.lit,), st
        cells = self.read(st, op.place)
        check_defined(cells, self.ty(op.place.ty), str(op.place))
        return cells, st

    def _scalar(self, cells, what):
        c = cells[0]
        if c is UNDEF:
            raise ReadUndef(what)
        if not isinstance(c, Lit):
            raise StuckError(f"{what}: {c} is not a literal")
        return c

    def eval_rvalue(self, st, rv, ty):
        if isinstance(rv, Use):
            return self.eval_operand(st, rv.op)
        if isinstance(rv, UnOp):
            a, st = self.eval_operand(st, rv.arg)
            return (apply_unop(rv.op, self._scalar(a, "operand")),), st
        if isinstance(rv, BinOp):
            a, st = self.eval_operand(st, rv.lhs)
            b, st = self.eval_operand(st, rv.rhs)
            if rv.op == "==" and isinstance(a[0], Addr):
                return (Lit(a[0] == b[0], "bool"),), st
            return (apply_binop(rv.op, self._scalar(a, "operand"), self._scalar(b, "operand")),), st
        if isinstance(rv, Ref):
            return (resolve_address(st, rv.place, self.types_of(rv.place)),), st
        if isinstance(rv, MkPair):
            a, st = self.eval_operand(st, rv.fst)
            b, st = self.eval_operand(st, rv.snd)
            return a + b, st
        if isinstance(rv, MkSum):
            v, st = self.eval_operand(st, rv.op)
            n = sizeof(unfold(ty))
            return (Lit(rv.tag, "u32"),) + v + (UNDEF,) * (n - 1 - len(v)), st
        if isinstance(rv, New):
            v, st = self.eval_operand(st, rv.op)
            bi = self.fresh()
            inner = unfold(ty).inner if ty is not None else None
            return (Addr(bi, 0),), st.add_block(bi, Block(tuple(v), inner))
        raise TypeError(rv)

    def truth(self, v) -> bool:
        c = self._scalar(v, "condition")
        if c.ty != "bool":
            raise StuckError(f"condition is not a boolean: {c}")
        return bool(c.value)

    def assign(self, st, p, v):
        return self.write(st, p, v)

    def match_tag(self, st, p):
        cells = self.read(st, p)
        return self._scalar(cells, f"tag of {p}").value, st

    def free(self, st, p):
        cell = self.read(st, p)[0]
        if not isinstance(cell, Addr) or cell.offset != 0:
            raise DerefOfNonAddress(f"free of {cell}")
        return st.remove_block(cell.block)

    def push_frame(self, st, f, argvals):
        top = len(st.stack)
        env, names = list(st.env), ["ret"]
        ret_ty = self.ty(f.ret)
        init = [("ret", ret_ty, (UNIT_LIT,) if ret_ty == UNIT else (UNDEF,) * sizeof(ret_ty))]
        for (x, t), v in zip(f.args, argvals):
            init.append((x, self.ty(t), tuple(v)))
        for x, t in f.locals:
            init.append((x, self.ty(t), (UNDEF,) * sizeof(self.ty(t))))
        for x, t, cells in init:
            bi = self.fresh()
            env.append((x, bi, top))
            st = st.add_block(bi, Block(cells, t))
            names.append(x)
        return replace(st, env=tuple(env), stack=st.stack + (tuple(dict.fromkeys(names)),))

    def pop_frame(self, st, f):
        top = len(st.stack) - 1
        ret = st.block(st.block_of("ret")).cells
        for x, bi, fr in st.env:
            if fr == top:
                st = st.remove_block(bi)
        st = replace(st, env=tuple(e for e in st.env if e[2] != top), stack=st.stack[:-1])
        return ret, st


def eval_statement_pl(st: PlState, s, fuel: int, program=None, fresh=None, trace=None):
    from .llbc_state import Fresh
    top = max([b for b, _ in st.heap], default=-1)
    return PlMachine(program, fresh or Fresh(top + 1), trace).run(st, s, fuel)


# ---------------------------------------------------------------- concretization


@dataclass
class ConcretizationMaps:
    blockof: dict  # variable name or Heap(id) -> (block id, type)
    addrof: dict  # location id -> Addr


def _walk_offsets(v, ty, off, out):
    """Record (loc id -> offset) for every location in v laid out at off."""
    u = unfold(ty)
    if isinstance(v, Loc):
        out.setdefault(v.l, off)
        _walk_offsets(v.value, ty, off, out)
    elif isinstance(v, Pair):
        _walk_offsets(v.fst, u.fst, off, out)
        _walk_offsets(v.snd, u.snd, off + sizeof(u.fst), out)
    elif isinstance(v, Variant):
        _walk_offsets(v.value, u.left if v.tag == 0 else u.right, off + 1, out)


def synthesize_maps(st: State) -> ConcretizationMaps:
    """Blocks for variables in environment order, then boxes by id; addresses by a left-to-right scan."""
    blockof, addrof = {}, {}
    n = 0
    for b in st.env:
        if isinstance(b.key, str):
            blockof[(b.key, b.frame)] = (n, b.ty)
            n += 1
    for b in sorted((b for b in st.env if isinstance(b.key, Heap)), key=lambda b: b.key.id):
        blockof[b.key] = (n, b.ty)
        n += 1
    for b in st.env:
        key = (b.key, b.frame) if isinstance(b.key, str) else b.key
        if key in blockof:
            offs = {}
            _walk_offsets(b.value, b.ty, 0, offs)
            for l, o in offs.items():
                addrof.setdefault(l, Addr(blockof[key][0], o))
    return ConcretizationMaps(blockof, addrof)


def concretize_value(v, ty, maps: ConcretizationMaps) -> tuple:
    u = unfold(ty)
    if isinstance(v, Lit):
        return (v,)
    if isinstance(v, Bot):
        return (UNDEF,) * sizeof(u)
    if isinstance(v, Pair):
        return concretize_value(v.fst, u.fst, maps) + concretize_value(v.snd, u.snd, maps)
    if isinstance(v, Variant):
        inner = concretize_value(v.value, u.left if v.tag == 0 else u.right, maps)
        return (Lit(v.tag, "u32"),) + inner + (UNDEF,) * (sizeof(u) - 1 - len(inner))
    if isinstance(v, Loc):
        return concretize_value(v.value, ty, maps)
    if isinstance(v, Ptr):
        if v.box:
            if Heap(v.l) not in maps.blockof:
                raise IncompatibleMaps(f"no block for box b{v.l}")
            return (Addr(maps.blockof[Heap(v.l)][0], 0),)
        if v.l not in maps.addrof:
            raise IncompatibleMaps(f"no address for location l{v.l}")
        return (maps.addrof[v.l],)
    raise IncompatibleMaps(f"cannot concretize {type(v).__name__}")


def compatible(maps: ConcretizationMaps, st: State) -> list[str]:
    issues = []
    blocks = [b for b, _ in maps.blockof.values()]
    if len(set(blocks)) != len(blocks):
        issues.append("blockof is not injective")
    for b in st.env:
        key = (b.key, b.frame) if isinstance(b.key, str) else b.key
        if isinstance(b.key, (str, Heap)) and key not in maps.blockof:
            issues.append(f"no block for {b.key}")
            continue
        if key in maps.blockof:
            offs = {}
            _walk_offsets(b.value, b.ty, 0, offs)
            for l, o in offs.items():
                if maps.addrof.get(l) != Addr(maps.blockof[key][0], o):
                    issues.append(f"address of l{l} does not match its location")
    from .llbc_state import walk
    for _, v, _ in walk(st):
        if isinstance(v, (Loc, Ptr)) and not (isinstance(v, Ptr) and v.box) and v.l not in maps.addrof:
            issues.append(f"no address for l{v.l}")
    return issues


def concretize(st: State, maps: ConcretizationMaps | None = None) -> PlState:
    maps = maps or synthesize_maps(st)
    issues = compatible(maps, st)
    if issues:
        raise IncompatibleMaps("; ".join(issues))
    env, heap = [], []
    for b in st.env:
        key = (b.key, b.frame) if isinstance(b.key, str) else b.key
        if key not in maps.blockof:
            continue
        bi, ty = maps.blockof[key]
        if isinstance(b.key, str):
            env.append((b.key, bi, b.frame))
        heap.append((bi, Block(concretize_value(b.value, ty, maps), ty)))
    heap.sort(key=lambda x: x[0])
    return PlState(tuple(env), tuple(heap), tuple(st.stack))


def normalize_pl(st: PlState) -> PlState:
    """Renumber blocks: variables in environment order, then the rest by id."""
    order = [b for _, b, _ in st.env] + sorted(b for b, _ in st.heap if b not in {e[1] for e in st.env})
    ren = {b: i for i, b in enumerate(order)}

    def cell(c):
        return Addr(ren.get(c.block, -1 - c.block), c.offset) if isinstance(c, Addr) else c
    heap = sorted(((ren[b], Block(tuple(cell(c) for c in blk.cells), blk.ty)) for b, blk in st.heap if b in ren),
                  key=lambda x: x[0])
    return PlState(tuple((x, ren[b], fr) for x, b, fr in st.env), tuple(heap), st.stack)


def pl_state_le(a: PlState, b: PlState) -> bool:
    """a agrees with b everywhere b is defined."""
    if [(x, fr) for x, _, fr in a.env] != [(x, fr) for x, _, fr in b.env] or \
            sorted(bi for bi, _ in a.heap) != sorted(bi for bi, _ in b.heap):
        raise ShapeMismatch("states have different variables or blocks")
    if any(ba != bb for (_, ba, _), (_, bb, _) in zip(a.env, b.env)):
        raise ShapeMismatch("variables live in different blocks")
    hb = dict(b.heap)
    for bi, blk in a.heap:
        other = hb[bi].cells
        if len(other) != len(blk.cells):
            raise ShapeMismatch(f"block b{bi} sizes differ")
        if any(y is not UNDEF and x != y for x, y in zip(blk.cells, other)):
            return False
    return True


def decode(st: PlState, cells: tuple, ty) -> tuple:
    """Literal observation of a value laid out in cells (boxes followed)."""
    out = []

    def go(cs, i, ty):
        u = unfold(ty)
        if isinstance(u, PairT):
            return go(cs, go(cs, i, u.fst), u.snd)
        if isinstance(u, SumT):
            tag = cs[i]
            if tag is UNDEF:
                raise ReadUndef("undefined tag")
            out.append(tag.value)
            go(cs, i + 1, u.left if tag.value == 0 else u.right)
            return i + sizeof(u)
        if isinstance(u, BoxT):
            a = cs[i]
            if not isinstance(a, Addr):
                raise ReadUndef("undefined box")
            go(_cells(st, a, sizeof(u.inner)), 0, u.inner)
            return i + 1
        if isinstance(u, RefT):
            raise ValueError("references are not observable")
        c = cs[i]
        if c is UNDEF:
            raise ReadUndef("undefined cell")
        if c.ty != "unit":
            out.append(c.value)
        return i + 1
    go(cells, 0, ty)
    return tuple(out)


def format_pl(st: PlState) -> str:
    """Heap dump: one `b<i>: τ = [cells]` line per block, variables first."""
    names = {b: x for x, b, _ in st.env}
    lines = []
    for bi, blk in sorted(st.heap, key=lambda x: x[0]):
        cells = ", ".join(str(c) for c in blk.cells)
        label = f"  // {names[bi]}" if bi in names else ""
        lines.append(f"b{bi}: {blk.ty if blk.ty is not None else '?'} = [{cells}]{label}")
    return "\n".join(lines)
