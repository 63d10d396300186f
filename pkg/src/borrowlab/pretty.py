"""Canonical text for states: deterministic, id-normalized, and parseable back.

    x -> loan^m l0
    px -> borrow^m l0 (1, bot)
    _ -> borrow^m l1 (loan^m l2)
    b0 -> Left ()
    A0 { borrow^m l3 _, loan^m l4, @l borrow^s l5 }

Loan/location ids print as `l<n>`, symbolic values as `s<n>`, boxes as
`b<n>`, abstractions as `A<n>`; each kind is renumbered by first occurrence.
"""

from __future__ import annotations

import re

from .llbc_state import (
    BOT, Abstraction, Anon, Binding, Bot, BoxV, Heap, Ignored, Loc, Marked, MutBorrow, MutLoan,
    Pair, Ptr, ReservedBorrow, SharedBorrow, SharedLoan, State, Sym, Variant,
)
from .syntax import Lit, ParseError


class _Names:
    def __init__(self, normalize: bool):
        self.normalize = normalize
        self.maps = {"l": {}, "s": {}, "b": {}, "A": {}}

    def __call__(self, kind: str, i: int) -> str:
        if not self.normalize:
            return f"{kind}{i}"
        m = self.maps[kind]
        if i not in m:
            m[i] = len(m)
        return f"{kind}{m[i]}"


def _val(v, n: _Names, nested: bool = False) -> str:
    def wrap(s):
        return f"({s})" if nested else s
    if isinstance(v, Lit):
        return str(v)
    if isinstance(v, Bot):
        return "bot"
    if isinstance(v, Pair):
        return f"({_val(v.fst, n)}, {_val(v.snd, n)})"
    if isinstance(v, Variant):
        return wrap(f"{'Left' if v.tag == 0 else 'Right'} {_val(v.value, n, True)}")
    if isinstance(v, BoxV):
        return wrap(f"box {_val(v.value, n, True)}")
    if isinstance(v, MutLoan):
        return wrap(f"loan^m {n('l', v.l)}")
    if isinstance(v, MutBorrow):
        return wrap(f"borrow^m {n('l', v.l)} {_val(v.value, n, True)}")
    if isinstance(v, SharedLoan):
        return wrap(f"loan^s {n('l', v.l)} {_val(v.value, n, True)}")
    if isinstance(v, SharedBorrow):
        return wrap(f"borrow^s {n('l', v.l)}")
    if isinstance(v, ReservedBorrow):
        return wrap(f"borrow^r {n('l', v.l)}")
    if isinstance(v, Sym):
        return n("s", v.id)
    if isinstance(v, Ignored):
        return "_"
    if isinstance(v, Loc):
        return wrap(f"loc {n('l', v.l)} {_val(v.value, n, True)}")
    if isinstance(v, Ptr):
        return wrap(f"ptr {n('b', v.l) if v.box else n('l', v.l)}")
    if isinstance(v, Marked):
        return wrap(f"@{v.side.lower()} {_val(v.value, n, True)}")
    raise TypeError(v)


def format_value(v, normalize: bool = False) -> str:
    return _val(v, _Names(normalize))


def format_state(st, normalize: bool = True) -> str:
    """One binding per line: named, then boxes, then anonymous, then abstractions."""
    from .interp_pl import PlState, format_pl
    if isinstance(st, PlState):
        return format_pl(st)
    n = _Names(normalize)
    lines = []
    for b in st.env:
        if isinstance(b.key, str):
            lines.append(f"{b.key} -> {_val(b.value, n)}")
    heap = [b for b in st.env if isinstance(b.key, Heap)]
    # boxes print in the order their pointers were first seen
    heap.sort(key=lambda b: (b.key.id not in n.maps["b"], n.maps["b"].get(b.key.id, b.key.id)))
    i = 0
    while i < len(heap):
        b = heap[i]
        lines.append(f"{n('b', b.key.id)} -> {_val(b.value, n)}")
        i += 1
        rest = heap[i:]
        rest.sort(key=lambda b: (b.key.id not in n.maps["b"], n.maps["b"].get(b.key.id, b.key.id)))
        heap[i:] = rest
    for b in st.env:
        if isinstance(b.key, Anon):
            lines.append(f"_ -> {_val(b.value, n)}")
    for a in st.abs:
        elems = ", ".join(_val(e, n) for e in a.elems)
        lines.append(f"{n('A', a.id)} {{ {elems} }}" if elems else f"{n('A', a.id)} {{ }}")
    return "\n".join(lines)


# ---------------------------------------------------------------- parsing


_TOK = re.compile(r"\s*(->|\^[msr]|@[lr]|[(){},;]|[A-Za-z_][A-Za-z0-9_]*|-?\d+(?:i32|u32)?)")


class _StateParser:
    def __init__(self, text: str):
        self.toks = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("//")[0]
            pos = 0
            while pos < len(line):
                if line[pos:].strip() == "":
                    break
                m = _TOK.match(line, pos)
                if not m:
                    raise ParseError(f"unexpected character {line[pos:].strip()[0]!r}", lineno, pos + 1)
                self.toks.append((m.group(1), lineno, m.start(1) + 1))
                pos = m.end()
            self.toks.append(("\n", lineno, len(line) + 1))
        self.i = 0

    def peek(self):
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def next(self):
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of state", 0, 0)
        self.i += 1
        return t

    def expect(self, t):
        got = self.next()
        if got != t:
            ln, col = self.toks[self.i - 1][1:]
            raise ParseError(f"expected {t!r}, found {got!r}", ln, col)

    def fail(self, msg):
        ln, col = self.toks[min(self.i, len(self.toks) - 1)][1:] if self.toks else (0, 0)
        raise ParseError(msg, ln, col)

    def skip_seps(self):
        while self.peek() in ("\n", ";", ","):
            self.i += 1

    def ident_id(self, prefix: str) -> int:
        t = self.next()
        if not re.fullmatch(prefix + r"\d+", t or ""):
            self.i -= 1
            self.fail(f"expected {prefix}<n>, found {t!r}")
        return int(t[len(prefix):])

    def state(self) -> State:
        env, abs_, names = [], [], []
        anon = 10**6
        self.skip_seps()
        while self.peek() is not None:
            t = self.next()
            if re.fullmatch(r"A\d+", t) and self.peek() == "{":
                self.next()
                elems = []
                while True:
                    while self.peek() in ("\n", ","):
                        self.next()
                    if self.peek() == "}":
                        self.next()
                        break
                    elems.append(self.value())
                abs_.append(Abstraction(int(t[1:]), tuple(elems)))
            else:
                self.expect("->")
                v = self.value()
                if t == "_":
                    env.append(Binding(Anon(anon), v, None, 0))
                    anon += 1
                elif re.fullmatch(r"b\d+", t):
                    env.append(Binding(Heap(int(t[1:])), v, None, -1))
                else:
                    env.append(Binding(t, v, None, 0))
                    names.append(t)
            self.skip_seps()
        return State(tuple(env), tuple(abs_), (tuple(names),))

    def value(self):
        t = self.peek()
        if t == "(":
            self.next()
            if self.peek() == ")":
                self.next()
                return Lit(None, "unit")
            a = self.value()
            if self.peek() == ",":
                self.next()
                b = self.value()
                self.expect(")")
                return Pair(a, b)
            self.expect(")")
            return a
        t = self.next()
        if t == "bot":
            return BOT
        if t == "_":
            return Ignored(None)
        if t in ("true", "false"):
            return Lit(t == "true", "bool")
        if re.fullmatch(r"-?\d+(i32|u32)?", t):
            ty = "i32" if t.endswith("i32") else "u32"
            return Lit(int(t.removesuffix("i32").removesuffix("u32")), ty)
        if t in ("Left", "Right"):
            return Variant(0 if t == "Left" else 1, self.value())
        if t == "box":
            return BoxV(self.value())
        if t in ("loan", "borrow"):
            kind = self.next()
            l = self.ident_id("l")
            if (t, kind) == ("loan", "^m"):
                return MutLoan(l)
            if (t, kind) == ("loan", "^s"):
                return SharedLoan(l, self.value())
            if (t, kind) == ("borrow", "^m"):
                return MutBorrow(l, self.value())
            if (t, kind) == ("borrow", "^s"):
                return SharedBorrow(l)
            if (t, kind) == ("borrow", "^r"):
                return ReservedBorrow(l)
            self.fail(f"unknown {t}{kind}")
        if t == "loc":
            l = self.ident_id("l")
            return Loc(l, self.value())
        if t == "ptr":
            nxt = self.peek() or ""
            if nxt.startswith("b"):
                return Ptr(self.ident_id("b"), box=True)
            return Ptr(self.ident_id("l"))
        if t in ("@l", "@r"):
            return Marked(t[1].upper(), self.value())
        if re.fullmatch(r"s\d+", t):
            return Sym(int(t[1:]), None)
        self.i -= 1
        self.fail(f"unexpected {t!r} in value")


def parse_value(text: str):
    p = _StateParser(text)
    p.skip_seps()
    v = p.value()
    p.skip_seps()
    if p.peek() is not None:
        p.fail("trailing input after value")
    return v


def parse_state(text: str) -> State:
    """Inverse of format_state (types are not recorded, so values come back untyped)."""
    return _StateParser(text).state()
