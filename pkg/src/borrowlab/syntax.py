"""Types, AST, parser, printer and resolver for the LLBC surface language."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum


class LangError(Exception):
    """Base class for front-end errors (exit code 3 in the CLI)."""


class ParseError(LangError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col


class ResolveError(LangError):
    def __init__(self, kind: str, msg: str):
        super().__init__(f"{kind}: {msg}")
        self.kind = kind


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Prim:
    name: str  # bool | u32 | i32 | unit

    def __str__(self):
        return "()" if self.name == "unit" else self.name


BOOL = Prim("bool")
U32 = Prim("u32")
I32 = Prim("i32")
UNIT = Prim("unit")


@dataclass(frozen=True)
class PairT:
    fst: object
    snd: object

    def __str__(self):
        return f"({self.fst}, {self.snd})"


@dataclass(frozen=True)
class SumT:
    left: object
    right: object

    def __str__(self):
        return f"Sum<{self.left}, {self.right}>"


@dataclass(frozen=True)
class BoxT:
    inner: object

    def __str__(self):
        return f"Box<{self.inner}>"


@dataclass(frozen=True)
class RefT:
    region: str
    inner: object
    mut: bool

    def __str__(self):
        r = "" if self.region == "'_" else self.region + " "
        return f"&{r}{'mut ' if self.mut else ''}{self.inner}"


@dataclass(frozen=True)
class RecT:
    binder: str
    body: object

    def __str__(self):
        return f"mu {self.binder}. {self.body}"


@dataclass(frozen=True)
class TVar:
    name: str

    def __str__(self):
        return self.name


Type = Prim | PairT | SumT | BoxT | RefT | RecT | TVar


def subst_type(ty, env: dict):
    """Substitute type variables (and region names, keyed by "'r") in ty."""
    if isinstance(ty, TVar):
        return env.get(ty.name, ty)
    if isinstance(ty, PairT):
        return PairT(subst_type(ty.fst, env), subst_type(ty.snd, env))
    if isinstance(ty, SumT):
        return SumT(subst_type(ty.left, env), subst_type(ty.right, env))
    if isinstance(ty, BoxT):
        return BoxT(subst_type(ty.inner, env))
    if isinstance(ty, RefT):
        return RefT(env.get(ty.region, ty.region), subst_type(ty.inner, env), ty.mut)
    if isinstance(ty, RecT):
        inner = {k: v for k, v in env.items() if k != ty.binder}
        return RecT(ty.binder, subst_type(ty.body, inner))
    return ty


def unfold(ty):
    """Unroll recursive types at the head until a structural type shows."""
    seen = 0
    while isinstance(ty, RecT):
        ty = subst_type(ty.body, {ty.binder: ty})
        seen += 1
        if seen > 64:
            raise LangError(f"unguarded recursive type {ty}")
    return ty


def has_borrows_type(ty, seen=frozenset()) -> bool:
    if isinstance(ty, RefT):
        return True
    if isinstance(ty, PairT):
        return has_borrows_type(ty.fst, seen) or has_borrows_type(ty.snd, seen)
    if isinstance(ty, SumT):
        return has_borrows_type(ty.left, seen) or has_borrows_type(ty.right, seen)
    if isinstance(ty, BoxT):
        return has_borrows_type(ty.inner, seen)
    if isinstance(ty, RecT):
        return has_borrows_type(ty.body, seen | {ty.binder})
    return False


# ---------------------------------------------------------------- literals and places


@dataclass(frozen=True, slots=True)
class Lit:
    """A literal value; shared by every semantics."""

    value: object
    ty: str  # bool | u32 | i32 | unit

    def __str__(self):
        if self.ty == "bool":
            return "true" if self.value else "false"
        if self.ty == "unit":
            return "()"
        if self.ty == "i32":
            return f"{self.value}i32"
        return str(self.value)


UNIT_LIT = Lit(None, "unit")


class PE(Enum):
    DEREF = "*"
    FIELD0 = ".0"
    FIELD1 = ".1"
    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True)
class Place:
    base: str
    path: tuple = ()
    # type at each step: types[0] is the base type, types[-1] the place type
    types: tuple | None = field(default=None, compare=False)

    @property
    def ty(self):
        return self.types[-1] if self.types else None

    def __str__(self):
        s = self.base
        for e in self.path:
            if e is PE.DEREF:
                s = f"*{s}" if _atomic(s) else f"*({s})"
            elif e in (PE.FIELD0, PE.FIELD1):
                s = f"{s}{e.value}" if not s.startswith("*") else f"({s}){e.value}"
            else:
                s = f"({s} as {e.value})"
        return s


def _atomic(s: str) -> bool:
    return not s.startswith("*")


# ---------------------------------------------------------------- operands, rvalues, statements


@dataclass(frozen=True)
class Move:
    place: Place

    def __str__(self):
        return f"move {self.place}"


@dataclass(frozen=True)
class Copy:
    place: Place

    def __str__(self):
        return f"copy {self.place}"


@dataclass(frozen=True)
class Const:
    lit: Lit

    def __str__(self):
        return str(self.lit)


@dataclass(frozen=True)
class Use:
    op: object

    def __str__(self):
        return str(self.op)


@dataclass(frozen=True)
class Ref:
    kind: str  # shared | mut | reserved
    place: Place

    def __str__(self):
        pre = {"shared": "&", "mut": "&mut ", "reserved": "&reserved "}[self.kind]
        return f"{pre}{self.place}"


@dataclass(frozen=True)
class UnOp:
    op: str  # not | neg
    arg: object

    def __str__(self):
        return f"{'!' if self.op == 'not' else '-'}{_paren_op(self.arg)}"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - == <
    lhs: object
    rhs: object

    def __str__(self):
        return f"{_paren_op(self.lhs)} {self.op} {_paren_op(self.rhs)}"


def _paren_op(op) -> str:
    return str(op)


@dataclass(frozen=True)
class New:
    op: object

    def __str__(self):
        return f"new({self.op})"


@dataclass(frozen=True)
class MkPair:
    fst: object
    snd: object

    def __str__(self):
        return f"({self.fst}, {self.snd})"


@dataclass(frozen=True)
class MkSum:
    tag: int
    op: object

    def __str__(self):
        return f"{'Left' if self.tag == 0 else 'Right'}({self.op})"


@dataclass(frozen=True)
class Nop:
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Seq:
    stmts: tuple
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Assign:
    place: Place
    rv: object
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class If:
    cond: object
    then: object
    els: object
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Match:
    place: Place
    left: object
    right: object
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Free:
    place: Place
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Return:
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Panic:
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Loop:
    body: object
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Break:
    depth: int
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Continue:
    depth: int
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Call:
    dest: Place
    fn: str
    regions: tuple
    targs: tuple
    args: tuple
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Assert:
    cond: object
    line: int = field(default=0, compare=False, kw_only=True)


# ---------------------------------------------------------------- control tags


@dataclass(frozen=True)
class Tag:
    kind: str  # unit | return | panic | break | continue
    depth: int = 0

    def __str__(self):
        if self.kind in ("break", "continue"):
            return f"{self.kind}{self.depth}"
        return self.kind


UNIT_TAG = Tag("unit")
RETURN_TAG = Tag("return")
PANIC_TAG = Tag("panic")


# ---------------------------------------------------------------- declarations


@dataclass(frozen=True)
class FunDecl:
    name: str
    regions: tuple
    tparams: tuple
    args: tuple  # ((name, type), ...)
    locals: tuple
    ret: object
    body: object

    def var_types(self) -> dict:
        d = {"ret": self.ret}
        d.update(dict(self.args))
        d.update(dict(self.locals))
        return d


@dataclass(frozen=True)
class Program:
    funs: dict
    directives: tuple = ()  # ((key, value), ...) from `//!` header lines

    def directive(self, key: str, default=None):
        for k, v in self.directives:
            if k == key:
                return v
        return default

    @property
    def observe(self) -> tuple:
        raw = self.directive("observe", "")
        return tuple(x.strip() for x in raw.split(",") if x.strip())


# ---------------------------------------------------------------- lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<life>'[A-Za-z_][A-Za-z0-9_]*)
  | (?P<num>\d+(?:u32|i32)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*!?)
  | (?P<punct>->|=>|==|[{}()<>,;:=+\-!*&.])
    """,
    re.VERBOSE,
)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> tuple[list[Tok], list[tuple[str, str]]]:
    toks, directives = [], []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        s = m.group()
        if kind == "comment" and s.startswith("//!"):
            body = s[3:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                directives.append((k.strip(), v.strip()))
        elif kind not in ("ws", "comment"):
            toks.append(Tok(kind, s, line, pos - line_start + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks, directives


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str):
        self.toks, self.directives = tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind != "eof"

    def next(self) -> Tok:
        t = self.peek()
        self.i += 1
        return t

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(f"{msg}, found {t.text or 'end of input'!r}", t.line, t.col)

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.next()

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident" or t.text.endswith("!"):
            self.fail("expected identifier")
        return self.next().text

    # program
    def program(self) -> Program:
        funs = {}
        while self.peek().kind != "eof":
            f = self.fundecl()
            if f.name in funs:
                raise ParseError(f"duplicate function {f.name!r}")
            funs[f.name] = f
        return Program(funs, tuple(self.directives))

    def fundecl(self) -> FunDecl:
        self.expect("fn")
        name = self.ident()
        regions, tparams = [], []
        if self.at("<"):
            self.next()
            while not self.at(">"):
                t = self.peek()
                if t.kind == "life":
                    regions.append(self.next().text)
                else:
                    tparams.append(self.ident())
                if not self.at(">"):
                    self.expect(",")
            self.expect(">")
        self.expect("(")
        args = []
        while not self.at(")"):
            x = self.ident()
            self.expect(":")
            args.append((x, self.type_()))
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        ret = UNIT
        if self.at("->"):
            self.next()
            ret = self.type_()
        self.expect("{")
        locs = []
        while self.at("let"):
            self.next()
            x = self.ident()
            self.expect(":")
            locs.append((x, self.type_()))
            self.expect(";")
        body = self.stmts_until("}")
        self.expect("}")
        return FunDecl(name, tuple(regions), tuple(tparams), tuple(args), tuple(locs), ret, body)

    # types
    def type_(self):
        t = self.peek()
        if t.text == "(":
            self.next()
            if self.at(")"):
                self.next()
                return UNIT
            a = self.type_()
            if self.at(")"):
                self.next()
                return a
            self.expect(",")
            b = self.type_()
            self.expect(")")
            return PairT(a, b)
        if t.text == "&":
            self.next()
            region = "'_"
            if self.peek().kind == "life":
                region = self.next().text
            mut = False
            if self.at("mut"):
                self.next()
                mut = True
            return RefT(region, self.type_(), mut)
        if t.text == "mu":
            self.next()
            x = self.ident()
            self.expect(".")
            return RecT(x, self.type_())
        name = self.ident()
        if name in ("bool", "u32", "i32"):
            return Prim(name)
        if name in ("Box", "Sum"):
            self.expect("<")
            a = self.type_()
            if name == "Box":
                self.expect(">")
                return BoxT(a)
            self.expect(",")
            b = self.type_()
            self.expect(">")
            return SumT(a, b)
        return TVar(name)

    # statements
    def stmts_until(self, end: str):
        out = []
        while not self.at(end):
            if self.peek().kind == "eof":
                self.fail(f"expected {end!r}")
            out.append(self.stmt())
        if not out:
            return Nop()
        if len(out) == 1:
            return out[0]
        return Seq(tuple(out), line=getattr(out[0], "line", 0))

    def block(self):
        self.expect("{")
        s = self.stmts_until("}")
        self.expect("}")
        return s

    def stmt(self):
        t = self.peek()
        line = t.line
        if t.text == "if":
            self.next()
            cond = self.expr()
            then = self.block()
            els = Nop()
            if self.at("else"):
                self.next()
                els = self.block()
            return If(cond, then, els, line=line)
        if t.text == "match":
            self.next()
            p = self.place()
            self.expect("{")
            arms = {}
            for _ in range(2):
                ctor = self.ident()
                if ctor not in ("Left", "Right") or ctor in arms:
                    raise ParseError(f"bad match arm {ctor!r}", self.peek().line, self.peek().col)
                self.expect("=>")
                arms[ctor] = self.block()
                if self.at(","):
                    self.next()
            self.expect("}")
            return Match(p, arms["Left"], arms["Right"], line=line)
        if t.text == "loop":
            self.next()
            return Loop(self.block(), line=line)
        if t.text in ("break", "continue"):
            self.next()
            depth = 0
            if self.peek().kind == "num":
                depth = int(self.next().text)
            self.expect(";")
            return (Break if t.text == "break" else Continue)(depth, line=line)
        if t.text == "return":
            self.next()
            self.expect(";")
            return Return(line=line)
        if t.text == "panic":
            self.next()
            self.expect(";")
            return Panic(line=line)
        if t.text == "nop":
            self.next()
            self.expect(";")
            return Nop(line=line)
        if t.text == "free":
            self.next()
            self.expect("(")
            p = self.place()
            self.expect(")")
            self.expect(";")
            return Free(p, line=line)
        if t.text == "assert!":
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            self.expect(";")
            return Assert(e, line=line)
        p = self.place()
        self.expect("=")
        if self.peek().kind == "ident" and self.peek().text not in _KEYWORDS and self.peek(1).text in ("(", "<"):
            fn = self.ident()
            regions, targs = [], []
            if self.at("<"):
                self.next()
                while not self.at(">"):
                    if self.peek().kind == "life":
                        regions.append(self.next().text)
                    else:
                        targs.append(self.type_())
                    if not self.at(">"):
                        self.expect(",")
                self.expect(">")
            self.expect("(")
            args = []
            while not self.at(")"):
                args.append(self.operand())
                if not self.at(")"):
                    self.expect(",")
            self.expect(")")
            self.expect(";")
            return Call(p, fn, tuple(regions), tuple(targs), tuple(args), line=line)
        rv = self.rvalue()
        self.expect(";")
        return Assign(p, rv, line=line)

    # places
    def place(self) -> Place:
        if self.at("*"):
            self.next()
            inner = self.place()
            return Place(inner.base, inner.path + (PE.DEREF,))
        if self.at("("):
            self.next()
            inner = self.place()
            if self.at("as"):
                self.next()
                ctor = self.ident()
                if ctor not in ("Left", "Right"):
                    self.fail("expected Left or Right")
                inner = Place(inner.base, inner.path + (PE.LEFT if ctor == "Left" else PE.RIGHT,))
            self.expect(")")
        else:
            inner = Place(self.ident())
        while self.at(".") and self.peek(1).kind == "num":
            self.next()
            n = self.next().text
            if n not in ("0", "1"):
                self.fail("expected field 0 or 1")
            inner = Place(inner.base, inner.path + (PE.FIELD0 if n == "0" else PE.FIELD1,))
        return inner

    # operands / rvalues
    def operand(self):
        t = self.peek()
        if t.text == "move":
            self.next()
            return Move(self.place())
        if t.text == "copy":
            self.next()
            return Copy(self.place())
        return Const(self.literal())

    def literal(self) -> Lit:
        t = self.peek()
        neg = False
        if t.text == "-" and self.peek(1).kind == "num":
            self.next()
            neg = True
            t = self.peek()
        if t.kind == "num":
            self.next()
            s = t.text
            ty = "u32"
            if s.endswith(("u32", "i32")):
                ty, s = s[-3:], s[:-3]
            v = -int(s) if neg else int(s)
            if neg and ty == "u32":
                ty = "i32"
            return Lit(v, ty)
        if t.text in ("true", "false"):
            self.next()
            return Lit(t.text == "true", "bool")
        if t.text == "(" and self.peek(1).text == ")":
            self.next()
            self.next()
            return UNIT_LIT
        self.fail("expected operand")

    def expr(self):
        """Condition expression: an operand, a unary or a binary operation."""
        if self.at("!"):
            self.next()
            return UnOp("not", self.operand())
        if self.at("-") and self.peek(1).kind != "num":
            self.next()
            return UnOp("neg", self.operand())
        a = self.operand()
        if self.peek().text in ("+", "-", "==", "<"):
            op = self.next().text
            return BinOp(op, a, self.operand())
        return Use(a)

    def rvalue(self):
        t = self.peek()
        if t.text == "&":
            self.next()
            kind = "shared"
            if self.at("mut"):
                self.next()
                kind = "mut"
            elif self.at("reserved"):
                self.next()
                kind = "reserved"
            return Ref(kind, self.place())
        if t.text == "new":
            self.next()
            self.expect("(")
            op = self.operand()
            self.expect(")")
            return New(op)
        if t.text in ("Left", "Right"):
            self.next()
            self.expect("(")
            op = self.operand()
            self.expect(")")
            return MkSum(0 if t.text == "Left" else 1, op)
        if t.text == "(" and self.peek(1).text != ")":
            self.next()
            a = self.operand()
            self.expect(",")
            b = self.operand()
            self.expect(")")
            return MkPair(a, b)
        return self.expr()


_KEYWORDS = {"move", "copy", "new", "Left", "Right", "true", "false", "mut", "reserved"}


def parse_program(text: str) -> Program:
    return _Parser(text).program()


def parse_statements(text: str):
    p = _Parser(text)
    s = p.stmts_until("")  # runs to eof
    return s


def parse_place(text: str) -> Place:
    p = _Parser(text)
    pl = p.place()
    if p.peek().kind != "eof":
        p.fail("trailing input")
    return pl


def parse_type(text: str):
    p = _Parser(text)
    t = p.type_()
    if p.peek().kind != "eof":
        p.fail("trailing input")
    return t


# ---------------------------------------------------------------- printer


def print_stmt(s, indent: int = 1) -> list[str]:
    pad = "    " * indent
    if isinstance(s, Seq):
        out = []
        for x in s.stmts:
            out += print_stmt(x, indent)
        return out
    if isinstance(s, Nop):
        return [f"{pad}nop;"]
    if isinstance(s, Assign):
        return [f"{pad}{s.place} = {s.rv};"]
    if isinstance(s, Call):
        gen = ", ".join(list(s.regions) + [str(t) for t in s.targs])
        gen = f"<{gen}>" if gen else ""
        args = ", ".join(str(a) for a in s.args)
        return [f"{pad}{s.dest} = {s.fn}{gen}({args});"]
    if isinstance(s, If):
        out = [f"{pad}if {s.cond} {{"] + _body(s.then, indent)
        if isinstance(s.els, Nop):
            return out + [f"{pad}}}"]
        return out + [f"{pad}}} else {{"] + _body(s.els, indent) + [f"{pad}}}"]
    if isinstance(s, Match):
        return (
            [f"{pad}match {s.place} {{", f"{pad}    Left => {{"]
            + _body(s.left, indent + 1)
            + [f"{pad}    }}", f"{pad}    Right => {{"]
            + _body(s.right, indent + 1)
            + [f"{pad}    }}", f"{pad}}}"]
        )
    if isinstance(s, Loop):
        return [f"{pad}loop {{"] + _body(s.body, indent) + [f"{pad}}}"]
    if isinstance(s, Break):
        return [f"{pad}break {s.depth};"]
    if isinstance(s, Continue):
        return [f"{pad}continue {s.depth};"]
    if isinstance(s, Return):
        return [f"{pad}return;"]
    if isinstance(s, Panic):
        return [f"{pad}panic;"]
    if isinstance(s, Free):
        return [f"{pad}free({s.place});"]
    if isinstance(s, Assert):
        return [f"{pad}assert!({s.cond});"]
    raise TypeError(s)


def _body(s, indent: int) -> list[str]:
    if isinstance(s, Nop):
        return []
    return print_stmt(s, indent + 1)


def print_fun(f: FunDecl) -> str:
    gen = ", ".join(list(f.regions) + list(f.tparams))
    gen = f"<{gen}>" if gen else ""
    args = ", ".join(f"{x}: {t}" for x, t in f.args)
    ret = "" if f.ret == UNIT else f" -> {f.ret}"
    lines = [f"fn {f.name}{gen}({args}){ret} {{"]
    lines += [f"    let {x}: {t};" for x, t in f.locals]
    lines += _body(f.body, 0)
    lines.append("}")
    return "\n".join(lines)


def print_program(p: Program) -> str:
    head = [f"//! {k}: {v}" for k, v in p.directives]
    funs = [print_fun(f) for f in p.funs.values()]
    return "\n".join(head + ([""] if head else []) + ["\n\n".join(funs)]) + "\n"


# ---------------------------------------------------------------- resolver


def place_types(p: Place, base_ty) -> tuple:
    tys = [base_ty]
    ty = base_ty
    for e in p.path:
        u = unfold(ty)
        if e is PE.DEREF and isinstance(u, (BoxT, RefT)):
            ty = u.inner
        elif e in (PE.FIELD0, PE.FIELD1) and isinstance(u, PairT):
            ty = u.fst if e is PE.FIELD0 else u.snd
        elif e in (PE.LEFT, PE.RIGHT) and isinstance(u, SumT):
            ty = u.left if e is PE.LEFT else u.right
        else:
            raise ResolveError("IllTypedPath", f"{p}: cannot apply {e.value} to {ty}")
        tys.append(ty)
    return tuple(tys)


def _check_type(ty, regions: set, tvars: set, where: str):
    if isinstance(ty, TVar):
        if ty.name not in tvars:
            raise ResolveError("UnboundVariable", f"type variable {ty.name} in {where}")
    elif isinstance(ty, RefT):
        if ty.region != "'_" and ty.region not in regions:
            raise ResolveError("UnboundRegion", f"{ty.region} in {where}")
        _check_type(ty.inner, regions, tvars, where)
    elif isinstance(ty, (PairT, SumT)):
        for t in (ty.fst, ty.snd) if isinstance(ty, PairT) else (ty.left, ty.right):
            _check_type(t, regions, tvars, where)
    elif isinstance(ty, BoxT):
        _check_type(ty.inner, regions, tvars, where)
    elif isinstance(ty, RecT):
        _check_type(ty.body, regions, tvars | {ty.binder}, where)


class _Resolver:
    def __init__(self, prog: Program, f: FunDecl):
        self.prog = prog
        self.f = f
        self.vars = f.var_types()

    def place(self, p: Place) -> Place:
        if p.base not in self.vars:
            raise ResolveError("UnboundVariable", f"{p.base} in {self.f.name}")
        return Place(p.base, p.path, place_types(p, self.vars[p.base]))

    def op(self, o):
        if isinstance(o, Move):
            return Move(self.place(o.place))
        if isinstance(o, Copy):
            return Copy(self.place(o.place))
        return o

    def rv(self, r):
        if isinstance(r, Use):
            return Use(self.op(r.op))
        if isinstance(r, Ref):
            return Ref(r.kind, self.place(r.place))
        if isinstance(r, UnOp):
            return UnOp(r.op, self.op(r.arg))
        if isinstance(r, BinOp):
            return BinOp(r.op, self.op(r.lhs), self.op(r.rhs))
        if isinstance(r, New):
            return New(self.op(r.op))
        if isinstance(r, MkPair):
            return MkPair(self.op(r.fst), self.op(r.snd))
        if isinstance(r, MkSum):
            return MkSum(r.tag, self.op(r.op))
        raise TypeError(r)

    def stmt(self, s, depth: int):
        kw = {"line": s.line}
        if isinstance(s, Seq):
            return Seq(tuple(self.stmt(x, depth) for x in s.stmts), **kw)
        if isinstance(s, Assign):
            return Assign(self.place(s.place), self.rv(s.rv), **kw)
        if isinstance(s, If):
            return If(self.rv(s.cond), self.stmt(s.then, depth), self.stmt(s.els, depth), **kw)
        if isinstance(s, Assert):
            return Assert(self.rv(s.cond), **kw)
        if isinstance(s, Match):
            p = self.place(s.place)
            if not isinstance(unfold(p.ty), SumT):
                raise ResolveError("IllTypedPath", f"match on non-sum place {p}")
            return Match(p, self.stmt(s.left, depth), self.stmt(s.right, depth), **kw)
        if isinstance(s, Free):
            return Free(self.place(s.place), **kw)
        if isinstance(s, Loop):
            return Loop(self.stmt(s.body, depth + 1), **kw)
        if isinstance(s, (Break, Continue)):
            if s.depth >= depth:
                raise ResolveError("ArityMismatch", f"{type(s).__name__.lower()} {s.depth} outside {depth} loops")
            return s
        if isinstance(s, Call):
            callee = self.prog.funs.get(s.fn)
            if callee is None:
                raise ResolveError("UnboundVariable", f"function {s.fn}")
            if len(s.args) != len(callee.args):
                raise ResolveError("ArityMismatch", f"{s.fn} expects {len(callee.args)} arguments")
            if len(s.targs) != len(callee.tparams):
                raise ResolveError("ArityMismatch", f"{s.fn} expects {len(callee.tparams)} type arguments")
            if s.regions and len(s.regions) != len(callee.regions):
                raise ResolveError("ArityMismatch", f"{s.fn} expects {len(callee.regions)} regions")
            for t in s.targs:
                _check_type(t, set(self.f.regions) | {"'_"}, set(self.f.tparams), self.f.name)
            return Call(self.place(s.dest), s.fn, s.regions, s.targs, tuple(self.op(a) for a in s.args), **kw)
        return s


def resolve_program(prog: Program) -> Program:
    funs = {}
    for name, f in prog.funs.items():
        names = [x for x, _ in f.args] + [x for x, _ in f.locals]
        if "ret" in names or len(set(names)) != len(names):
            raise ResolveError("DuplicateName", f"variables of {name} must be distinct and not 'ret'")
        regions, tvars = set(f.regions), set(f.tparams)
        for _, t in f.args + f.locals + (("ret", f.ret),):
            _check_type(t, regions, tvars, name)
        body = _Resolver(prog, f).stmt(f.body, 0)
        funs[name] = replace(f, body=body)
    return Program(funs, prog.directives)


def load_program(text: str) -> Program:
    return resolve_program(parse_program(text))
