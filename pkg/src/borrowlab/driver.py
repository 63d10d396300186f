"""Running programs, comparing the three concrete semantics, and checking a corpus.

Corpus entries are `.llbc` programs with `//!` header directives:

    //! expect: ok            (or: reject)
    //! observe: x, y         variables read at return, besides ret
    //! output: return 1 0    expected observation at the default fuel
    //! fuel: 64

A program may carry golden final-state dumps in sidecar files named
`<entry>.<semantics>.golden` (for instance `counter.llbc.pl.golden`), compared
against the normalized dump of a run at the entry's fuel.

and `.state` files holding a symbolic state plus the reorganization to try:

    //! end: l1
    //! expect: stuck         (or: ok)
"""

from __future__ import annotations

import difflib
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .interp_hlpl import HlplMachine
from .interp_llbc import Diverge, LlbcMachine, Stuck, StuckError, perform
from .interp_pl import PlMachine, PlState, decode, read_place_pl
from .llbc_state import (
    IMM, BlockedByLoan, BoxV, Fresh, Heap, Loc, MutLoan, Pair, Ptr, SharedLoan, State, Variant,
    find_loan, focus, get_at, subvalues,
)
from .pretty import format_state, parse_state
from .symbolic import borrow_checks
from .syntax import (
    PANIC_TAG, RETURN_TAG, UNIT, UNIT_TAG, LangError, Lit, Place, has_borrows_type, load_program,
)

SEMANTICS = ("llbc", "hlpl", "pl")
DEFAULT_FUELS = (4, 16, 64)


class EmptyCorpus(Exception):
    pass


class DifferentialMismatch(Exception):
    pass


@dataclass(frozen=True)
class Observation:
    tag: str  # unit | return | panic | diverge | stuck
    outputs: tuple = ()

    def __str__(self):
        outs = " ".join("(" + " ".join(_lit(x) for x in o) + ")" if o is not None else "uninit" for o in self.outputs)
        return f"{self.tag} {outs}".strip()


def _lit(x) -> str:
    return ("true" if x else "false") if isinstance(x, bool) else str(x)


@dataclass
class RunResult:
    observation: Observation
    state: object = None
    reason: str = ""
    line: int = 0

    def dump(self) -> str:
        return format_state(self.state) if self.state is not None else ""


# ---------------------------------------------------------------- observations


def _flatten(v, st: State):
    while isinstance(v, (SharedLoan, Loc)):
        v = v.value
    if isinstance(v, Lit):
        return () if v.ty == "unit" else (v.value,)
    if isinstance(v, Pair):
        return _flatten(v.fst, st) + _flatten(v.snd, st)
    if isinstance(v, Variant):
        return (v.tag,) + _flatten(v.value, st)
    if isinstance(v, BoxV):
        return _flatten(v.value, st)
    if isinstance(v, Ptr) and v.box:
        for b in st.env:
            if b.key == Heap(v.l):
                return _flatten(b.value, st)
    return None


def _observe_tree(m, st: State, name: str, ty):
    """Literals of variable name, ending whatever loans stand in the way."""
    def attempt(s):
        v = get_at(s, focus(s, Place(name, (), (ty,)), IMM))
        for x in subvalues(v):
            if isinstance(x, MutLoan):
                raise BlockedByLoan(x.l)
        return v, s
    try:
        v, st = m.access(st, attempt)
    except StuckError:
        return None, st
    out = _flatten(v, st)
    return (None if out is None or _has_none(out) else out), st


def _has_none(t):
    return any(x is None for x in t)


def observed_vars(program, f) -> list:
    types = f.var_types()
    names = []
    if not has_borrows_type(f.ret) and f.ret != UNIT:
        names.append("ret")
    names += [x for x in program.observe if x in types and x != "ret"]
    return [(x, types[x]) for x in names]


def _machine(program, semantics, fresh, trace=None, on_step=None, on_write=None):
    if semantics == "llbc":
        return LlbcMachine(program, fresh, trace, on_step)
    if semantics == "hlpl":
        return HlplMachine(program, fresh, trace, on_step)
    if semantics == "pl":
        return PlMachine(program, fresh, trace, on_step, on_write)
    raise ValueError(f"unknown semantics {semantics}")


def run_concrete(program, semantics: str = "llbc", fuel: int = 64, fn: str = "main", trace=None,
                 on_step=None, on_write=None) -> RunResult:
    """Run fn (no arguments) from the empty state and observe its outputs at return."""
    f = program.funs[fn]
    fresh = Fresh()
    m = _machine(program, semantics, fresh, trace, on_step, on_write)
    st = m.push_frame(PlState() if semantics == "pl" else State(stack=()), f, [])
    r = m.run(st, f.body, fuel)
    if isinstance(r, Diverge):
        return RunResult(Observation("diverge"))
    if isinstance(r, Stuck):
        return RunResult(Observation("stuck"), r.state, r.reason, r.line)
    st = r.state
    if r.tag == PANIC_TAG:
        return RunResult(Observation("panic"), st)
    if r.tag not in (RETURN_TAG, UNIT_TAG):
        return RunResult(Observation("stuck"), st, f"{r.tag} escapes {fn}")
    tag = str(r.tag)
    outs = []
    for x, ty in observed_vars(program, f):
        if semantics == "pl":
            try:
                outs.append(decode(st, read_place_pl(st, Place(x, (), (ty,)), (ty,)), ty))
            except StuckError:
                outs.append(None)
        else:
            o, st = _observe_tree(m, st, x, ty)
            outs.append(o)
    return RunResult(Observation(tag, tuple(outs)), st)


@dataclass
class DiffReport:
    ok: bool
    rows: list = field(default_factory=list)  # (fuel, {semantics: RunResult})
    skipped: str = ""

    def render(self) -> str:
        if self.skipped:
            return f"skipped: {self.skipped}"
        lines = []
        for fuel, res in self.rows:
            obs = {s: r.observation for s, r in res.items()}
            same = len(set(obs.values())) == 1
            stuck = any(o.tag == "stuck" for o in obs.values())
            mark = "agree" if same and not stuck else "MISMATCH" if not same else "STUCK"
            lines.append(f"fuel {fuel}: {mark}  " + "  ".join(f"{s}={o}" for s, o in obs.items()))
            if mark != "agree":
                for s, r in res.items():
                    lines.append(f"  [{s}] {r.reason}".rstrip())
                    lines += ["    " + x for x in r.dump().splitlines()]
        return "\n".join(lines)


def check_program(program, only: str | None = None, **kw) -> dict:
    names = [only] if only else list(program.funs)
    return {name: borrow_checks(program, name, **kw) for name in names}


def run_differential(program, fuels=DEFAULT_FUELS, require_check: bool = True) -> DiffReport:
    """Run LLBC, HLPL and PL at each fuel; every observation must agree and none may be stuck."""
    if require_check:
        bad = [n for n, r in check_program(program).items() if not r.ok]
        if bad:
            return DiffReport(True, skipped="does not borrow-check: " + ", ".join(bad))
    rep = DiffReport(True)
    for fuel in fuels:
        res = {s: run_concrete(program, s, fuel) for s in SEMANTICS}
        obs = {r.observation for r in res.values()}
        if len(obs) != 1 or any(r.observation.tag == "stuck" for r in res.values()):
            rep.ok = False
        rep.rows.append((fuel, res))
    return rep


# ---------------------------------------------------------------- corpus


@dataclass
class CorpusEntry:
    path: Path
    expect: str  # ok | reject | stuck
    observe: tuple = ()
    output: str | None = None
    fuel: int = 64
    end: str | None = None
    goldens: dict = field(default_factory=dict)  # semantics -> expected dump

    @staticmethod
    def load(path: Path) -> "CorpusEntry":
        d = directives(path.read_text())
        goldens = {}
        for sem in SEMANTICS:
            g = path.with_name(f"{path.name}.{sem}.golden")
            if g.exists():
                goldens[sem] = g.read_text()
        return CorpusEntry(path, d.get("expect", "ok"), tuple(x.strip() for x in d.get("observe", "").split(",") if x.strip()),
                           d.get("output"), int(d.get("fuel", 64)), d.get("end"), goldens)


def directives(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        m = re.match(r"\s*//!\s*([\w-]+)\s*:\s*(.*?)\s*$", line)
        if m:
            out[m.group(1)] = m.group(2)
    return out


@dataclass
class EntryResult:
    entry: CorpusEntry
    ok: bool
    verdict: str
    detail: str = ""
    check_time: float = 0.0
    diff: DiffReport | None = None
    joins: list = field(default_factory=list)


def _parse_action(text: str):
    m = re.fullmatch(r"(l|A)(\d+)", text.strip())
    if not m:
        raise ValueError(f"bad end directive {text!r}")
    return ("end_mut" if m.group(1) == "l" else "end_abs", int(m.group(2)))


def run_state_entry(entry: CorpusEntry) -> EntryResult:
    try:
        st = parse_state(entry.path.read_text())
        action = _parse_action(entry.end or "")
    except (LangError, ValueError) as e:
        return EntryResult(entry, False, "error", str(e))
    t0 = time.perf_counter()
    try:
        if action[0] == "end_mut":
            loc = find_loan(st, action[1])
            if loc is not None and isinstance(get_at(st, loc), SharedLoan):
                action = ("end_shared_loan", action[1])
        perform(st, action, Fresh.above(st))
        verdict = "ok"
        detail = ""
    except StuckError as e:
        verdict, detail = "stuck", e.reason
    dt = time.perf_counter() - t0
    return EntryResult(entry, verdict == entry.expect, verdict, detail, dt)


def run_entry(entry: CorpusEntry, fuels=DEFAULT_FUELS, differential: bool = True, on_join=None) -> EntryResult:
    if entry.path.suffix == ".state":
        return run_state_entry(entry)
    try:
        program = load_program(entry.path.read_text())
    except LangError as e:
        return EntryResult(entry, False, "error", str(e))
    t0 = time.perf_counter()
    reports = check_program(program, on_join=on_join)
    dt = time.perf_counter() - t0
    verdict = "ok" if all(r.ok for r in reports.values()) else "reject"
    joins = [n for r in reports.values() for n in r.joins]
    res = EntryResult(entry, verdict == entry.expect, verdict, check_time=dt, joins=joins)
    if verdict != entry.expect:
        res.detail = "\n".join(r.render() for r in reports.values() if not r.ok) or "unexpectedly accepted"
        return res
    if verdict == "ok" and "main" in program.funs and differential:
        res.diff = run_differential(program, fuels, require_check=False)
        if not res.diff.ok:
            res.ok = False
            res.detail = res.diff.render()
        if entry.output is not None:
            got = str(run_concrete(program, "llbc", entry.fuel).observation)
            if got != entry.output:
                res.ok = False
                res.detail += f"\nexpected output {entry.output!r}, got {got!r}"
    for sem, want in entry.goldens.items():
        got = run_concrete(program, sem, entry.fuel).dump()
        if got.strip() != want.strip():
            res.ok = False
            diff = difflib.unified_diff(want.strip().splitlines(), got.strip().splitlines(),
                                        f"{sem} golden", f"{sem} actual", lineterm="")
            res.detail += "\n" + "\n".join(diff)
    res.detail = res.detail.strip("\n")
    return res


@dataclass
class CorpusSummary:
    results: list
    wall: float
    check_wall: float

    @property
    def passed(self) -> int:
        return sum(r.ok for r in self.results)

    @property
    def failed(self) -> int:
        return len(self.results) - self.passed

    def render(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{'PASS' if r.ok else 'FAIL'} {r.entry.path.name}: expected {r.entry.expect}, got {r.verdict}")
            if not r.ok and r.detail:
                lines += ["  " + x for x in r.detail.splitlines()]
        lines.append(f"{self.passed} passed, {self.failed} failed; borrow checking {self.check_wall:.3f}s, total {self.wall:.3f}s")
        return "\n".join(lines)


def corpus_entries(directory) -> list:
    d = Path(directory)
    paths = sorted(p for p in d.iterdir() if p.suffix in (".llbc", ".state")) if d.is_dir() else []
    if not paths:
        raise EmptyCorpus(f"no .llbc or .state files in {directory}")
    return [CorpusEntry.load(p) for p in paths]


def run_corpus(directory, fuels=DEFAULT_FUELS, differential: bool = True, on_join=None,
               workers: int | None = None) -> CorpusSummary:
    entries = corpus_entries(directory)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda e: run_entry(e, fuels, differential, on_join), entries))
    return CorpusSummary(results, time.perf_counter() - t0, sum(r.check_time for r in results))


def default_corpus() -> Path:
    return Path(__file__).parent / "corpus"
