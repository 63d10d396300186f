"""Command line: borrowlab {check,run,diff,fixpoint,corpus}."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .driver import EmptyCorpus, check_program, default_corpus, run_concrete, run_corpus, run_differential
from .pretty import format_state
from .syntax import LangError, load_program, print_stmt

OK, FAILED, STUCK, BAD_INPUT = 0, 1, 2, 3


def _load(path: str):
    return load_program(Path(path).read_text())


def _fuels(text: str) -> tuple:
    try:
        fuels = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fuel list {text!r}")
    if not fuels or min(fuels) < 0:
        raise argparse.ArgumentTypeError(f"bad fuel list {text!r}")
    return fuels


def _indent(text: str, pad: str = "    ") -> str:
    return "\n".join(pad + x for x in text.splitlines())


def cmd_check(args) -> int:
    program = _load(args.file)
    reports = check_program(program, branch=args.branch, precise=args.precise_joins, max_iters=args.max_iters)
    for r in reports.values():
        print(r.render(args.explain))
    return OK if all(r.ok for r in reports.values()) else FAILED


def cmd_run(args) -> int:
    program = _load(args.file)
    if "main" not in program.funs:
        print("error: no main function", file=sys.stderr)
        return BAD_INPUT
    trace = None
    if args.trace:
        def trace(s, st):
            head = print_stmt(s, 0)[0].strip()
            print(f"-- line {s.line}: {head}")
            dump = format_state(st)
            if dump:
                print(_indent(dump))
    r = run_concrete(program, args.semantics, args.fuel, trace=trace)
    print(r.observation)
    if r.observation.tag == "stuck":
        where = f" at line {r.line}" if r.line else ""
        print(f"stuck{where}: {r.reason}", file=sys.stderr)
    if r.state is not None:
        print(format_state(r.state))
    return STUCK if r.observation.tag == "stuck" else OK


def cmd_diff(args) -> int:
    program = _load(args.file)
    rep = run_differential(program, args.fuels)
    print(rep.render())
    if rep.skipped:
        return FAILED
    return OK if rep.ok else STUCK


def cmd_fixpoint(args) -> int:
    program = _load(args.file)
    if args.fn not in program.funs:
        print(f"error: no function {args.fn}", file=sys.stderr)
        return BAD_INPUT
    loops = [0]

    def on_iter(i, st):
        if i == 0:
            loops[0] += 1
            print(f"loop {loops[0]}")
        print(f"  candidate {i}:")
        print(_indent(format_state(st), "    "))

    def on_loop(s, fix, joins):
        print(f"  fixpoint after {joins} join(s):")
        print(_indent(format_state(fix), "    "))

    (r,) = check_program(program, on_iter=on_iter, on_loop=on_loop, max_iters=args.max_iters,
                         precise=args.precise_joins, only=args.fn).values()
    if loops[0] == 0:
        print(f"{args.fn} has no reachable loop")
    print(r.render())
    return OK if r.ok else FAILED


def cmd_corpus(args) -> int:
    summary = run_corpus(args.dir or default_corpus(), args.fuels, differential=not args.no_diff)
    print(summary.render())
    return OK if summary.failed == 0 else FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="borrowlab", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("check", help="borrow-check every function of a program")
    p.add_argument("file")
    p.add_argument("--explain", action="store_true", help="print the subsumption derivation of each branch")
    p.add_argument("--branch", choices=("set", "join"), default="join", help="keep branch states apart or join them")
    p.add_argument("--precise-joins", action="store_true", help="join differing borrows through one intermediate abstraction per side")
    p.add_argument("--max-iters", type=int, default=10, help="loop join iterations before giving up")
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("run", help="run main under a concrete semantics")
    p.add_argument("file")
    p.add_argument("--semantics", choices=("llbc", "hlpl", "pl"), default="llbc")
    p.add_argument("--fuel", type=int, default=64)
    p.add_argument("--trace", action="store_true", help="print the state before every statement")
    p.set_defaults(run=cmd_run)

    p = sub.add_parser("diff", help="compare the three concrete semantics over a fuel ladder")
    p.add_argument("file")
    p.add_argument("--fuels", type=_fuels, default=(4, 16, 64))
    p.set_defaults(run=cmd_diff)

    p = sub.add_parser("fixpoint", help="print the loop fixpoint candidates of a function")
    p.add_argument("file")
    p.add_argument("--fn", required=True)
    p.add_argument("--max-iters", type=int, default=10, help="loop join iterations before giving up")
    p.add_argument("--precise-joins", action="store_true", help="join differing borrows through one intermediate abstraction per side")
    p.set_defaults(run=cmd_fixpoint)

    p = sub.add_parser("corpus", help="check and run every entry of a corpus directory")
    p.add_argument("dir", nargs="?", help="defaults to the bundled corpus")
    p.add_argument("--fuels", type=_fuels, default=(4, 16, 64))
    p.add_argument("--no-diff", action="store_true", help="only borrow-check")
    p.set_defaults(run=cmd_corpus)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except LangError as e:
        print(f"error: {e}", file=sys.stderr)
        return BAD_INPUT
    except EmptyCorpus as e:
        print(f"error: {e}", file=sys.stderr)
        return FAILED
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
