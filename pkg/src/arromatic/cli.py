"""Command-line driver: check, run, explore, fuzz and the examples harness.

Exit codes: 0 success, 1 syntax or type error, 2 the program reached the
error state, 3 an invariant (or oracle, or determinism) check failed,
4 usage or I/O error, 5 a step or exploration bound was hit.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from . import __version__
from .algorithms import EXAMPLES, run_example
from .errors import DisjointnessViolation, GenerationExhausted, ParseError
from .evaluator import DEFAULT_MAX_STEPS, SeededScheduler, run
from .generator import generate
from .lang import parse
from .meta import check_run, dump_config, explore
from .syntax import Program
from .typecheck import TypeCheckError, check_program

EXIT_OK, EXIT_TYPE, EXIT_ERROR_STATE, EXIT_INVARIANT, EXIT_USAGE, EXIT_BOUND = range(6)


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _load(path: str) -> Program:
    """Parse and check ``path``; diagnostics go to stderr."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"{path}: {exc.strerror or exc}", file=sys.stderr)
        raise _Exit(EXIT_USAGE) from None
    try:
        res = parse(text)
    except ParseError as exc:
        print(f"{path}:{exc.line}:{exc.col}: PARSE: {exc.message}", file=sys.stderr)
        raise _Exit(EXIT_TYPE) from None
    for note in res.notes:
        print(f"{path}: note: {note}", file=sys.stderr)
    try:
        return check_program(res.program)
    except TypeCheckError as exc:
        for d in exc.diagnostics:
            where = f"{d.pos[0]}:{d.pos[1]}:" if d.pos else ""
            print(f"{path}:{where} {d.rule}: {d.message}", file=sys.stderr)
        raise _Exit(EXIT_TYPE) from None


def cmd_check(args) -> int:
    p = _load(args.file)
    if args.output == "machine":
        print(f"file={args.file} status=ok functions={len(p.functions)}")
    else:
        print(f"{args.file}: ok ({len(p.functions)} functions)")
    return EXIT_OK


def cmd_run(args) -> int:
    p = _load(args.file)
    if args.check_invariants:
        rep = check_run(p, args.seed, args.max_steps)
        res = rep.run
        if not rep.ok:
            print(rep.line())
            print(f"invariant violated: {rep.detail}", file=sys.stderr)
            return EXIT_INVARIANT
    else:
        res = run(p, SeededScheduler(args.seed), args.max_steps, raise_on_budget=False)
    if args.trace:
        for ts in res.trace:
            print(ts)
    if args.output == "machine":
        print(f"seed={args.seed} steps={res.steps} status={res.status} result={res.result_text()}")
    else:
        print(dump_config(res.config) if res.status != "error" else "Error")
        print(f"result: {res.result_text()} after {res.steps} steps")
    return {"value": EXIT_OK, "error": EXIT_ERROR_STATE, "budget": EXIT_BOUND}.get(
        res.status, EXIT_INVARIANT)


def cmd_explore(args) -> int:
    p = _load(args.file)
    r = explore(p, args.max_steps, args.max_schedules)
    if args.output == "machine":
        print(f"outcomes={len(r.outcomes)} states={r.states} schedules={r.schedules} "
              f"complete={str(r.complete).lower()}")
    else:
        print(f"{len(r.outcomes)} distinct outcome(s) over {r.schedules} schedules "
              f"({r.states} configurations){'' if r.complete else ', bound reached'}")
        for k, o in enumerate(sorted(r.outcomes)):
            print(f"--- outcome {k}\n{o}")
    if len(r.outcomes) > 1:
        return EXIT_INVARIANT
    if not r.complete:
        return EXIT_BOUND
    return EXIT_ERROR_STATE if r.outcomes == {"Error"} else EXIT_OK


def cmd_fuzz(args) -> int:
    failed = 0
    for k in range(args.count):
        seed = args.seed + k
        mode = args.mode if args.mode != "mixed" else ("safe", "wild")[k % 2]
        try:
            p = generate(seed, args.size, mode)
        except GenerationExhausted as exc:
            print(f"seed={seed} skipped ({exc})")
            continue
        if args.check_invariants:
            rep = check_run(p, seed, args.max_steps)
            line, ok = rep.line(), rep.ok
        else:
            res = run(p, SeededScheduler(seed), args.max_steps, raise_on_budget=False)
            line, ok = f"seed={seed} steps={res.steps} result={res.result_text()} invariants=skipped", True
        if args.explore:
            r = explore(p, args.max_steps, args.max_schedules)
            line += f" outcomes={len(r.outcomes)}"
            ok = ok and len(r.outcomes) == 1
        failed += not ok
        print(line)
    if args.output != "machine":
        print(f"{args.count - failed}/{args.count} programs passed", file=sys.stderr)
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_examples(args) -> int:
    names = EXAMPLES if args.name == "all" else (args.name,)
    ok = True
    for name in names:
        try:
            rep = run_example(name, args.n, args.seed, args.parallel, args.cases)
        except DisjointnessViolation as exc:
            print(f"example={name} result=FAIL (disjointness: {exc})")
            ok = False
            continue
        print(rep.line())
        ok = ok and rep.ok
    return EXIT_OK if ok else EXIT_INVARIANT


def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="arromatic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", choices=("human", "machine"), default="human")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check", parents=[common], help="type check a .arrc file")
    c.add_argument("file")
    c.set_defaults(fn=cmd_check)

    r = sub.add_parser("run", parents=[common], help="run main under a seeded scheduler")
    r.add_argument("file")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace", action="store_true")
    r.add_argument("--max-steps", type=_positive, default=DEFAULT_MAX_STEPS)
    r.add_argument("--check-invariants", action="store_true")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("explore", parents=[common], help="enumerate all schedules")
    e.add_argument("file")
    e.add_argument("--max-schedules", type=_positive, default=200_000,
                   help="bound on distinct configurations visited")
    e.add_argument("--max-steps", type=_positive, default=1_000)
    e.set_defaults(fn=cmd_explore)

    f = sub.add_parser("fuzz", parents=[common], help="generate and check random programs")
    f.add_argument("--count", type=_positive, default=100)
    f.add_argument("--size", type=_positive, default=40)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--mode", choices=("safe", "wild", "mixed"), default="safe")
    f.add_argument("--explore", action="store_true")
    f.add_argument("--max-steps", type=_positive, default=10_000)
    f.add_argument("--max-schedules", type=_positive, default=200_000)
    f.add_argument("--no-check-invariants", dest="check_invariants", action="store_false")
    f.set_defaults(fn=cmd_fuzz)

    x = sub.add_parser("examples", help="kernel-level algorithm harness")
    xs = x.add_subparsers(dest="action", required=True)
    xr = xs.add_parser("run", parents=[common], help="run an algorithm against its oracle")
    xr.add_argument("name", choices=EXAMPLES + ("all",))
    xr.add_argument("--n", type=_positive, default=None, help="input size")
    xr.add_argument("--seed", type=int, default=0)
    xr.add_argument("--cases", type=_positive, default=None)
    xr.add_argument("--parallel", action="store_true", help="run tasks on real threads")
    xr.set_defaults(fn=cmd_examples)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.fn(args)
    except _Exit as exc:
        return exc.code
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
