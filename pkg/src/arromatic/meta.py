"""Executable metatheory: capability extraction and soundness probes.

``caps`` collects every capability occurrence of a configuration as a
multiset.  ``array_disjointness`` checks that no two occurrences overlap on
the same array unless both are read-only.  ``check_progress`` and
``check_preservation`` are the stepwise probes; ``check_run`` strings them
together over a whole execution and ``explore`` enumerates every schedule of
a program to compare final configurations.
"""

from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from . import sigma as sg
from .errors import BoundExceeded
from .evaluator import (ERROR, Config, Leaf, RunResult, SeededScheduler,
                        TraceStep, borrow_depth_ok, enabled_choices,
                        initial_config, is_terminal, run, step, wf_config)
from .lang import pretty_expr
from .syntax import (ArrayType, Program, Ref, Value, format_value, hole_value,
                     map_values, values_in)
from .typecheck import read

__all__ = [
    "CapOccurrence", "caps", "array_disjointness", "check_progress",
    "check_preservation", "canonical", "canonical_outcome", "dump_config",
    "RunReport", "check_run", "ExploreResult", "explore", "MOVE_RULES",
]


@dataclass(frozen=True)
class CapOccurrence:
    array_id: int
    sigma: sg.IndexMap
    ty: ArrayType

    @property
    def read(self) -> bool:
        return read(self.ty)

    def __str__(self) -> str:
        return f"(ι{self.array_id}, {self.sigma}, {self.ty})"


# -- caps -----------------------------------------------------------------

def _caps_value(heap, v, t, out: list) -> None:
    if not isinstance(v, Ref) or not isinstance(t, ArrayType):
        return
    out.append(CapOccurrence(v.array_id, v.sigma, t))
    arr = heap[v.array_id]
    for p in v.sigma:
        _caps_value(heap, arr[p], t.elem, out)


def _caps_stack(heap, stack, out: list) -> None:
    buried: set[str] = set()
    for s in reversed(stack):
        if s.marked:
            buried.add(s.name)
        elif s.name not in buried:
            _caps_value(heap, s.value, s.ty, out)


def _caps_expr(heap, e, out: list) -> None:
    v = hole_value(e)
    if v is not None:
        _caps_value(heap, v.v, v.ty, out)


def _caps_activity(heap, a) -> list[CapOccurrence]:
    if a is ERROR:
        return []
    if isinstance(a, Leaf):
        out: list[CapOccurrence] = []
        _caps_stack(heap, a.stack, out)
        _caps_expr(heap, a.expr, out)
        return out
    children = _caps_activity(heap, a.left) + _caps_activity(heap, a.right)
    waiting = Counter(_caps_activity(heap, a.waiting))
    waiting.subtract(Counter(children))
    return children + list((+waiting).elements())


def caps(cfg: Config) -> list[CapOccurrence]:
    """Multiset (as a list) of capability occurrences in ``cfg``."""
    return _caps_activity(cfg.heap, cfg.activity)


def array_disjointness(cfg: Config, occs: list[CapOccurrence] | None = None
                       ) -> tuple[bool, tuple[CapOccurrence, CapOccurrence] | None]:
    """Check every unordered pair of distinct occurrences."""
    if occs is None:
        occs = caps(cfg)
    by_array: dict[int, list[CapOccurrence]] = {}
    for c in occs:
        by_array.setdefault(c.array_id, []).append(c)
    for group in by_array.values():
        for i in range(len(group)):
            a = group[i]
            for b in group[i + 1:]:
                if a.read and b.read:
                    continue
                if not a.sigma.range.isdisjoint(b.sigma.range):
                    return False, (a, b)
    return True, None


def check_progress(cfg: Config) -> bool:
    return is_terminal(cfg) or bool(enabled_choices(cfg))


def check_preservation(before: Config, after: Config) -> bool:
    if len(after.tags) < len(before.tags) or after.tags[:len(before.tags)] != before.tags:
        return False
    return wf_config(after).ok


# Rules that only move values around; caps may shrink but never grow.
MOVE_RULES = frozenset({"DYN-LET", "DYN-CALL", "DYN-VAR-LOOKUP-DEST",
                        "DYN-ARRAY-ASSIGN", "DYN-FINISH", "DYN-SPAWN"})


def _sub_multiset(a: Iterable, b: Iterable) -> bool:
    ca, cb = Counter(a), Counter(b)
    return all(cb[k] >= n for k, n in ca.items())


# -- canonical forms ------------------------------------------------------

class _Canon:
    """Rename array ids in first-reached order; garbage is compared by shape."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.ids: dict[int, int] = {}
        self.order: list[int] = []

    def see(self, v) -> None:
        if isinstance(v, Ref) and v.array_id not in self.ids:
            self.ids[v.array_id] = len(self.ids)
            self.order.append(v.array_id)

    def walk(self, a) -> None:
        if a is ERROR:
            return
        if isinstance(a, Leaf):
            for s in a.stack:
                self.see(s.value)
            for val in values_in(a.expr):
                self.see(val.v)
            return
        self.walk(a.left)
        self.walk(a.right)
        self.walk(a.waiting)

    def reach(self) -> None:
        i = 0
        while i < len(self.order):
            for v in self.cfg.heap[self.order[i]]:
                self.see(v)
            i += 1

    def val(self, v) -> str:
        if isinstance(v, Ref):
            if v.array_id in self.ids:
                return f"ι{self.ids[v.array_id]}{v.sigma}"
            return f"({self.deep(v.array_id)}){v.sigma}"
        return format_value(v)

    def deep(self, aid: int) -> str:
        return f"{self.cfg.tags[aid]}:[{', '.join(self.val(v) for v in self.cfg.heap[aid])}]"

    def expr(self, e) -> str:
        def f(node: Value) -> Value:
            if isinstance(node.v, Ref):
                return Value(Ref(self.ids[node.v.array_id], node.v.sigma), node.ty)
            return node
        return " ".join(pretty_expr(map_values(e, f)).split())

    def activity(self, a) -> str:
        if a is ERROR:
            return "Error"
        if isinstance(a, Leaf):
            st = ", ".join(f"{'•' if s.marked else ''}{s.name}:{s.ty}={self.val(s.value)}"
                           for s in a.stack)
            return f"({a.tag}{a.fresh}[{st}] {self.expr(a.expr)})"
        return f"({self.activity(a.left)} || {self.activity(a.right)} |> {self.activity(a.waiting)})"

    def render(self) -> str:
        self.walk(self.cfg.activity)
        self.reach()
        heap = [f"ι{self.ids[aid]}={self.deep(aid)}" for aid in self.order]
        garbage = sorted(self.deep(aid) for aid in range(len(self.cfg.heap)) if aid not in self.ids)
        return (f"{self.activity(self.cfg.activity)}\nheap: {'; '.join(heap)}"
                f"\ngarbage: {'; '.join(garbage)}")


def canonical(cfg: Config) -> str:
    """Serialization invariant under renaming of array identities."""
    if cfg.activity is ERROR:
        return "Error"
    return _Canon(cfg).render()


def canonical_outcome(cfg: Config) -> str:
    """Final configurations: every error state collapses to ``Error``."""
    return canonical(cfg)


def dump_config(cfg: Config) -> str:
    """Heap listing in the kernel dump format, with capability counts."""
    occs = caps(cfg)
    count = Counter(c.array_id for c in occs)
    lines = []
    for aid, arr in enumerate(cfg.heap):
        lines.append(f"ι{aid}: [{', '.join(format_value(v) for v in arr)}] caps={count[aid]}")
    for c in occs:
        mode = "read" if c.read else "unique"
        flag = "borrowed" if c.ty.ann.value == "borrowed" else "owned"
        lines.append(f"cap(ι{c.array_id}, σ={c.sigma}, {mode}, {flag})")
    return "\n".join(lines)


# -- the stepwise gauntlet ------------------------------------------------

@dataclass
class RunReport:
    seed: int
    steps: int
    result: str
    failure: tuple[str, int] | None = None
    detail: str | None = None
    run: RunResult | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.failure is None

    def line(self) -> str:
        inv = "ok" if self.failure is None else f"FAIL({self.failure[0]},{self.failure[1]})"
        return f"seed={self.seed} steps={self.steps} result={self.result} invariants={inv}"


class _Violation(Exception):
    def __init__(self, which: str, n: int, detail: str):
        super().__init__(detail)
        self.which, self.n, self.detail = which, n, detail


def _check_config(cfg: Config, n: int) -> list[CapOccurrence]:
    wf = wf_config(cfg)
    if not wf.ok:
        raise _Violation("wf_config", n, wf.reason or "")
    if not borrow_depth_ok(cfg.activity):
        raise _Violation("borrow_depth", n, "markers and borrow frames disagree")
    occs = caps(cfg)
    ok, pair = array_disjointness(cfg, occs)
    if not ok:
        raise _Violation("disjointness", n, f"{pair[0]} overlaps {pair[1]}")
    if not check_progress(cfg):
        raise _Violation("progress", n, "non-terminal configuration has no enabled step")
    return occs


def check_run(p: Program, seed: int = 0, max_steps: int = 10_000,
              scheduler=None) -> RunReport:
    """Run ``p`` checking every invariant after every step."""
    state = {"occs": None}

    def observer(before: Config, after: Config, ts: TraceStep) -> None:
        if after.tags[:len(before.tags)] != before.tags:
            raise _Violation("preservation", ts.n, "array type map shrank or changed")
        occs = _check_config(after, ts.n)
        if ts.rule in MOVE_RULES and not _sub_multiset(occs, state["occs"]):
            raise _Violation("caps_subset", ts.n, f"{ts.rule} created capabilities")
        state["occs"] = occs

    sched = scheduler or SeededScheduler(seed)
    try:
        state["occs"] = _check_config(initial_config(p), 0)
        res = run(p, sched, max_steps, observer, raise_on_budget=False)
    except _Violation as v:
        return RunReport(seed, v.n, "?", (v.which, v.n), v.detail)
    if res.status == "stuck":
        return RunReport(seed, res.steps, "stuck", ("progress", res.steps), "stuck", res)
    return RunReport(seed, res.steps, res.result_text(), None, None, res)


# -- schedule exploration -------------------------------------------------

@dataclass
class ExploreResult:
    outcomes: set[str]
    states: int
    schedules: int
    complete: bool

    @property
    def deterministic(self) -> bool:
        return len(self.outcomes) == 1


def explore(p: Program, max_steps: int = 1_000, max_schedules: int = 200_000,
            strict: bool = False) -> ExploreResult:
    """Enumerate every interleaving, sharing work between equal configurations.

    ``max_schedules`` bounds the number of distinct configurations visited
    (schedule prefixes that reach the same configuration are merged).  With
    ``strict=True`` hitting a bound raises :class:`BoundExceeded` carrying the
    partial result.
    """
    memo: dict[str, tuple[frozenset, int]] = {}
    incomplete = False
    limit = sys.getrecursionlimit()
    if limit < 4 * max_steps + 100:
        sys.setrecursionlimit(4 * max_steps + 100)

    def visit(cfg: Config, depth: int) -> tuple[frozenset, int]:
        nonlocal incomplete
        key = canonical(cfg)
        hit = memo.get(key)
        if hit is not None:
            return hit
        choices = enabled_choices(cfg)
        if not choices:
            res = (frozenset([canonical_outcome(cfg)]), 1)
        elif depth >= max_steps or len(memo) >= max_schedules:
            incomplete = True
            return frozenset(), 0
        else:
            outs: set[str] = set()
            count = 0
            for c in choices:
                o, k = visit(step(cfg, c), depth + 1)
                outs |= o
                count += k
            res = (frozenset(outs), count)
        memo[key] = res
        return res

    outcomes, schedules = visit(initial_config(p), 0)
    result = ExploreResult(set(outcomes), len(memo), schedules, not incomplete)
    if incomplete and strict:
        raise BoundExceeded("exploration bound reached", result)
    return result

