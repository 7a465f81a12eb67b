"""Parallel array algorithms written against the capability kernel.

Each algorithm receives capabilities, splits them into disjoint parts, and
hands the parts to tasks of a :class:`TaskPool`.  ``finish`` runs a group of
tasks and returns once all of them are done, like a finish block with one
async per task.  Borrowing keeps the caller's capability intact: parts are
carved out of a borrowed alias and the original comes back whole when the
scope ends.

The module also holds the sequential oracles the algorithms are tested
against, and :func:`run_example`, the driver behind ``examples run``.
"""

from __future__ import annotations

import os
import random
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from . import sigma as sg
from .errors import DimensionMismatch
from .kernel import ArrayStore, Capability

__all__ = [
    "TaskPool", "quicksort", "mergesort", "stencil_apply", "stencil_run",
    "parallel_reduce", "rotate_matrix", "stencil_oracle", "reduce_phases_oracle",
    "run_example", "ExampleReport", "EXAMPLES",
]


class TaskPool:
    """Join groups of tasks.

    ``simulated`` runs the tasks of a group one after another in an order
    drawn from a seeded RNG, so every interleaving of whole tasks can be
    reached by varying the seed.  ``parallel`` runs the first task on the
    calling thread and the others on fresh threads while fewer than
    ``max_threads`` helper threads are alive; past that they run inline.
    """

    def __init__(self, parallel: bool = False, seed: int = 0, max_threads: int | None = None):
        self.parallel = parallel
        self.rng = random.Random(seed)
        self.max_threads = max_threads if max_threads is not None else min(32, os.cpu_count() or 4)
        self._lock = threading.Lock()
        self._alive = 0
        self.tasks_run = 0
        self.groups = 0
        self.threads_started = 0

    def finish(self, tasks: Sequence[Callable[[], Any]]) -> list:
        with self._lock:
            self.groups += 1
            self.tasks_run += len(tasks)
        results: list = [None] * len(tasks)
        if not self.parallel:
            with self._lock:
                order = list(range(len(tasks)))
                self.rng.shuffle(order)
            for k in order:
                results[k] = tasks[k]()
            return results
        errors: list[BaseException] = []

        def runner(k: int, spawned: bool) -> None:
            try:
                results[k] = tasks[k]()
            except BaseException as exc:  # re-raised on join
                errors.append(exc)
            finally:
                if spawned:
                    with self._lock:
                        self._alive -= 1

        threads, inline = [], []
        for k in range(1, len(tasks)):
            with self._lock:
                spawn = self._alive < self.max_threads
                if spawn:
                    self._alive += 1
                    self.threads_started += 1
            if spawn:
                t = threading.Thread(target=runner, args=(k, True))
                t.start()
                threads.append(t)
            else:
                inline.append(k)
        for k in ([0] if tasks else []) + inline:
            runner(k, False)
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        return results


# -- sorting --------------------------------------------------------------

def _partition(a: Capability) -> int:
    """Lomuto partition around the first element; returns its final index."""
    pivot = a[0]
    i = 0
    for j in range(1, len(a)):
        if a[j] < pivot:
            i += 1
            a[i], a[j] = a[j], a[i]
    a[0], a[i] = a[i], a[0]
    return i


def quicksort(store: ArrayStore, cap: Capability, pool: TaskPool | None = None) -> None:
    """Sort in place.  ``cap`` is usable again afterwards."""
    pool = pool or TaskPool()
    if len(cap) <= 1:
        return
    scope, a = store.borrow(cap)
    piv = _partition(a)
    left, rest = store.split_at(a, piv)
    _, right = store.split_at(rest, 1)
    pool.finish([lambda: quicksort(store, left, pool),
                 lambda: quicksort(store, right, pool)])
    store.end_borrow(scope)


def mergesort(store: ArrayStore, cap: Capability, pool: TaskPool | None = None) -> None:
    """Sort in place: sort both halves in parallel, then merge through ``cap``."""
    pool = pool or TaskPool()
    n = len(cap)
    if n <= 1:
        return
    scope, a = store.borrow(cap)
    left, right = store.split(a, 2)
    pool.finish([lambda: mergesort(store, left, pool),
                 lambda: mergesort(store, right, pool)])
    xs, ys = left.to_list(), right.to_list()
    store.end_borrow(scope)
    i = j = 0
    for k in range(n):
        if j >= len(ys) or (i < len(xs) and xs[i] <= ys[j]):
            cap[k] = xs[i]
            i += 1
        else:
            cap[k] = ys[j]
            j += 1


# -- stencil --------------------------------------------------------------

def _do_row(src: Capability, dst: Capability, row: int, rows: int, cols: int) -> None:
    # dst is the single row `row` of the target matrix
    for c in range(cols):
        up, down = (row - 1) % rows, (row + 1) % rows
        left, right = (c - 1) % cols, (c + 1) % cols
        dst[c] = (src[row * cols + c] + src[up * cols + c] + src[down * cols + c]
                  + src[row * cols + left] + src[row * cols + right])


def _apply(store: ArrayStore, src: Capability, dst: Capability, rows: int, row: int,
           total_rows: int, cols: int, pool: TaskPool) -> None:
    if rows > 1:
        top = (rows + 1) // 2
        upper, lower = store.split_at(dst, top * cols)
        pool.finish([
            lambda: _apply(store, src, upper, top, row, total_rows, cols, pool),
            lambda: _apply(store, src, lower, rows // 2, row + top, total_rows, cols, pool),
        ])
    else:
        _do_row(src, dst, row, total_rows, cols)


def stencil_apply(store: ArrayStore, src: Capability, dst: Capability, rows: int, cols: int,
                  pool: TaskPool | None = None) -> None:
    """One 5-point wraparound stencil pass from ``src`` into ``dst``.

    ``src`` is borrowed read-only and shared by every task; ``dst`` is
    borrowed and split into row blocks.
    """
    pool = pool or TaskPool()
    if rows < 1 or cols < 1 or len(src) != rows * cols or len(dst) != rows * cols:
        raise DimensionMismatch(
            f"expected two {rows}x{cols} matrices, got lengths {len(src)} and {len(dst)}")
    rscope, r = store.borrow(src, as_read=True)
    wscope, w = store.borrow(dst)
    _apply(store, r, w, rows, 0, rows, cols, pool)
    store.end_borrow(wscope)
    store.end_borrow(rscope)


def stencil_run(store: ArrayStore, a: Capability, b: Capability, rows: int, cols: int,
                phases: int, pool: TaskPool | None = None) -> Capability:
    """Apply ``phases`` passes, flipping source and target after each one.

    Returns the capability holding the last result.
    """
    src, dst = a, b
    for _ in range(phases):
        stencil_apply(store, src, dst, rows, cols, pool)
        src, dst = dst, src
    return src


def stencil_oracle(m: Sequence[int], rows: int, cols: int) -> list[int]:
    out = []
    for x in range(rows):
        for y in range(cols):
            out.append(m[x * cols + y]
                       + m[((x - 1) % rows) * cols + y] + m[((x + 1) % rows) * cols + y]
                       + m[x * cols + (y - 1) % cols] + m[x * cols + (y + 1) % cols])
    return out


# -- reduction ------------------------------------------------------------

def _reduce(store: ArrayStore, a: Capability, n: int, strided: bool) -> None:
    focus = store.split(a, n, strided)[0]
    total = 0
    for i in range(len(focus)):
        total += focus[i]
    focus[0] = total


def parallel_reduce(store: ArrayStore, cap: Capability, strided: bool,
                    pool: TaskPool | None = None) -> int:
    """Tree reduction in log2(n) phases; the sum ends up at logical index 0.

    Phase k splits a borrowed alias into n/2^k parts (strided or adjacent)
    and reduces the first 2 partial sums of each part with the opposite
    split style, exactly as in the classic two-strategy formulation.
    """
    pool = pool or TaskPool()
    n = len(cap)
    if n == 0 or n & (n - 1):
        raise ValueError("parallel_reduce needs a power-of-two length")
    tasks, width = n // 2, 1
    while tasks >= 1:
        scope, b = store.borrow(cap)
        parts = store.split(b, tasks, strided)
        pool.finish([lambda p=p: _reduce(store, p, width, not strided) for p in parts])
        store.end_borrow(scope)
        tasks //= 2
        width *= 2
    return cap[0]


def reduce_phases_oracle(values: Sequence[int], strided: bool) -> list[list[int]]:
    """Array contents after each phase, by direct index arithmetic.

    In every phase task j adds one slot into another: slots j and j+tasks
    for the strided layout, slots 2j*step and 2j*step+step for the adjacent
    one, where step doubles each phase.
    """
    xs = list(values)
    out = []
    tasks, step = len(xs) // 2, 1
    while tasks >= 1:
        for j in range(tasks):
            dst, src = (j, j + tasks) if strided else (2 * j * step, 2 * j * step + step)
            xs[dst] += xs[src]
        out.append(list(xs))
        tasks //= 2
        step *= 2
    return out


# -- rotation -------------------------------------------------------------

def rotate_matrix(store: ArrayStore, cap: Capability, rows: int, cols: int,
                  physical: bool = False) -> Capability:
    """Transpose the logical order of a row-major matrix to column-major.

    The columns are obtained by a strided split and concatenated.  With
    ``physical`` the storage is permuted to match and σ becomes the identity.
    """
    if len(cap) != rows * cols:
        raise DimensionMismatch(f"length {len(cap)} is not {rows}x{cols}")
    columns = store.split(cap, cols, strided=True)
    merged = store.merge(columns, concat=True)
    return store.align(merged) if physical else merged


# -- the examples driver --------------------------------------------------

EXAMPLES = ("quicksort", "mergesort", "stencil", "reduce", "rotate")


@dataclass
class ExampleReport:
    name: str
    ok: bool
    cases: int
    detail: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "pass" if self.ok else "FAIL"
        extra = f" ({self.detail[0]})" if self.detail else ""
        return f"example={self.name} cases={self.cases} result={status}{extra}"


def run_example(name: str, n: int | None = None, seed: int = 0, parallel: bool = False,
                cases: int | None = None) -> ExampleReport:
    """Run one algorithm on random inputs and compare with its oracle.

    Every run uses a debug store, so a disjointness violation raises.
    """
    rng = random.Random(seed)
    report = ExampleReport(name, True, 0)

    def check(ok: bool, what: str) -> None:
        report.cases += 1
        if not ok:
            report.ok = False
            report.detail.append(what)

    if name in ("quicksort", "mergesort"):
        algo = quicksort if name == "quicksort" else mergesort
        for _ in range(cases or 100):
            length = n if n is not None else rng.randrange(0, 65)
            xs = [rng.randrange(-50, 50) for _ in range(length)]
            store = ArrayStore(debug=True)
            cap = store.from_list(xs)
            algo(store, cap, TaskPool(parallel, rng.randrange(2**32)))
            check(cap.to_list() == sorted(xs), f"{xs} sorted to {cap.to_list()}")
    elif name == "stencil":
        for _ in range(cases or 20):
            rows = n if n is not None else rng.randrange(1, 9)
            cols = n if n is not None else rng.randrange(1, 9)
            m = [rng.randrange(-9, 10) for _ in range(rows * cols)]
            store = ArrayStore(debug=True)
            a, b = store.from_list(m), store.new_array(rows * cols, 0)
            last = stencil_run(store, a, b, rows, cols, 2, TaskPool(parallel, rng.randrange(2**32)))
            want = stencil_oracle(stencil_oracle(m, rows, cols), rows, cols)
            check(last.to_list() == want, f"{rows}x{cols} stencil differs from oracle")
    elif name == "reduce":
        size = n if n is not None else 16
        for k in range(cases or 20):
            xs = [rng.randrange(-100, 100) for _ in range(size)]
            for strided in (True, False):
                store = ArrayStore(debug=True)
                cap = store.from_list(xs)
                total = parallel_reduce(store, cap, strided, TaskPool(parallel, k))
                check(total == sum(xs)
                      and cap.to_list() == reduce_phases_oracle(xs, strided)[-1],
                      f"strided={strided}: got {total}, want {sum(xs)}")
    elif name == "rotate":
        for _ in range(cases or 20):
            rows = n if n is not None else rng.randrange(1, 7)
            cols = rng.randrange(1, 7)
            m = list(range(rows * cols))
            want = [m[r * cols + c] for c in range(cols) for r in range(rows)]
            store = ArrayStore(debug=True)
            cap = store.from_list(m)
            out = rotate_matrix(store, cap, rows, cols, physical=True)
            check(out.to_list() == want and store.physical(out.array_id) == want
                  and out.sigma == sg.identity(rows * cols),
                  f"{rows}x{cols} rotation wrong")
    else:
        raise ValueError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    return report
