"""Small-step evaluator for the calculus.

A configuration pairs a heap with a tree of activities.  Concurrency is
modelled, not executed: :func:`enabled_choices` lists every activity that can
take a step and :func:`step` applies exactly one rule at the chosen place.
Rule names in traces match the rule names of the formal semantics; two
failure rules are additions (``DYN-ARRAY-SPLIT-FAIL`` for index maps that
do not compose, ``DYN-ARRAY-MERGE-OVERLAP`` for merges whose ranges meet).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, Union

from . import sigma as sg
from .errors import BudgetExceeded, OutOfDomain
from .syntax import (BOOL, Ann, ArrayType, Mod, Assign, Borrow, BorrowFrame,
                     BoolType, Call, Expr, FinishAsync, Let, Lookup, Merge,
                     New, Program, Ref, RuntimeValue, SplitLet, TypeExpr,
                     Value, Var, binders, format_value, free_vars, rename)
from .typecheck import (Checker, EnvEntry, _Fail, read_only,
                        read_only_elems, value_has_type, weaken, wf_env,
                        wf_type)

__all__ = [
    "StackEntry", "Leaf", "Fork", "ERROR", "ErrorState", "Activity", "Config",
    "Choice", "TraceStep", "RunResult", "initial_config", "enabled_choices",
    "step", "run", "SeededScheduler", "FixedScheduler", "wf_config",
    "WfReport", "is_terminal", "borrow_depth_ok", "DEFAULT_MAX_STEPS",
]

DEFAULT_MAX_STEPS = 100_000


@dataclass(frozen=True)
class StackEntry:
    name: str
    ty: TypeExpr
    value: RuntimeValue
    marked: bool = False  # "• x ↦ null": start of a borrow scope

    def __str__(self) -> str:
        return f"{'• ' if self.marked else ''}{self.name} ↦ {format_value(self.value)}"


Stack = tuple[StackEntry, ...]


@dataclass(frozen=True)
class Leaf:
    """A thread.  ``tag``/``fresh`` drive per-call renaming of binders."""

    stack: Stack
    expr: Expr
    tag: str = ""
    fresh: int = 0


class ErrorState:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "ERROR"

    def __reduce__(self):
        return (ErrorState, ())


ERROR = ErrorState()


@dataclass(frozen=True)
class Fork:
    left: "Activity"
    right: "Activity"
    waiting: Leaf
    # parent variables lent to the children; their values come back on join
    lent: tuple[str, ...] = ()


Activity = Union[Leaf, Fork, ErrorState]


@dataclass(frozen=True)
class Config:
    """Heap (array id = position), declared array types, activity tree."""

    heap: tuple[tuple[RuntimeValue, ...], ...]
    tags: tuple[ArrayType, ...]
    activity: Activity
    program: Program = field(compare=False, repr=False)

    @property
    def delta(self) -> dict[int, ArrayType]:
        return dict(enumerate(self.tags))

    @property
    def lengths(self) -> dict[int, int]:
        return {i: len(a) for i, a in enumerate(self.heap)}


@dataclass(frozen=True, order=True)
class Choice:
    path: tuple[str, ...]
    action: str = "step"  # step | finish | fail-L | fail-R

    @property
    def where(self) -> str:
        return ".".join(self.path) if self.path else "root"

    def __str__(self) -> str:
        return f"{self.where}:{self.action}"


@dataclass(frozen=True)
class TraceStep:
    n: int
    rule: str
    choice: Choice
    redex: str

    def __str__(self) -> str:
        return f"#{self.n} {self.rule} @{self.choice.where} {self.redex}".rstrip()


def is_value(e: Expr) -> bool:
    return isinstance(e, Value)


def default_value(t: TypeExpr) -> RuntimeValue:
    return False if isinstance(t, BoolType) else None


def initial_config(p: Program) -> Config:
    main = p.main
    stack = (StackEntry(main.param, main.param_ty, default_value(main.param_ty)),)
    return Config((), (), Leaf(stack, main.body), p)


def is_terminal(cfg: Config) -> bool:
    a = cfg.activity
    return a is ERROR or (isinstance(a, Leaf) and is_value(a.expr))


# -- single-thread reduction ----------------------------------------------

class _Stuck(Exception):
    pass


@dataclass
class _Outcome:
    rule: str
    redex: Expr
    kind: str = "ok"            # ok | error | spawn
    expr: Expr | None = None
    children: tuple[Leaf, Leaf] | None = None
    lent: tuple[str, ...] = ()


class _Machine:
    """Mutable scratch state for one leaf step."""

    def __init__(self, program: Program, heap, tags, leaf: Leaf):
        self.program = program
        self.heap = list(heap)
        self.tags = list(tags)
        self.stack = list(leaf.stack)
        self.tag = leaf.tag
        self.fresh = leaf.fresh

    def index_of(self, name: str) -> int:
        for k in range(len(self.stack) - 1, -1, -1):
            if self.stack[k].name == name:
                return k
        raise _Stuck(f"unbound {name}")

    def get(self, name: str) -> StackEntry:
        return self.stack[self.index_of(name)]

    def nullify(self, name: str) -> None:
        k = self.index_of(name)
        self.stack[k] = replace(self.stack[k], value=None)

    def write(self, aid: int, pos: int, v: RuntimeValue) -> None:
        arr = list(self.heap[aid])
        arr[pos] = v
        self.heap[aid] = tuple(arr)

    # The reduction proper.  Returns the outcome; context frames re-plug.
    def reduce(self, e: Expr) -> _Outcome:
        if isinstance(e, Let):
            if not is_value(e.bound):
                return self._ctx(e, e.bound, lambda x: replace(e, bound=x))
            v = e.bound
            self.stack.append(StackEntry(e.name, v.ty, v.v))
            return _Outcome("DYN-LET", e, expr=e.body)
        if isinstance(e, Assign):
            if not is_value(e.value):
                return self._ctx(e, e.value, lambda x: replace(e, value=x))
            ref = self.get(e.name).value
            if ref is None:
                return _Outcome("DYN-ARRAY-ASSIGN-NULL", e, "error")
            if not isinstance(ref, Ref):
                raise _Stuck("assign through non-array")
            if e.index not in ref.sigma:
                return _Outcome("DYN-ARRAY-ASSIGN-FAIL", e, "error")
            self.write(ref.array_id, ref.sigma(e.index), e.value.v)
            return _Outcome("DYN-ARRAY-ASSIGN", e, expr=Value(True, BOOL))
        if isinstance(e, Call):
            if not is_value(e.arg):
                return self._ctx(e, e.arg, lambda x: replace(e, arg=x))
            f = self.program.get(e.fn)
            if f is None:
                raise _Stuck(f"no function {e.fn}")
            suffix = f"#{self.tag}{self.fresh}"
            self.fresh += 1
            names = {f.param, *binders(f.body)}
            m = {n: n + suffix for n in names}
            self.stack.append(StackEntry(m[f.param], f.param_ty, e.arg.v))
            return _Outcome("DYN-CALL", e, expr=rename(f.body, m))
        if isinstance(e, BorrowFrame):
            if not is_value(e.body):
                return self._ctx(e, e.body, lambda x: replace(e, body=x))
            for k in range(len(self.stack) - 1, -1, -1):
                if self.stack[k].marked:
                    del self.stack[k:]
                    return _Outcome("DYN-BORROW-DONE", e, expr=Value(True, BOOL))
            raise _Stuck("borrow frame without marker")
        if isinstance(e, Var):
            entry = self.get(e.name)
            t = e.ty if e.ty is not None else entry.ty
            if read_only(t):
                return _Outcome("DYN-VAR-LOOKUP", e, expr=Value(entry.value, t))
            self.nullify(e.name)
            return _Outcome("DYN-VAR-LOOKUP-DEST", e, expr=Value(entry.value, t))
        if isinstance(e, Lookup):
            entry = self.get(e.name)
            ref = entry.value
            if ref is None:
                return _Outcome("DYN-ARRAY-LOOKUP-NULL", e, "error")
            if not isinstance(ref, Ref):
                raise _Stuck("lookup through non-array")
            if e.index not in ref.sigma:
                return _Outcome("DYN-ARRAY-LOOKUP-FAIL", e, "error")
            arr_t = e.arr_ty if e.arr_ty is not None else entry.ty
            res_t = e.ty if e.ty is not None else arr_t.elem
            pos = ref.sigma(e.index)
            v = self.heap[ref.array_id][pos]
            if read_only_elems(arr_t):
                return _Outcome("DYN-ARRAY-LOOKUP", e, expr=Value(v, res_t))
            self.write(ref.array_id, pos, None)
            return _Outcome("DYN-ARRAY-LOOKUP-UNIQUE", e, expr=Value(v, res_t))
        if isinstance(e, SplitLet):
            entry = self.get(e.source)
            ref = entry.value
            if ref is None:
                return _Outcome("DYN-ARRAY-SPLIT-NULL", e, "error")
            if not isinstance(ref, Ref):
                raise _Stuck("split of non-array")
            try:
                s1 = sg.compose(ref.sigma, e.left_sigma)
                s2 = sg.compose(ref.sigma, e.right_sigma)
            except OutOfDomain:
                return _Outcome("DYN-ARRAY-SPLIT-FAIL", e, "error")
            t = e.ty if e.ty is not None else entry.ty
            self.nullify(e.source)
            self.stack.append(StackEntry(e.left, t, Ref(ref.array_id, s1)))
            self.stack.append(StackEntry(e.right, t, Ref(ref.array_id, s2)))
            return _Outcome("DYN-ARRAY-SPLIT", e, expr=e.body)
        if isinstance(e, Merge):
            ex, ey = self.get(e.left), self.get(e.right)
            a, b = ex.value, ey.value
            if a is None or b is None:
                return _Outcome("DYN-ARRAY-MERGE-NULL", e, "error")
            if not isinstance(a, Ref) or not isinstance(b, Ref):
                raise _Stuck("merge of non-arrays")
            if a.array_id != b.array_id:
                return _Outcome("DYN-ARRAY-MERGE-FAIL", e, "error")
            if not sg.disjoint(a.sigma, b.sigma):
                return _Outcome("DYN-ARRAY-MERGE-OVERLAP", e, "error")
            t = e.ty if e.ty is not None else ex.ty
            self.nullify(e.left)
            self.nullify(e.right)
            return _Outcome("DYN-ARRAY-MERGE", e,
                            expr=Value(Ref(a.array_id, sg.concat(a.sigma, b.sigma)), t))
        if isinstance(e, New):
            t = e.ty
            if not isinstance(t, ArrayType):
                raise _Stuck("new of non-array type")
            aid = len(self.heap)
            self.heap.append(tuple(default_value(t.elem) for _ in range(e.length)))
            self.tags.append(t)
            return _Outcome("DYN-ARRAY-NEW", e, expr=Value(Ref(aid, sg.identity(e.length)), t))
        if isinstance(e, Borrow):
            entry = self.get(e.source)
            src_t = e.src_ty if e.src_ty is not None else entry.ty
            if not isinstance(src_t, ArrayType):
                raise _Stuck("borrow of non-array")
            alias_t = e.alias_ty
            if alias_t is None:
                alias_t = (ArrayType(Ann.BORROWED, Mod.VAL, weaken(src_t.elem)) if e.as_read
                           else ArrayType(Ann.BORROWED, src_t.mod, src_t.elem))
            buried = ArrayType(Ann.BURIED, src_t.mod, src_t.elem)
            self.stack.append(StackEntry(e.source, buried, None, marked=True))
            self.stack.append(StackEntry(e.alias, alias_t, entry.value))
            return _Outcome("DYN-BORROW", e, expr=BorrowFrame(e.body))
        if isinstance(e, FinishAsync):
            def sub(expr: Expr, side: str) -> Leaf:
                fv = free_vars(expr)
                entries = []
                for name in sorted(fv, key=self._position):
                    try:
                        src = self.get(name)
                    except _Stuck:
                        continue
                    entries.append(StackEntry(name, src.ty, src.value))
                return Leaf(tuple(entries), expr, self.tag + side, 0)
            left, right = sub(e.first, "L"), sub(e.second, "R")
            # values handed to a child are lent: the parent's copy is nulled
            # until the join unless it is read-only (shared benignly)
            lent = []
            for s in left.stack + right.stack:
                k = self.index_of(s.name)
                if not read_only(self.stack[k].ty):
                    self.stack[k] = replace(self.stack[k], value=None)
                    lent.append(s.name)
            return _Outcome("DYN-SPAWN", e, "spawn", expr=e.then, children=(left, right),
                            lent=tuple(lent))
        if isinstance(e, Value):
            raise _Stuck("value")
        raise _Stuck(f"unknown expression {e!r}")

    def _position(self, name: str) -> int:
        try:
            return self.index_of(name)
        except _Stuck:
            return -1

    def _ctx(self, e: Expr, inner: Expr, plug: Callable[[Expr], Expr]) -> _Outcome:
        out = self.reduce(inner)
        if out.kind == "error":
            return out
        return replace(out, expr=plug(out.expr))


def _reduce_leaf(program: Program, heap, tags, leaf: Leaf):
    m = _Machine(program, heap, tags, leaf)
    out = m.reduce(leaf.expr)
    return m, out


# -- activity tree --------------------------------------------------------

def _choices(program: Program, heap, tags, a: Activity, path: tuple[str, ...],
             acc: list[Choice]) -> None:
    if a is ERROR:
        return
    if isinstance(a, Leaf):
        if is_value(a.expr):
            return
        try:
            _reduce_leaf(program, heap, tags, a)
        except _Stuck:
            return
        acc.append(Choice(path, "step"))
        return
    if a.left is ERROR:
        acc.append(Choice(path, "fail-L"))
    if a.right is ERROR:
        acc.append(Choice(path, "fail-R"))
    if (isinstance(a.left, Leaf) and is_value(a.left.expr)
            and isinstance(a.right, Leaf) and is_value(a.right.expr)):
        acc.append(Choice(path, "finish"))
    _choices(program, heap, tags, a.left, path + ("L",), acc)
    _choices(program, heap, tags, a.right, path + ("R",), acc)


def enabled_choices(cfg: Config) -> list[Choice]:
    """Every rule application available in ``cfg``, in a fixed order."""
    acc: list[Choice] = []
    _choices(cfg.program, cfg.heap, cfg.tags, cfg.activity, (), acc)
    return acc


def _get(a: Activity, path: Sequence[str]) -> Activity:
    for p in path:
        if not isinstance(a, Fork):
            raise ValueError("choice path does not exist")
        a = a.left if p == "L" else a.right
    return a


def _put(a: Activity, path: Sequence[str], new: Activity) -> Activity:
    if not path:
        return new
    assert isinstance(a, Fork)
    if path[0] == "L":
        return replace(a, left=_put(a.left, path[1:], new))
    return replace(a, right=_put(a.right, path[1:], new))


def _short(e: Expr) -> str:
    from .lang import pretty_expr
    s = " ".join(pretty_expr(e).split())
    return s if len(s) <= 60 else s[:57] + "..."


def _join(fork: Fork) -> Leaf:
    """The waiting thread with lent variables returned by the children."""
    stack = list(fork.waiting.stack)
    for name in fork.lent:
        for child in (fork.left.stack, fork.right.stack):
            back = [c for c in child if c.name == name and not c.marked]
            if back:
                break
        for k in range(len(stack) - 1, -1, -1):
            if stack[k].name == name:
                stack[k] = replace(stack[k], value=back[-1].value)
                break
    return replace(fork.waiting, stack=tuple(stack))


def step_traced(cfg: Config, choice: Choice) -> tuple[Config, str, str]:
    """Apply one rule; returns the new config, the rule name and the redex."""
    node = _get(cfg.activity, choice.path)
    if choice.action == "finish":
        if not (isinstance(node, Fork) and isinstance(node.left, Leaf) and is_value(node.left.expr)
                and isinstance(node.right, Leaf) and is_value(node.right.expr)):
            raise ValueError(f"finish not enabled at {choice.where}")
        return (replace(cfg, activity=_put(cfg.activity, choice.path, _join(node))),
                "DYN-FINISH", "")
    if choice.action in ("fail-L", "fail-R"):
        side = node.left if choice.action == "fail-L" else node.right if isinstance(node, Fork) else None
        if not isinstance(node, Fork) or side is not ERROR:
            raise ValueError(f"{choice.action} not enabled at {choice.where}")
        rule = "DYN-SCHED-L-FAIL" if choice.action == "fail-L" else "DYN-SCHED-R-FAIL"
        return replace(cfg, activity=_put(cfg.activity, choice.path, ERROR)), rule, ""
    if not isinstance(node, Leaf) or is_value(node.expr):
        raise ValueError(f"no step available at {choice.where}")
    try:
        m, out = _reduce_leaf(cfg.program, cfg.heap, cfg.tags, node)
    except _Stuck as exc:
        raise ValueError(f"stuck at {choice.where}: {exc}") from None
    redex = _short(out.redex)
    if out.kind == "error":
        return replace(cfg, activity=_put(cfg.activity, choice.path, ERROR)), out.rule, redex
    parent = Leaf(tuple(m.stack), out.expr, m.tag, m.fresh)
    new: Activity = parent
    if out.kind == "spawn":
        new = Fork(out.children[0], out.children[1], parent, out.lent)
    return (Config(tuple(m.heap), tuple(m.tags), _put(cfg.activity, choice.path, new), cfg.program),
            out.rule, redex)


def step(cfg: Config, choice: Choice) -> Config:
    return step_traced(cfg, choice)[0]


# -- schedulers and the driver --------------------------------------------

class SeededScheduler:
    """Uniform random choice among enabled steps, reproducible by seed."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, choices: Sequence[Choice]) -> Choice:
        if len(choices) == 1:
            return choices[0]
        return choices[self.rng.randrange(len(choices))]


class FixedScheduler:
    """Replays a sequence of indices (into the enabled list) or choices.

    Once the sequence is used up the first enabled choice is taken.
    """

    def __init__(self, seq: Iterable[int | Choice]):
        self.seq = list(seq)
        self.pos = 0

    def choose(self, choices: Sequence[Choice]) -> Choice:
        if self.pos >= len(self.seq):
            return choices[0]
        want = self.seq[self.pos]
        self.pos += 1
        if isinstance(want, Choice):
            if want not in choices:
                raise ValueError(f"choice {want} is not enabled")
            return want
        return choices[want % len(choices)]


@dataclass
class RunResult:
    config: Config
    trace: list[TraceStep]
    status: str  # value | error | budget

    @property
    def steps(self) -> int:
        return len(self.trace)

    @property
    def value(self) -> RuntimeValue:
        a = self.config.activity
        return a.expr.v if isinstance(a, Leaf) and is_value(a.expr) else None

    def result_text(self) -> str:
        if self.status == "error":
            return "error"
        if self.status == "budget":
            return "budget"
        return format_value(self.value)


def run(p: Program, scheduler=None, max_steps: int = DEFAULT_MAX_STEPS,
        observer: Callable[[Config, Config, TraceStep], None] | None = None,
        raise_on_budget: bool = True) -> RunResult:
    """Run ``main`` of a checked program until it is terminal.

    ``observer(before, after, step)`` is called after every step.  On budget
    exhaustion :class:`BudgetExceeded` is raised carrying the partial result,
    unless ``raise_on_budget`` is false.
    """
    sched = scheduler or SeededScheduler(0)
    cfg = initial_config(p)
    trace: list[TraceStep] = []
    while True:
        choices = enabled_choices(cfg)
        if not choices:
            status = "error" if cfg.activity is ERROR else "value"
            if status == "value" and not is_terminal(cfg):
                status = "stuck"
            return RunResult(cfg, trace, status)
        if len(trace) >= max_steps:
            res = RunResult(cfg, trace, "budget")
            if raise_on_budget:
                raise BudgetExceeded(f"step budget of {max_steps} exhausted", res)
            return res
        ch = sched.choose(choices)
        new, rule, redex = step_traced(cfg, ch)
        ts = TraceStep(len(trace) + 1, rule, ch, redex)
        trace.append(ts)
        if observer is not None:
            observer(cfg, new, ts)
        cfg = new


# -- runtime well-formedness ----------------------------------------------

@dataclass
class WfReport:
    ok: bool
    reason: str | None
    delta: dict[int, ArrayType]
    gammas: dict[str, tuple[EnvEntry, ...]] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def mirror(stack: Stack) -> tuple[EnvEntry, ...]:
    """The type environment a stack corresponds to."""
    return tuple(EnvEntry(s.name, s.ty, s.marked) for s in stack)


class _WfFail(Exception):
    pass


def _wf_leaf(checker: Checker, leaf: Leaf, where: str, gammas: dict) -> TypeExpr:
    delta, lengths = checker.delta, checker.lengths
    gamma = mirror(leaf.stack)
    gammas[where] = gamma
    if not wf_env(gamma):
        raise _WfFail(f"{where}: ill-formed environment")
    for k, s in enumerate(leaf.stack):
        if s.marked:
            if s.value is not None or not (isinstance(s.ty, ArrayType) and s.ty.ann is Ann.BURIED):
                raise _WfFail(f"{where}: bad borrow marker for {s.name}")
            prev = None
            for q in reversed(leaf.stack[:k]):
                if q.name == s.name:
                    prev = q.ty
                    break
            if (not isinstance(prev, ArrayType) or prev.ann is Ann.BURIED
                    or prev.mod is not s.ty.mod or prev.elem != s.ty.elem):
                raise _WfFail(f"{where}: marker for {s.name} does not match its binding")
        elif not value_has_type(delta, lengths, s.value, s.ty):
            raise _WfFail(f"{where}: {s.name} ↦ {format_value(s.value)} is not a {s.ty}")
    marks = [k for k, s in enumerate(leaf.stack) if s.marked]
    cuts = marks + [len(gamma)]
    checker.frame_envs = [gamma[:c] for c in cuts[1:]]
    checker._depth = 0
    try:
        return checker.infer(gamma[:cuts[0]], leaf.expr)[0]
    except _Fail as f:
        raise _WfFail(f"{where}: {f.diag}") from None
    finally:
        checker.frame_envs = None


def _wf_activity(checker: Checker, a: Activity, path: tuple[str, ...],
                 expected: TypeExpr | None, gammas: dict) -> None:
    where = ".".join(path) if path else "root"
    if a is ERROR:
        return
    if isinstance(a, Leaf):
        t = _wf_leaf(checker, a, where, gammas)
        if expected is not None and t != expected:
            raise _WfFail(f"{where}: thread has type {t}, expected {expected}")
        return
    _wf_activity(checker, a.left, path + ("L",), None, gammas)
    _wf_activity(checker, a.right, path + ("R",), None, gammas)
    t = _wf_leaf(checker, a.waiting, where + "/waiting", gammas)
    if expected is not None and t != expected:
        raise _WfFail(f"{where}: waiting thread has type {t}, expected {expected}")


def wf_config(cfg: Config) -> WfReport:
    """Check heap typing, stack/environment agreement and thread typing."""
    delta = cfg.delta
    lengths = cfg.lengths
    gammas: dict = {}
    try:
        for aid, t in delta.items():
            if not (isinstance(t, ArrayType) and wf_type(t)):
                raise _WfFail(f"ι{aid} has ill-formed type {t}")
            for i, v in enumerate(cfg.heap[aid]):
                if not value_has_type(delta, lengths, v, t.elem):
                    raise _WfFail(f"ι{aid}[{i}] = {format_value(v)} is not a {t.elem}")
        checker = Checker(cfg.program, delta, lengths)
        _wf_activity(checker, cfg.activity, (), cfg.program.main.ret_ty, gammas)
    except _WfFail as exc:
        return WfReport(False, str(exc), delta, gammas)
    return WfReport(True, None, delta, gammas)


def _frames(e: Expr) -> int:
    if isinstance(e, BorrowFrame):
        return 1 + _frames(e.body)
    if isinstance(e, Let):
        return _frames(e.bound)
    if isinstance(e, Assign):
        return _frames(e.value)
    if isinstance(e, Call):
        return _frames(e.arg)
    return 0


def borrow_depth_ok(a: Activity) -> bool:
    """Each thread has as many borrow markers as enclosing borrow frames."""
    if a is ERROR:
        return True
    if isinstance(a, Leaf):
        return sum(1 for s in a.stack if s.marked) == _frames(a.expr)
    return borrow_depth_ok(a.left) and borrow_depth_ok(a.right) and borrow_depth_ok(a.waiting)
