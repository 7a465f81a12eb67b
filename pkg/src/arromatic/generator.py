"""Type-directed generation of random well-typed programs.

The generator keeps a symbolic environment while it builds a program.  Each
variable remembers its type and, when it is known, what it holds at run
time: which (abstract) physical array it points into and through which
indices.  In ``safe`` mode that knowledge is used so that no index, index map
or null dereference can fail.  ``wild`` mode deliberately ignores it now and
then, producing programs that are still well typed but may step to Error.

Programs are small let-chains over a fixed pool of array types nested at most
three deep, plus up to two helper functions that main (and each other) may
call.  Helpers never recurse, so every run terminates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from . import sigma as sg
from .errors import GenerationExhausted
from .syntax import (BOOL, Ann, ArrayType, Assign, Borrow, Call, Expr,
                     FinishAsync, FunDecl, Let, Lookup, Merge, Mod, New,
                     Program, SplitLet, TypeExpr, Value, Var, count_nodes)
from .typecheck import TypeCheckError, check_program, lookup_result_type, read_only, weaken

__all__ = ["generate", "TYPE_POOL", "MODES"]

MODES = ("safe", "wild")

_U, _VAR, _VAL = Ann.UNIQUE, Mod.VAR, Mod.VAL
_T1 = ArrayType(_U, _VAR, BOOL)
_T2 = ArrayType(_U, _VAL, BOOL)
TYPE_POOL: tuple[ArrayType, ...] = (
    _T1, _T2,
    ArrayType(_U, _VAR, _T1),
    ArrayType(_U, _VAR, _T2),
    ArrayType(_U, _VAL, _T2),
    ArrayType(_U, _VAL, _T1),
    ArrayType(_U, _VAR, ArrayType(_U, _VAR, _T1)),
)

LIVE, DEAD, OPAQUE = "live", "dead", "opaque"


@dataclass(eq=False)
class _Rec:
    """An abstract physical array: its length and what its slots hold."""

    length: int
    elems: dict = field(default_factory=dict)  # physical index -> _Info


@dataclass(eq=False)
class _Info:
    """What a variable (or array slot) holds."""

    ty: TypeExpr
    state: str = OPAQUE
    rec: _Rec | None = None
    phys: tuple[int, ...] = ()
    name: str | None = None

    @property
    def usable(self) -> bool:
        return self.state == LIVE and (self.ty is BOOL or self.rec is not None)

    def copy_to(self, other: "_Info") -> None:
        other.state, other.rec, other.phys = self.state, self.rec, self.phys


def _fresh_rec(t: ArrayType, n: int, elem_state: str) -> _Rec:
    rec = _Rec(n)
    if isinstance(t.elem, ArrayType):
        rec.elems = {i: _Info(t.elem, elem_state) for i in range(n)}
    return rec


@dataclass
class _Helper:
    decl: FunDecl
    min_len: int     # callers must pass a live array at least this long
    forks: int       # deepest finish nesting reachable through a call


Wrap = Callable[[Expr], Expr]


class _Gen:
    def __init__(self, rng: random.Random, mode: str, size: int):
        self.rng = rng
        self.mode = mode
        self.size = size
        self.counter = 0
        self.helpers: dict[str, _Helper] = {}
        self.forks_used = 0
        self.max_forks = 2

    # -- small utilities --------------------------------------------------

    def name(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def chance(self, p: float) -> bool:
        return self.rng.random() < p

    def wild(self, p: float = 0.25) -> bool:
        return self.mode == "wild" and self.chance(p)

    def null(self, t: TypeExpr) -> Value:
        return Value(None, t)

    def index(self, x: _Info) -> int | None:
        n = len(x.phys) if x.usable else 0
        if self.wild(0.2) or not x.usable:
            return self.rng.randrange(0, 4) if self.mode == "wild" else None
        if n == 0:
            return None
        return self.rng.randrange(n)

    # -- statements ------------------------------------------------------
    # Each returns (wrapper, node count) or None when not applicable.  The
    # wrapper receives the rest of the block.

    def bind(self, scope: list, t: TypeExpr, bound: Expr, info: _Info) -> tuple[Wrap, int]:
        v = self.name()
        info.name = v
        info.ty = t
        scope.append(info)
        return (lambda rest: Let(v, bound, rest)), 1 + count_nodes(bound)

    def st_new(self, scope, budget, forks):
        t = self.rng.choice(TYPE_POOL)
        n = self.rng.randrange(0, 5) if self.mode == "wild" else self.rng.randrange(1, 5)
        info = _Info(t, LIVE, _fresh_rec(t, n, DEAD), tuple(range(n)))
        return self.bind(scope, t, New(t, n), info)

    def st_bool(self, scope, budget, forks):
        return self.bind(scope, BOOL, Value(self.chance(0.5), BOOL), _Info(BOOL, LIVE))

    def st_copy(self, scope, budget, forks):
        cands = [s for s in scope if isinstance(s.ty, ArrayType)]
        if not cands:
            return None
        x = self.rng.choice(cands)
        info = _Info(x.ty)
        x.copy_to(info)
        if not read_only(x.ty):
            x.state, x.rec = DEAD, None
        return self.bind(scope, x.ty, Var(x.name), info)

    def _lookup_target(self, scope):
        ok = [s for s in scope if isinstance(s.ty, ArrayType)
              and (read_only(s.ty.elem) or s.ty.mod is _VAR)]
        if self.mode == "safe":
            ok = [s for s in ok if s.usable and s.phys]
        return self.rng.choice(ok) if ok else None

    def st_lookup(self, scope, budget, forks):
        x = self._lookup_target(scope)
        if x is None:
            return None
        i = self.index(x)
        if i is None:
            return None
        rt = lookup_result_type(x.ty)
        info = _Info(rt, LIVE if rt is BOOL else OPAQUE)
        if isinstance(rt, ArrayType) and x.usable and i < len(x.phys):
            p = x.phys[i]
            slot = x.rec.elems.get(p)
            if slot is not None:
                slot.copy_to(info)
                if not read_only(x.ty.elem):
                    slot.state, slot.rec = DEAD, None
        return self.bind(scope, rt, Lookup(x.name, i), info)

    def _value_of(self, scope, t: TypeExpr, forks) -> tuple[Expr, _Info]:
        """An expression of type ``t`` usable as an assigned/passed value."""
        if t is BOOL:
            bools = [s for s in scope if s.ty is BOOL]
            if bools and self.chance(0.4):
                return Var(self.rng.choice(bools).name), _Info(BOOL, LIVE)
            return Value(self.chance(0.5), BOOL), _Info(BOOL, LIVE)
        same = [s for s in scope if s.ty == t]
        r = self.rng.random()
        if same and r < 0.5:
            x = self.rng.choice(same)
            info = _Info(t)
            x.copy_to(info)
            if not read_only(t):
                x.state, x.rec = DEAD, None
            return Var(x.name), info
        if t.ann is Ann.UNIQUE and r < 0.85:
            n = self.rng.randrange(1, 4)
            return New(t, n), _Info(t, LIVE, _fresh_rec(t, n, DEAD), tuple(range(n)))
        return self.null(t), _Info(t, DEAD)

    def st_assign(self, scope, budget, forks):
        ok = [s for s in scope if isinstance(s.ty, ArrayType) and s.ty.mod is _VAR
              and not (isinstance(s.ty.elem, ArrayType) and s.ty.elem.ann is Ann.BORROWED)]
        if self.mode == "safe":
            ok = [s for s in ok if s.usable and s.phys]
        if not ok:
            return None
        x = self.rng.choice(ok)
        i = self.index(x)
        if i is None:
            return None
        val, info = self._value_of([s for s in scope if s is not x], x.ty.elem, forks)
        if x.usable and i < len(x.phys) and isinstance(x.ty.elem, ArrayType):
            x.rec.elems[x.phys[i]] = info
        return self.bind(scope, BOOL, Assign(x.name, i, val), _Info(BOOL, LIVE))

    def _split_maps(self, n: int) -> tuple[sg.IndexMap, sg.IndexMap]:
        if self.mode == "wild" and self.chance(0.3):
            pool = list(range(n + 2))
        else:
            pool = list(range(n))
        style = self.rng.randrange(4)
        if style == 0 and n >= 1:
            parts = sg.split_consecutive(n, min(2, n))
            return (parts[0], parts[1]) if len(parts) == 2 else (parts[0], sg.IndexMap())
        if style == 1 and n >= 2:
            a, b = sg.split_strided(n, 2)
            return a, b
        self.rng.shuffle(pool)
        k1 = self.rng.randrange(0, len(pool) + 1)
        k2 = self.rng.randrange(0, len(pool) - k1 + 1)
        left, right = pool[:k1], pool[k1:k1 + k2]
        if self.chance(0.5):
            left.sort()
            right.sort()
        return sg.IndexMap(left), sg.IndexMap(right)

    def st_split(self, scope, budget, forks):
        ok = [s for s in scope if isinstance(s.ty, ArrayType)]
        if self.mode == "safe":
            ok = [s for s in ok if s.usable]
        if not ok:
            return None
        x = self.rng.choice(ok)
        n = len(x.phys) if x.usable else self.rng.randrange(0, 4)
        s1, s2 = self._split_maps(n)
        a, b = self.name(), self.name()
        ia, ib = _Info(x.ty, name=a), _Info(x.ty, name=b)
        if x.usable and all(k < n for k in s1.range | s2.range):
            ia.state, ia.rec, ia.phys = LIVE, x.rec, tuple(x.phys[k] for k in s1)
            ib.state, ib.rec, ib.phys = LIVE, x.rec, tuple(x.phys[k] for k in s2)
        x.state, x.rec = DEAD, None
        scope.extend([ia, ib])
        src = x.name
        return (lambda rest: SplitLet(a, s1, b, s2, src, rest)), 1

    def st_merge(self, scope, budget, forks):
        arrays = [s for s in scope if isinstance(s.ty, ArrayType)]
        pairs = []
        for i, x in enumerate(arrays):
            for y in arrays[i + 1:]:
                if x.ty != y.ty:
                    continue
                if self.mode == "safe" and not (
                        x.usable and y.usable and x.rec is y.rec
                        and not set(x.phys) & set(y.phys)):
                    continue
                pairs.append((x, y))
        if not pairs:
            return None
        x, y = self.rng.choice(pairs)
        if self.chance(0.5):
            x, y = y, x
        info = _Info(x.ty)
        if x.usable and y.usable and x.rec is y.rec and not set(x.phys) & set(y.phys):
            info.state, info.rec, info.phys = LIVE, x.rec, x.phys + y.phys
        else:
            info.state = DEAD
        for s in (x, y):
            s.state, s.rec = DEAD, None
        return self.bind(scope, x.ty, Merge(x.name, y.name), info)

    def st_borrow(self, scope, budget, forks):
        ok = [s for s in scope if isinstance(s.ty, ArrayType)]
        if self.mode == "safe":
            ok = [s for s in ok if s.usable]
        if not ok or budget < 4:
            return None
        x = self.rng.choice(ok)
        as_read = self.chance(0.4)
        alias_t = (ArrayType(Ann.BORROWED, _VAL, weaken(x.ty.elem)) if as_read
                   else ArrayType(Ann.BORROWED, x.ty.mod, x.ty.elem))
        y = self.name()
        alias = _Info(alias_t, name=y)
        x.copy_to(alias)
        inner = [s for s in scope if s is not x] + [alias]
        body = self.block(inner, BOOL, self.rng.randrange(2, max(3, budget // 2)), forks)
        v = self.name()
        scope.append(_Info(BOOL, LIVE, name=v))
        e = Borrow(x.name, as_read, y, body)
        return (lambda rest: Let(v, e, rest)), 1 + count_nodes(e)

    def st_finish(self, scope, budget, forks):
        if forks >= self.max_forks or budget < 6:
            return None
        vars_ = list(scope)
        self.rng.shuffle(vars_)
        k1 = self.rng.randrange(0, len(vars_) + 1)
        k2 = self.rng.randrange(0, len(vars_) - k1 + 1)
        left, right = vars_[:k1], vars_[k1:k1 + k2]
        share = max(2, (budget - 2) // 3)
        t1 = self.rng.choice((BOOL,) + TYPE_POOL[:2])
        t2 = self.rng.choice((BOOL,) + TYPE_POOL[:2])
        e1 = self.block(list(left), t1, share, forks + 1)
        e2 = self.block(list(right), t2, share, forks + 1)
        self.forks_used = max(self.forks_used, forks + 1)
        cost = 1 + count_nodes(e1) + count_nodes(e2)
        return (lambda rest: FinishAsync(e1, e2, rest)), cost

    def st_call(self, scope, budget, forks):
        options = []
        for h in self.helpers.values():
            if forks + h.forks > self.max_forks:
                continue
            pt = h.decl.param_ty
            if pt is BOOL:
                options.append((h, None))
                continue
            for s in scope:
                if s.ty != pt:
                    continue
                if self.mode == "safe" and not (s.usable and len(s.phys) >= h.min_len):
                    continue
                options.append((h, s))
            if self.mode == "wild" or h.min_len == 0:
                options.append((h, "null"))
        if not options:
            return None
        h, arg = self.rng.choice(options)
        pt = h.decl.param_ty
        if arg is None:
            a: Expr = Value(self.chance(0.5), BOOL)
        elif arg == "null":
            a = self.null(pt)
        else:
            a = Var(arg.name)
            if arg.rec is not None and isinstance(pt.elem, ArrayType):
                for p in arg.phys:
                    arg.rec.elems[p] = _Info(pt.elem, OPAQUE)
            if not read_only(pt):
                arg.state, arg.rec = DEAD, None
        rt = h.decl.ret_ty
        info = _Info(rt, LIVE if rt is BOOL else OPAQUE)
        return self.bind(scope, rt, Call(h.decl.name, a), info)

    STATEMENTS = (
        ("new", 3), ("bool", 1), ("copy", 1), ("lookup", 3), ("assign", 3),
        ("split", 3), ("merge", 2), ("borrow", 2), ("finish", 2), ("call", 2),
    )

    # -- blocks -----------------------------------------------------------

    def final(self, scope, t: TypeExpr) -> Expr:
        r = self.rng.random()
        if t is BOOL:
            if r < 0.3:
                got = self.st_lookup_bool(scope)
                if got is not None:
                    return got
            bools = [s for s in scope if s.ty is BOOL and s.name]
            if bools and r < 0.6:
                return Var(self.rng.choice(bools).name)
            return Value(self.chance(0.5), BOOL)
        same = [s for s in scope if s.ty == t and s.name]
        if same and r < 0.6:
            x = self.rng.choice(same)
            if not read_only(t):
                x.state, x.rec = DEAD, None
            return Var(x.name)
        if t.ann is Ann.UNIQUE and r < 0.85:
            return New(t, self.rng.randrange(1, 4))
        return self.null(t)

    def st_lookup_bool(self, scope):
        ok = [s for s in scope if isinstance(s.ty, ArrayType) and s.ty.elem is BOOL and s.name]
        if self.mode == "safe":
            ok = [s for s in ok if s.usable and s.phys]
        if not ok:
            return None
        x = self.rng.choice(ok)
        i = self.index(x)
        return None if i is None else Lookup(x.name, i)

    def block(self, scope: list, t: TypeExpr, budget: int, forks: int) -> Expr:
        wraps: list[Wrap] = []
        names, weights = zip(*self.STATEMENTS)
        attempts = 0
        while budget > 2 and attempts < 30 and self.chance(0.92):
            attempts += 1
            kind = self.rng.choices(names, weights)[0]
            got = getattr(self, "st_" + kind)(scope, budget - 2, forks)
            if got is None:
                continue
            w, cost = got
            wraps.append(w)
            budget -= cost
        e = self.final(scope, t)
        for w in reversed(wraps):
            e = w(e)
        return e

    # -- programs ---------------------------------------------------------

    def helper(self, name: str, budget: int) -> _Helper:
        pool = [BOOL, *TYPE_POOL]
        pt = self.rng.choice(pool + [ArrayType(Ann.BORROWED, t.mod, t.elem) for t in TYPE_POOL[:4]])
        rt = self.rng.choice(pool)
        min_len = self.rng.randrange(0, 3) if isinstance(pt, ArrayType) else 0
        p = self.name()
        if isinstance(pt, ArrayType):
            state = OPAQUE if self.mode == "wild" or min_len == 0 else LIVE
            pinfo = _Info(pt, state, _fresh_rec(pt, min_len, OPAQUE), tuple(range(min_len)), name=p)
            if state == OPAQUE:
                pinfo.rec, pinfo.phys = None, ()
        else:
            pinfo = _Info(BOOL, LIVE, name=p)
        before = self.forks_used
        self.forks_used = 0
        body = self.block([pinfo], rt, budget, 0)
        forks, self.forks_used = self.forks_used, before
        return _Helper(FunDecl(name, p, pt, rt, body), min_len, forks)

    def program(self, force_fork: bool) -> Program:
        n_helpers = self.rng.choice((0, 0, 1, 1, 2))
        budget = self.size
        for k in reversed(range(n_helpers)):
            hb = max(3, budget // (3 if n_helpers == 2 else 2))
            h = self.helper(f"f{k}", hb)
            self.helpers[h.decl.name] = h
            budget -= count_nodes(h.decl.body)
        ret = self.rng.choice((BOOL, BOOL, *TYPE_POOL[:3]))
        scope = [_Info(BOOL, LIVE, name="x")]
        self.forks_used = 0
        wraps: list[Wrap] = []
        if force_fork:
            for _ in range(self.rng.randrange(1, 4)):
                w, cost = self.st_new(scope, budget, 0)
                wraps.append(w)
                budget -= cost
            w, cost = self.st_finish(scope, max(budget - 3, 6), 0)
            wraps.append(w)
            budget -= cost
        body = self.block(scope, ret, max(budget, 3), 0)
        for w in reversed(wraps):
            body = w(body)
        main = FunDecl("main", "x", BOOL, ret, body)
        funs = [h.decl for h in self.helpers.values()]
        return Program(tuple(funs) + (main,))


def generate(seed: int, size: int = 40, mode: str = "safe", force_fork: bool = False,
             tries: int = 200) -> Program:
    """A random program accepted by the type checker.

    ``size`` bounds the total number of expression nodes over all functions.
    With ``force_fork`` the program is guaranteed to contain a finish/async
    block.  Raises :class:`GenerationExhausted` if no attempt fits.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = random.Random(seed)
    for _ in range(tries):
        g = _Gen(rng, mode, size)
        p = g.program(force_fork)
        total = sum(count_nodes(f.body) for f in p.functions)
        if total > size:
            continue
        if force_fork and not _has_fork(p):
            continue
        try:
            return check_program(p)
        except TypeCheckError as exc:  # a generator bug; never expected
            raise AssertionError(f"generated ill-typed program (seed {seed}): {exc}") from None
    raise GenerationExhausted(f"no program within {size} nodes after {tries} attempts")


def _has_fork(p: Program) -> bool:
    from .syntax import subexprs

    def walk(e: Expr) -> bool:
        return isinstance(e, FinishAsync) or any(walk(s) for s in subexprs(e))
    return any(walk(f.body) for f in p.functions)
