"""Static semantics: type predicates, environments and the typing judgment.

The checker is syntax directed.  ``Checker.infer`` returns the type of an
expression together with an elaborated copy whose variable occurrences carry
their static types; the evaluator reads those annotations to decide between
destructive and non-destructive reads.

The same checker types runtime terms.  Give it the array-type map (one entry
per heap array) and the physical lengths, and it also accepts capability
values and borrow frames.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .errors import ArromaticError
from .syntax import (BOOL, Ann, ArrayType, Assign, Borrow, BorrowFrame,
                     BoolType, Call, Expr, FinishAsync, FunDecl, Let, Lookup,
                     Merge, Mod, New, Program, Ref, SplitLet, TypeExpr, Value,
                     Var, free_vars)
from . import sigma as sg

__all__ = [
    "is_array", "read_only", "read_only_elems", "is_borrowed", "is_buried",
    "weaken", "with_ann", "read", "wf_type", "EnvEntry", "TypeEnv",
    "env_lookup", "env_vars", "wf_env", "wf_runtime_env", "Diagnostic",
    "TypeCheckError", "Checker", "check_program", "lookup_result_type",
    "value_has_type",
]


# -- predicates -----------------------------------------------------------

def is_array(t: TypeExpr) -> bool:
    return isinstance(t, ArrayType)


def read_only(t: TypeExpr) -> bool:
    """True for bool and for arrays that are ``val`` at every level."""
    while isinstance(t, ArrayType):
        if t.mod is not Mod.VAL:
            return False
        t = t.elem
    return True


def read_only_elems(t: TypeExpr) -> bool:
    return isinstance(t, ArrayType) and read_only(t.elem)


def is_borrowed(t: TypeExpr) -> bool:
    return isinstance(t, ArrayType) and t.ann is Ann.BORROWED


def is_buried(t: TypeExpr) -> bool:
    return isinstance(t, ArrayType) and t.ann is Ann.BURIED


def read(t: TypeExpr) -> bool:
    """Capability-level read-only test: outermost modifier is ``val``."""
    return isinstance(t, ArrayType) and t.mod is Mod.VAL


def weaken(t: TypeExpr) -> TypeExpr:
    """Turn every modifier into ``val``, keeping annotations."""
    if isinstance(t, ArrayType):
        return ArrayType(t.ann, Mod.VAL, weaken(t.elem))
    return t


def with_ann(t: ArrayType, ann: Ann) -> ArrayType:
    return ArrayType(ann, t.mod, t.elem)


def wf_type(t: object) -> bool:
    if isinstance(t, BoolType):
        return True
    if isinstance(t, ArrayType):
        return isinstance(t.ann, Ann) and isinstance(t.mod, Mod) and wf_type(t.elem)
    return False


def lookup_result_type(arr: ArrayType) -> TypeExpr:
    """Type of ``x[i]`` for ``x : arr``.

    A read-only array element copied out of a *borrowed* array keeps the
    borrowed annotation.  Without this the copy could be stored in the heap
    and outlive the borrow; for a read-weakened borrow that would leave a
    second alias of an element which the original owner may still mutate.
    """
    elem = arr.elem
    if arr.ann is Ann.BORROWED and isinstance(elem, ArrayType) and read_only(elem):
        return with_ann(elem, Ann.BORROWED)
    return elem


# -- environments ---------------------------------------------------------

@dataclass(frozen=True)
class EnvEntry:
    name: str
    ty: TypeExpr
    marked: bool = False  # a "• x : t" block entry

    def __str__(self) -> str:
        return f"{'• ' if self.marked else ''}{self.name} : {self.ty}"


TypeEnv = tuple[EnvEntry, ...]


def env_lookup(env: Sequence[EnvEntry], name: str) -> TypeExpr | None:
    for e in reversed(env):
        if e.name == name:
            return e.ty
    return None


def env_vars(env: Sequence[EnvEntry]) -> set[str]:
    return {e.name for e in env}


def wf_env(env: Sequence[EnvEntry]) -> bool:
    seen: set[str] = set()
    for e in env:
        if not wf_type(e.ty):
            return False
        if e.marked:
            if e.name not in seen:
                return False
        elif e.name in seen:
            return False
        seen.add(e.name)
    return True


def wf_runtime_env(delta: Mapping[int, TypeExpr]) -> bool:
    return all(isinstance(t, ArrayType) and wf_type(t) for t in delta.values())


def value_has_type(delta: Mapping[int, TypeExpr], lengths: Mapping[int, int],
                   v: object, t: TypeExpr) -> bool:
    """The value typing relation used for stacks, heaps and runtime terms.

    A capability can be seen at the type its array was allocated with, or as
    a borrowed alias of it, optionally weakened to read-only.
    """
    if v is True or v is False:
        return isinstance(t, BoolType)
    if v is None:
        return isinstance(t, ArrayType) and wf_type(t)
    if isinstance(v, Ref):
        if not isinstance(t, ArrayType) or v.array_id not in delta:
            return False
        n = lengths.get(v.array_id, 0)
        if any(p >= n for p in v.sigma):
            return False
        d = delta[v.array_id]
        return t == d or t == with_ann(d, Ann.BORROWED) or t == with_ann(weaken(d), Ann.BORROWED)
    return False


# -- diagnostics ----------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    pos: tuple[int, int] | None = None
    function: str | None = None

    def __str__(self) -> str:
        where = f"{self.pos[0]}:{self.pos[1]}: " if self.pos else ""
        return f"{where}{self.rule}: {self.message}"


class TypeCheckError(ArromaticError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics

    @property
    def rules(self) -> list[str]:
        return [d.rule for d in self.diagnostics]


class _Fail(Exception):
    def __init__(self, rule: str, message: str, pos=None):
        super().__init__(message)
        self.diag = Diagnostic(rule, message, pos)


# -- the judgment ---------------------------------------------------------

class Checker:
    """Typing of expressions under an array-type map and an environment."""

    def __init__(self, program: Program, delta: Mapping[int, TypeExpr] | None = None,
                 lengths: Mapping[int, int] | None = None):
        self.program = program
        self.delta = delta or {}
        self.lengths = lengths or {}
        # Runtime threads: the environment inside the k-th enclosing borrow
        # frame is the stack up to (and past) its k-th marker, while the
        # surrounding context only sees the entries before that marker.
        self.frame_envs: list[TypeEnv] | None = None
        self._depth = 0

    def _var(self, env: TypeEnv, name: str, pos) -> TypeExpr:
        t = env_lookup(env, name)
        if t is None:
            raise _Fail("E-VAR", f"unbound variable {name!r}", pos)
        if is_buried(t):
            raise _Fail("E-VAR", f"variable {name!r} is buried by an enclosing borrow", pos)
        return t

    def _extend(self, env: TypeEnv, name: str, t: TypeExpr, pos, rule: str) -> TypeEnv:
        if any(e.name == name for e in env):
            raise _Fail("WF-VAR", f"{rule}: variable {name!r} is already bound", pos)
        return env + (EnvEntry(name, t),)

    def infer(self, env: TypeEnv, e: Expr, expected: TypeExpr | None = None
              ) -> tuple[TypeExpr, Expr]:
        pos = getattr(e, "pos", None)
        if isinstance(e, Var):
            t = self._var(env, e.name, pos)
            return t, replace(e, ty=t)

        if isinstance(e, Value):
            v = e.v
            if v is True or v is False:
                return BOOL, replace(e, ty=BOOL)
            if v is None:
                t = e.ty if e.ty is not None else expected
                if t is None:
                    raise _Fail("E-NULL", "cannot determine the type of null; write `null : T`", pos)
                if not (is_array(t) and wf_type(t)):
                    raise _Fail("E-NULL", f"null cannot have non-array type {t}", pos)
                return t, replace(e, ty=t)
            if isinstance(v, Ref):
                if e.ty is None or not value_has_type(self.delta, self.lengths, v, e.ty):
                    raise _Fail("E-ARRAY-VALUE", f"capability {v} does not have type {e.ty}", pos)
                return e.ty, e
            raise _Fail("E-VALUE", f"unknown value {v!r}", pos)

        if isinstance(e, Call):
            f = self.program.get(e.fn)
            if f is None:
                raise _Fail("E-CALL", f"unknown function {e.fn!r}", pos)
            ta, arg = self.infer(env, e.arg, f.param_ty)
            if ta != f.param_ty:
                raise _Fail("E-CALL", f"{e.fn} expects {f.param_ty}, argument has type {ta}", pos)
            return f.ret_ty, replace(e, arg=arg)

        if isinstance(e, Let):
            t1, bound = self.infer(env, e.bound)
            env2 = self._extend(env, e.name, t1, pos, "E-LET")
            t, body = self.infer(env2, e.body, expected)
            return t, replace(e, bound=bound, body=body)

        if isinstance(e, Lookup):
            t = self._var(env, e.name, pos)
            if not isinstance(t, ArrayType):
                raise _Fail("E-ARRAY-LOOKUP", f"{e.name!r} has non-array type {t}", pos)
            if not read_only(t.elem) and t.mod is not Mod.VAR:
                raise _Fail("E-ARRAY-LOOKUP",
                            f"elements of {e.name!r} are not read-only, so reading one consumes it, "
                            f"but {e.name!r} has modifier val", pos)
            rt = lookup_result_type(t)
            return rt, replace(e, arr_ty=t, ty=rt)

        if isinstance(e, Assign):
            t = self._var(env, e.name, pos)
            if not isinstance(t, ArrayType):
                raise _Fail("E-ARRAY-ASSIGN", f"{e.name!r} has non-array type {t}", pos)
            if t.mod is not Mod.VAR:
                raise _Fail("E-ARRAY-ASSIGN", f"{e.name!r} is not mutable (modifier val)", pos)
            if is_borrowed(t.elem):
                raise _Fail("E-ARRAY-ASSIGN", "cannot store into an array of borrowed elements", pos)
            tv, val = self.infer(env, e.value, t.elem)
            if tv != t.elem:
                raise _Fail("E-ARRAY-ASSIGN",
                            f"value of type {tv} stored into element of type {t.elem}", pos)
            return BOOL, replace(e, value=val, arr_ty=t)

        if isinstance(e, SplitLet):
            t = self._var(env, e.source, pos)
            if not is_array(t):
                raise _Fail("E-ARRAY-SPLIT", f"{e.source!r} has non-array type {t}", pos)
            if not sg.disjoint(e.left_sigma, e.right_sigma):
                raise _Fail("E-ARRAY-SPLIT",
                            f"index map ranges overlap: {e.left_sigma} and {e.right_sigma}", pos)
            env2 = self._extend(env, e.left, t, pos, "E-ARRAY-SPLIT")
            env2 = self._extend(env2, e.right, t, pos, "E-ARRAY-SPLIT")
            t1, body = self.infer(env2, e.body, expected)
            return t1, replace(e, body=body, ty=t)

        if isinstance(e, Merge):
            tx = self._var(env, e.left, pos)
            ty = self._var(env, e.right, pos)
            if not is_array(tx):
                raise _Fail("E-ARRAY-MERGE", f"{e.left!r} has non-array type {tx}", pos)
            if tx != ty:
                raise _Fail("E-ARRAY-MERGE", f"cannot merge {tx} with {ty}", pos)
            return tx, replace(e, ty=tx)

        if isinstance(e, New):
            t = e.ty
            if not wf_type(t) or not isinstance(t, ArrayType) or t.ann is not Ann.UNIQUE:
                raise _Fail("E-ARRAY-NEW", f"new needs a unique array type, got {t}", pos)
            return t, e

        if isinstance(e, FinishAsync):
            _, e1 = self.infer(env, e.first)
            _, e2 = self.infer(env, e.second)
            shared = free_vars(e.first) & free_vars(e.second)
            if shared:
                raise _Fail("E-FINISH-ASYNC",
                            f"async blocks share free variables {sorted(shared)}", pos)
            t, e3 = self.infer(env, e.then, expected)
            return t, replace(e, first=e1, second=e2, then=e3)

        if isinstance(e, Borrow):
            t = self._var(env, e.source, pos)
            if not isinstance(t, ArrayType):
                raise _Fail("E-BORROW", f"cannot borrow non-array {e.source!r} : {t}", pos)
            if e.as_read:
                alias_t = ArrayType(Ann.BORROWED, Mod.VAL, weaken(t.elem))
            else:
                alias_t = ArrayType(Ann.BORROWED, t.mod, t.elem)
            env2 = env + (EnvEntry(e.source, ArrayType(Ann.BURIED, t.mod, t.elem), True),)
            env2 = self._extend(env2, e.alias, alias_t, pos, "E-BORROW")
            _, body = self.infer(env2, e.body)
            return BOOL, replace(e, body=body, src_ty=t, alias_ty=alias_t)

        if isinstance(e, BorrowFrame):
            inner = env
            if self.frame_envs is not None:
                if self._depth >= len(self.frame_envs):
                    raise _Fail("E-BORROWED", "borrow frame without a matching stack marker", pos)
                inner = self.frame_envs[self._depth]
            self._depth += 1
            try:
                _, body = self.infer(inner, e.body)
            finally:
                self._depth -= 1
            return BOOL, replace(e, body=body)

        raise _Fail("E-UNKNOWN", f"not an expression: {e!r}", pos)

    def type_of(self, env: TypeEnv, e: Expr) -> TypeExpr:
        return self.infer(env, e)[0]

    def check_function(self, f: FunDecl) -> FunDecl:
        if not wf_type(f.param_ty) or not wf_type(f.ret_ty):
            raise _Fail("WF-FUNCTION", f"ill-formed signature of {f.name}", f.pos)
        t, body = self.infer((EnvEntry(f.param, f.param_ty),), f.body, f.ret_ty)
        if t != f.ret_ty:
            raise _Fail("WF-FUNCTION", f"body of {f.name} has type {t}, declared {f.ret_ty}", f.pos)
        return replace(f, body=body)


def infer(delta: Mapping[int, TypeExpr], env: Sequence[EnvEntry], e: Expr,
          program: Program | None = None, lengths: Mapping[int, int] | None = None
          ) -> TypeExpr:
    """Type of ``e`` or :class:`TypeCheckError` naming the violated rule."""
    try:
        return Checker(program or Program(()), delta, lengths).infer(tuple(env), e)[0]
    except _Fail as f:
        raise TypeCheckError([f.diag]) from None


def check_program(p: Program) -> Program:
    """Check every function; return the elaborated program.

    Raises :class:`TypeCheckError` carrying the first diagnostic of every
    failing function.
    """
    checker = Checker(p)
    diags: list[Diagnostic] = []
    funs = []
    if p.get("main") is None:
        diags.append(Diagnostic("WF-PROGRAM", "program has no main function"))
    for f in p.functions:
        try:
            funs.append(checker.check_function(f))
        except _Fail as fail:
            diags.append(replace(fail.diag, function=f.name))
    if diags:
        raise TypeCheckError(diags)
    return Program(tuple(funs))
