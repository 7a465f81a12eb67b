"""Types and abstract syntax of the core array calculus.

Every node is a frozen dataclass.  Source positions (``pos``) and the static
annotations the checker attaches to variable occurrences are excluded from
equality.  The type carried by a ``null`` literal is part of the term.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Union

from .sigma import IndexMap

__all__ = [
    "Ann", "Mod", "BoolType", "ArrayType", "TypeExpr", "BOOL",
    "Ref", "Value", "Var", "Call", "Let", "Lookup", "Assign", "SplitLet",
    "Merge", "New", "FinishAsync", "Borrow", "BorrowFrame", "Expr",
    "FunDecl", "Program", "free_vars", "binders", "rename", "subexprs",
]


class Ann(Enum):
    UNIQUE = "unique"
    BORROWED = "borrowed"
    BURIED = "buried"


class Mod(Enum):
    VAR = "var"
    VAL = "val"


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class ArrayType:
    ann: Ann
    mod: Mod
    elem: "TypeExpr"

    def __str__(self) -> str:
        return f"{self.ann.value} [{self.mod.value} {self.elem}]"


TypeExpr = Union[BoolType, ArrayType]
BOOL = BoolType()

Pos = tuple[int, int]


# -- runtime values -------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    """A capability value: array identity plus index translation map."""

    array_id: int
    sigma: IndexMap

    def __str__(self) -> str:
        return f"ι{self.array_id}{self.sigma}"


RuntimeValue = Union[bool, None, Ref]


def format_value(v: RuntimeValue) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    return str(v)


# -- expressions ----------------------------------------------------------

@dataclass(frozen=True)
class Value:
    """Literal or runtime value.  ``ty`` is required for ``null`` once checked."""

    v: RuntimeValue
    ty: TypeExpr | None = None
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Lookup:
    name: str
    index: int
    # static type of the array variable and of the element read
    arr_ty: TypeExpr | None = field(default=None, compare=False)
    ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign:
    name: str
    index: int
    value: "Expr"
    arr_ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class SplitLet:
    left: str
    left_sigma: IndexMap
    right: str
    right_sigma: IndexMap
    source: str
    body: "Expr"
    ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Merge:
    left: str
    right: str
    ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class New:
    ty: TypeExpr
    length: int
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class FinishAsync:
    first: "Expr"
    second: "Expr"
    then: "Expr"
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Borrow:
    source: str
    as_read: bool
    alias: str
    body: "Expr"
    src_ty: TypeExpr | None = field(default=None, compare=False)
    alias_ty: TypeExpr | None = field(default=None, compare=False)
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class BorrowFrame:
    """Runtime-only wrapper marking an active borrow scope."""

    body: "Expr"
    pos: Pos | None = field(default=None, compare=False)


Expr = Union[Value, Var, Call, Let, Lookup, Assign, SplitLet, Merge, New,
             FinishAsync, Borrow, BorrowFrame]


@dataclass(frozen=True)
class FunDecl:
    name: str
    param: str
    param_ty: TypeExpr
    ret_ty: TypeExpr
    body: Expr
    pos: Pos | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    functions: tuple[FunDecl, ...]

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate function names")

    def get(self, name: str) -> FunDecl | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def __getitem__(self, name: str) -> FunDecl:
        f = self.get(name)
        if f is None:
            raise KeyError(name)
        return f

    @property
    def main(self) -> FunDecl:
        return self["main"]


# -- traversals -----------------------------------------------------------

def subexprs(e: Expr) -> Iterator[Expr]:
    """Immediate sub-expressions, left to right."""
    if isinstance(e, Call):
        yield e.arg
    elif isinstance(e, Let):
        yield e.bound
        yield e.body
    elif isinstance(e, Assign):
        yield e.value
    elif isinstance(e, (SplitLet, Borrow, BorrowFrame)):
        yield e.body
    elif isinstance(e, FinishAsync):
        yield e.first
        yield e.second
        yield e.then


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Value) or isinstance(e, New):
        return frozenset()
    if isinstance(e, Lookup):
        return frozenset([e.name])
    if isinstance(e, Assign):
        return frozenset([e.name]) | free_vars(e.value)
    if isinstance(e, Merge):
        return frozenset([e.left, e.right])
    if isinstance(e, Let):
        return free_vars(e.bound) | (free_vars(e.body) - {e.name})
    if isinstance(e, SplitLet):
        return frozenset([e.source]) | (free_vars(e.body) - {e.left, e.right})
    if isinstance(e, Borrow):
        return frozenset([e.source]) | (free_vars(e.body) - {e.alias})
    if isinstance(e, (Call, BorrowFrame)):
        return free_vars(e.arg if isinstance(e, Call) else e.body)
    if isinstance(e, FinishAsync):
        return free_vars(e.first) | free_vars(e.second) | free_vars(e.then)
    raise TypeError(f"not an expression: {e!r}")


def binders(e: Expr) -> Iterator[str]:
    """Every name bound anywhere inside ``e``."""
    if isinstance(e, Let):
        yield e.name
    elif isinstance(e, SplitLet):
        yield e.left
        yield e.right
    elif isinstance(e, Borrow):
        yield e.alias
    for s in subexprs(e):
        yield from binders(s)


def rename(e: Expr, m: dict[str, str]) -> Expr:
    """Rename every variable occurrence (bound or free) found in ``m``."""
    r = lambda n: m.get(n, n)  # noqa: E731
    if isinstance(e, (Value, New)):
        return e
    if isinstance(e, Var):
        return replace(e, name=r(e.name))
    if isinstance(e, Lookup):
        return replace(e, name=r(e.name))
    if isinstance(e, Assign):
        return replace(e, name=r(e.name), value=rename(e.value, m))
    if isinstance(e, Merge):
        return replace(e, left=r(e.left), right=r(e.right))
    if isinstance(e, Call):
        return replace(e, arg=rename(e.arg, m))
    if isinstance(e, Let):
        return replace(e, name=r(e.name), bound=rename(e.bound, m), body=rename(e.body, m))
    if isinstance(e, SplitLet):
        return replace(e, left=r(e.left), right=r(e.right), source=r(e.source),
                       body=rename(e.body, m))
    if isinstance(e, Borrow):
        return replace(e, source=r(e.source), alias=r(e.alias), body=rename(e.body, m))
    if isinstance(e, BorrowFrame):
        return replace(e, body=rename(e.body, m))
    if isinstance(e, FinishAsync):
        return replace(e, first=rename(e.first, m), second=rename(e.second, m),
                       then=rename(e.then, m))
    raise TypeError(f"not an expression: {e!r}")


def count_nodes(e: Expr) -> int:
    return 1 + sum(count_nodes(s) for s in subexprs(e))


def map_values(e: Expr, f) -> Expr:
    """Copy of ``e`` with every :class:`Value` node replaced by ``f(node)``."""
    if isinstance(e, Value):
        return f(e)
    if isinstance(e, (Var, Lookup, Merge, New)):
        return e
    if isinstance(e, Call):
        return replace(e, arg=map_values(e.arg, f))
    if isinstance(e, Let):
        return replace(e, bound=map_values(e.bound, f), body=map_values(e.body, f))
    if isinstance(e, Assign):
        return replace(e, value=map_values(e.value, f))
    if isinstance(e, (SplitLet, Borrow, BorrowFrame)):
        return replace(e, body=map_values(e.body, f))
    if isinstance(e, FinishAsync):
        return replace(e, first=map_values(e.first, f), second=map_values(e.second, f),
                       then=map_values(e.then, f))
    raise TypeError(f"not an expression: {e!r}")


def values_in(e: Expr) -> Iterator[Value]:
    """Value nodes of ``e`` in pre-order."""
    if isinstance(e, Value):
        yield e
    for s in subexprs(e):
        yield from values_in(s)


def hole(e: Expr) -> Expr:
    """Follow evaluation-context positions down to the current redex."""
    while True:
        if isinstance(e, Let) and not isinstance(e.bound, Value):
            e = e.bound
        elif isinstance(e, Assign) and not isinstance(e.value, Value):
            e = e.value
        elif isinstance(e, Call) and not isinstance(e.arg, Value):
            e = e.arg
        elif isinstance(e, BorrowFrame) and not isinstance(e.body, Value):
            e = e.body
        else:
            return e


def hole_value(e: Expr) -> "Value | None":
    """The value sitting in the innermost context position, if any."""
    while True:
        if isinstance(e, Value):
            return e
        if isinstance(e, Let):
            e = e.bound
        elif isinstance(e, Assign):
            e = e.value
        elif isinstance(e, Call):
            e = e.arg
        elif isinstance(e, BorrowFrame):
            e = e.body
        else:
            return None
