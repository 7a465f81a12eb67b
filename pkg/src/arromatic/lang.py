"""Concrete syntax: tokenizer, recursive-descent parser, pretty printer.

Grammar (``//`` starts a line comment)::

    program := fun*
    fun     := 'fun' ID '(' ID ':' type ')' ':' type expr
    type    := 'bool' | ann '[' mod type ']' | '(' type ')'
    expr    := 'let' ID '=' expr 'in' expr
             | 'let' ID sigma '++' ID sigma '=' ID 'in' expr
             | 'borrow' ID 'as' ['read'] ID 'in' expr
             | 'finish' '{' 'async' '{' expr '}' 'async' '{' expr '}' '}' ';' expr
             | 'new' type '(' INT ')'
             | ID '[' INT ']' ['=' expr]
             | ID '++' ID
             | ID '(' expr ')'
             | ID | 'true' | 'false' | 'null' [':' type] | '(' expr ')'
    sigma   := '{' [INT '->' INT {',' INT '->' INT}] '}'
             | 'seq' '(' INT ',' INT ')' | 'stride' '(' INT ',' INT ',' INT ')'

Binders are made unique per function: a name bound a second time is
renamed to ``name'k`` and the renaming is reported in ``ParseResult.notes``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from . import sigma as sg
from .errors import ParseError, SigmaError
from .syntax import (BOOL, Ann, ArrayType, Assign, Borrow, BorrowFrame, Call,
                     Expr, FinishAsync, FunDecl, Let, Lookup, Merge, Mod, New,
                     Program, Ref, SplitLet, TypeExpr, Value, Var, format_value)

__all__ = ["parse", "parse_program", "parse_type", "parse_expr", "pretty",
           "pretty_expr", "pretty_type", "ParseResult", "KEYWORDS"]

KEYWORDS = frozenset(
    "fun let in new unique borrowed buried var val bool true false null "
    "finish async borrow as read".split())

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<arrow>->)
  | (?P<plus>\+\+)
  | (?P<punct>[{}\[\]():,;=])
  | (?P<int>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
""", re.X)


@dataclass(frozen=True)
class Token:
    kind: str       # 'int', 'id', 'kw', or the punctuation text itself
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        s = m.group()
        col = pos - line_start + 1
        if kind == "ws":
            nl = s.count("\n")
            if nl:
                line += nl
                line_start = pos + s.rfind("\n") + 1
        elif kind == "int":
            out.append(Token("int", s, line, col))
        elif kind == "id":
            out.append(Token("kw" if s in KEYWORDS else "id", s, line, col))
        else:
            out.append(Token(s, s, line, col))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


@dataclass
class ParseResult:
    program: Program
    notes: list[str] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str) -> bool:
        return self.at("kw", word)

    def fail(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        raise ParseError(msg, t.line, t.col)

    def expect(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or "end of input"
            self.fail(f"expected {want!r}, found {got!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        return self.expect("id").text

    def integer(self) -> int:
        return int(self.expect("int").text)

    # -- grammar ----------------------------------------------------------

    def program(self) -> Program:
        funs = []
        seen = set()
        while not self.at("eof"):
            f = self.fundecl()
            if f.name in seen:
                self.fail(f"function {f.name!r} defined twice")
            seen.add(f.name)
            funs.append(f)
        return Program(tuple(funs))

    def fundecl(self) -> FunDecl:
        start = self.expect("kw", "fun")
        name = self.ident()
        self.expect("(")
        param = self.ident()
        self.expect(":")
        pty = self.type_()
        self.expect(")")
        self.expect(":")
        rty = self.type_()
        body = self.expr()
        return FunDecl(name, param, pty, rty, body, (start.line, start.col))

    def type_(self) -> TypeExpr:
        if self.at("("):
            self.i += 1
            t = self.type_()
            self.expect(")")
            return t
        if self.at_kw("bool"):
            self.i += 1
            return BOOL
        for ann in Ann:
            if self.at_kw(ann.value):
                self.i += 1
                self.expect("[")
                if self.at_kw("var"):
                    mod = Mod.VAR
                elif self.at_kw("val"):
                    mod = Mod.VAL
                else:
                    self.fail("expected 'var' or 'val'")
                self.i += 1
                elem = self.type_()
                self.expect("]")
                return ArrayType(ann, mod, elem)
        self.fail(f"expected a type, found {self.tok.text!r}")

    def sigma_lit(self) -> sg.IndexMap:
        t = self.tok
        if self.at("{") and self.peek().kind == "id":
            # `{seq(0, 2)}` is accepted as a spelling of `seq(0, 2)`
            self.i += 1
            m = self.sigma_lit()
            self.expect("}")
            return m
        if self.at("{"):
            self.i += 1
            pairs: dict[int, int] = {}
            while not self.at("}"):
                k = self.integer()
                self.expect("->")
                v = self.integer()
                if k in pairs:
                    self.fail(f"index {k} mapped twice", t)
                pairs[k] = v
                if not self.at("}"):
                    self.expect(",")
            self.expect("}")
            try:
                return sg.from_pairs(pairs)
            except SigmaError as exc:
                self.fail(str(exc), t)
        if self.at("id", "seq") or self.at("id", "stride"):
            fn = self.ident()
            self.expect("(")
            args = [self.integer()]
            while self.at(","):
                self.i += 1
                args.append(self.integer())
            self.expect(")")
            try:
                return sg.parse_sigma(f"{fn}({', '.join(map(str, args))})")
            except SigmaError as exc:
                self.fail(str(exc), t)
        self.fail("expected an index map literal")

    def expr(self) -> Expr:
        t = self.tok
        pos = (t.line, t.col)
        if self.at_kw("let"):
            self.i += 1
            name = self.ident()
            if self.at("="):
                self.i += 1
                bound = self.expr()
                self.expect("kw", "in")
                return Let(name, bound, self.expr(), pos)
            s1 = self.sigma_lit()
            self.expect("++")
            right = self.ident()
            s2 = self.sigma_lit()
            self.expect("=")
            src = self.ident()
            self.expect("kw", "in")
            return SplitLet(name, s1, right, s2, src, self.expr(), pos=pos)
        if self.at_kw("borrow"):
            self.i += 1
            src = self.ident()
            self.expect("kw", "as")
            as_read = False
            if self.at_kw("read"):
                self.i += 1
                as_read = True
            alias = self.ident()
            self.expect("kw", "in")
            return Borrow(src, as_read, alias, self.expr(), pos=pos)
        if self.at_kw("finish"):
            self.i += 1
            self.expect("{")
            self.expect("kw", "async")
            self.expect("{")
            e1 = self.expr()
            self.expect("}")
            self.expect("kw", "async")
            self.expect("{")
            e2 = self.expr()
            self.expect("}")
            self.expect("}")
            self.expect(";")
            return FinishAsync(e1, e2, self.expr(), pos)
        if self.at_kw("new"):
            self.i += 1
            ty = self.type_()
            self.expect("(")
            n = self.integer()
            self.expect(")")
            return New(ty, n, pos)
        if self.at_kw("true") or self.at_kw("false"):
            self.i += 1
            return Value(t.text == "true", BOOL, pos)
        if self.at_kw("null"):
            self.i += 1
            ty = None
            if self.at(":"):
                self.i += 1
                ty = self.type_()
            return Value(None, ty, pos)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if self.at("id"):
            name = self.ident()
            if self.at("["):
                self.i += 1
                idx = self.integer()
                self.expect("]")
                if self.at("="):
                    self.i += 1
                    return Assign(name, idx, self.expr(), pos=pos)
                return Lookup(name, idx, pos=pos)
            if self.at("++"):
                self.i += 1
                return Merge(name, self.ident(), pos=pos)
            if self.at("("):
                self.i += 1
                arg = self.expr()
                self.expect(")")
                return Call(name, arg, pos)
            return Var(name, pos=pos)
        self.fail(f"expected an expression, found {t.text or 'end of input'!r}")


# -- binder uniqueness ----------------------------------------------------

class _Renamer:
    def __init__(self, fun: FunDecl, notes: list[str]):
        self.used = {fun.param}
        self.notes = notes
        self.fun = fun.name

    def fresh(self, name: str, pos) -> str:
        if name not in self.used:
            self.used.add(name)
            return name
        k = 1
        while f"{name}'{k}" in self.used:
            k += 1
        new = f"{name}'{k}"
        self.used.add(new)
        where = f"{pos[0]}:{pos[1]}: " if pos else ""
        self.notes.append(f"{where}in {self.fun}: renamed duplicate binder {name!r} to {new!r}")
        return new

    def expr(self, e: Expr, env: dict[str, str]) -> Expr:
        r = lambda n: env.get(n, n)  # noqa: E731
        if isinstance(e, (Value, New)):
            return e
        if isinstance(e, Var):
            return replace(e, name=r(e.name))
        if isinstance(e, Lookup):
            return replace(e, name=r(e.name))
        if isinstance(e, Assign):
            return replace(e, name=r(e.name), value=self.expr(e.value, env))
        if isinstance(e, Merge):
            return replace(e, left=r(e.left), right=r(e.right))
        if isinstance(e, Call):
            return replace(e, arg=self.expr(e.arg, env))
        if isinstance(e, Let):
            bound = self.expr(e.bound, env)
            n = self.fresh(e.name, e.pos)
            return replace(e, name=n, bound=bound, body=self.expr(e.body, {**env, e.name: n}))
        if isinstance(e, SplitLet):
            src = r(e.source)
            y = self.fresh(e.left, e.pos)
            z = self.fresh(e.right, e.pos)
            return replace(e, left=y, right=z, source=src,
                           body=self.expr(e.body, {**env, e.left: y, e.right: z}))
        if isinstance(e, Borrow):
            src = r(e.source)
            y = self.fresh(e.alias, e.pos)
            return replace(e, source=src, alias=y, body=self.expr(e.body, {**env, e.alias: y}))
        if isinstance(e, FinishAsync):
            return replace(e, first=self.expr(e.first, env), second=self.expr(e.second, env),
                           then=self.expr(e.then, env))
        raise TypeError(f"unexpected node {e!r}")


def parse(text: str) -> ParseResult:
    """Parse a source file; raises :class:`ParseError` on bad syntax."""
    prog = _Parser(text).program()
    notes: list[str] = []
    funs = []
    for f in prog.functions:
        ren = _Renamer(f, notes)
        funs.append(replace(f, body=ren.expr(f.body, {})))
    return ParseResult(Program(tuple(funs)), notes)


def parse_program(text: str) -> Program:
    return parse(text).program


def parse_type(text: str) -> TypeExpr:
    p = _Parser(text)
    t = p.type_()
    p.expect("eof")
    return t


def parse_expr(text: str) -> Expr:
    """Parse a bare expression (no binder renaming)."""
    p = _Parser(text)
    e = p.expr()
    p.expect("eof")
    return e


# -- pretty printing ------------------------------------------------------

def pretty_type(t: TypeExpr) -> str:
    return str(t)


def _atom(e: Expr) -> bool:
    return not isinstance(e, (Let, SplitLet, Borrow, FinishAsync, Assign))


def pretty_expr(e: Expr, indent: int = 0) -> str:
    """Render an expression.  Runtime-only forms print in a non-parsable way."""
    pad = "  " * indent
    nl = "\n" + pad
    if isinstance(e, Value):
        if isinstance(e.v, Ref):
            return format_value(e.v)
        if e.v is None and e.ty is not None:
            return f"null : {e.ty}"
        return format_value(e.v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Lookup):
        return f"{e.name}[{e.index}]"
    if isinstance(e, Assign):
        return f"{e.name}[{e.index}] = {_sub(e.value, indent)}"
    if isinstance(e, Merge):
        return f"{e.left} ++ {e.right}"
    if isinstance(e, New):
        return f"new {e.ty}({e.length})"
    if isinstance(e, Call):
        return f"{e.fn}({pretty_expr(e.arg, indent)})"
    if isinstance(e, Let):
        return f"let {e.name} = {_sub(e.bound, indent)} in{nl}{pretty_expr(e.body, indent)}"
    if isinstance(e, SplitLet):
        return (f"let {e.left}{sg.format_sigma(e.left_sigma)} ++ "
                f"{e.right}{sg.format_sigma(e.right_sigma)} = {e.source} in{nl}"
                f"{pretty_expr(e.body, indent)}")
    if isinstance(e, Borrow):
        mode = "read " if e.as_read else ""
        return f"borrow {e.source} as {mode}{e.alias} in{nl}{pretty_expr(e.body, indent)}"
    if isinstance(e, FinishAsync):
        inner = "  " * (indent + 1)
        return (f"finish {{\n{inner}async {{ {_sub(e.first, indent + 2)} }}\n"
                f"{inner}async {{ {_sub(e.second, indent + 2)} }}\n{pad}}};{nl}"
                f"{pretty_expr(e.then, indent)}")
    if isinstance(e, BorrowFrame):
        return f"B⟨{pretty_expr(e.body, indent)}⟩"
    raise TypeError(f"not an expression: {e!r}")


def _sub(e: Expr, indent: int) -> str:
    if _atom(e):
        return pretty_expr(e, indent)
    return "(" + pretty_expr(e, indent + 1) + ")"


def pretty(p: Program) -> str:
    out = []
    for f in p.functions:
        out.append(f"fun {f.name}({f.param}: {f.param_ty}): {f.ret_ty}\n"
                   f"  {pretty_expr(f.body, 1)}\n")
    return "\n".join(out)
