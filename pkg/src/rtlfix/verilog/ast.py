"""AST node types for the supported Verilog subset.

Every module item and statement carries a :class:`Span` of 1-based inclusive
source lines.  Expressions only carry the line they start on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


@dataclass(frozen=True)
class Span:
    file: str
    start: int
    end: int

    def __contains__(self, other: "Span") -> bool:
        return self.file == other.file and self.start <= other.start and other.end <= self.end

    @property
    def lines(self) -> int:
        return self.end - self.start + 1


# --------------------------------------------------------------------------
# expressions
# --------------------------------------------------------------------------
@dataclass
class Expr:
    line: int = field(default=0, kw_only=True, compare=False)


@dataclass
class Ident(Expr):
    name: str


@dataclass
class HierIdent(Expr):
    """Dotted reference such as ``dut.q``; only meaningful in testbenches."""

    parts: list[str]

    @property
    def name(self) -> str:
        return ".".join(self.parts)


@dataclass
class Number(Expr):
    """A literal.  ``value`` holds known bits, ``xmask`` the unknown bits and
    ``zmask`` the subset of unknown bits that are z."""

    width: Optional[int]  # None for unsized literals
    value: int
    xmask: int = 0
    zmask: int = 0
    signed: bool = False
    text: str = ""


@dataclass
class RealNumber(Expr):
    value: float


@dataclass
class StringLit(Expr):
    value: str


@dataclass
class Index(Expr):
    base: Expr
    index: Expr


@dataclass
class Slice(Expr):
    base: Expr
    msb: Expr
    lsb: Expr


@dataclass
class IndexedSlice(Expr):
    """``base[start +: width]`` or ``base[start -: width]``."""

    base: Expr
    start: Expr
    width: Expr
    ascending: bool


@dataclass
class Concat(Expr):
    parts: list[Expr]


@dataclass
class Repeat(Expr):
    count: Expr
    parts: list[Expr]


@dataclass
class Unary(Expr):
    op: str
    operand: Expr


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass
class Call(Expr):
    """System function (``$signed``) or user function call."""

    name: str
    args: list[Expr]


# --------------------------------------------------------------------------
# statements
# --------------------------------------------------------------------------
@dataclass
class Stmt:
    span: Span


@dataclass
class Block(Stmt):
    stmts: list[Stmt]
    name: Optional[str] = None


@dataclass
class If(Stmt):
    cond: Expr
    then: Optional[Stmt]
    other: Optional[Stmt]


@dataclass
class CaseItem:
    exprs: Optional[list[Expr]]  # None marks the default item
    body: Optional[Stmt]
    span: Span


@dataclass
class Case(Stmt):
    kind: str  # case, casez, casex
    expr: Expr
    items: list[CaseItem]


@dataclass
class Assign(Stmt):
    lhs: Expr
    rhs: Expr
    blocking: bool
    delay: Optional[Expr] = None


@dataclass
class DelayStmt(Stmt):
    amount: Expr
    body: Optional[Stmt]


@dataclass
class Event:
    edge: Optional[str]  # posedge, negedge or None for any change
    expr: Expr


@dataclass
class EventStmt(Stmt):
    events: Optional[list[Event]]  # None for @*
    body: Optional[Stmt]


@dataclass
class WaitStmt(Stmt):
    cond: Expr
    body: Optional[Stmt]


@dataclass
class For(Stmt):
    init: Assign
    cond: Expr
    step: Assign
    body: Optional[Stmt]


@dataclass
class While(Stmt):
    cond: Expr
    body: Optional[Stmt]


@dataclass
class RepeatStmt(Stmt):
    count: Expr
    body: Optional[Stmt]


@dataclass
class Forever(Stmt):
    body: Optional[Stmt]


@dataclass
class SysTask(Stmt):
    name: str
    args: list[Expr]


@dataclass
class TaskCall(Stmt):
    name: str
    args: list[Expr]


@dataclass
class Disable(Stmt):
    target: str


@dataclass
class NullStmt(Stmt):
    pass


# --------------------------------------------------------------------------
# module items
# --------------------------------------------------------------------------
@dataclass
class Range:
    msb: Expr
    lsb: Expr


@dataclass
class Port:
    name: str
    direction: Optional[str]  # input, output, inout; None until declared
    range: Optional[Range] = None
    is_reg: bool = False
    signed: bool = False
    line: int = 0


@dataclass
class Item:
    span: Span


@dataclass
class Declarator:
    name: str
    array: Optional[Range] = None
    init: Optional[Expr] = None


@dataclass
class NetDecl(Item):
    kind: str  # wire, reg, integer, tri, supply0, supply1, time
    range: Optional[Range]
    names: list[Declarator]
    signed: bool = False


@dataclass
class PortDecl(Item):
    """Non-ANSI ``input [3:0] a, b;`` inside a module body."""

    direction: str
    range: Optional[Range]
    names: list[Declarator]
    is_reg: bool = False
    signed: bool = False


@dataclass
class ParamDecl(Item):
    local: bool
    range: Optional[Range]
    assigns: list[tuple[str, Expr]]


@dataclass
class ContinuousAssign(Item):
    assigns: list[tuple[Expr, Expr]]


@dataclass
class Always(Item):
    body: Stmt


@dataclass
class Initial(Item):
    body: Stmt


@dataclass
class Connection:
    port: Optional[str]  # None for positional connections
    expr: Optional[Expr]


@dataclass
class Instance(Item):
    module: str
    name: str
    params: list[Connection]
    connections: list[Connection]


@dataclass
class FunctionDecl(Item):
    name: str
    range: Optional[Range]
    inputs: list[PortDecl]
    decls: list[NetDecl]
    body: Stmt
    signed: bool = False


@dataclass
class TaskDecl(Item):
    name: str
    inputs: list[PortDecl]
    decls: list[NetDecl]
    body: Stmt


@dataclass
class OpaqueItem(Item):
    """A construct kept only by its span (generate blocks, specify, ...)."""

    keyword: str
    text: str


ModuleItem = Union[NetDecl, PortDecl, ParamDecl, ContinuousAssign, Always, Initial,
                   Instance, FunctionDecl, TaskDecl, OpaqueItem]


@dataclass
class ModuleDecl:
    name: str
    ports: list[Port]
    params: list[ParamDecl]
    items: list[Item]
    span: Span

    def port(self, name: str) -> Optional[Port]:
        for p in self.ports:
            if p.name == name:
                return p
        return None


@dataclass
class FileAST:
    path: str
    modules: list[ModuleDecl]
    text: str


@dataclass
class SourceAST:
    files: list[FileAST]

    @property
    def modules(self) -> list[ModuleDecl]:
        return [m for f in self.files for m in f.modules]

    def module(self, name: str) -> Optional[ModuleDecl]:
        for m in self.modules:
            if m.name == name:
                return m
        return None

    def file(self, path: str) -> Optional[FileAST]:
        for f in self.files:
            if f.path == path:
                return f
        return None


# --------------------------------------------------------------------------
# traversal helpers
# --------------------------------------------------------------------------
def child_statements(stmt: Optional[Stmt]) -> list[Stmt]:
    """Direct sub-statements of ``stmt`` in source order."""
    if stmt is None:
        return []
    if isinstance(stmt, Block):
        return list(stmt.stmts)
    if isinstance(stmt, If):
        return [s for s in (stmt.then, stmt.other) if s is not None]
    if isinstance(stmt, Case):
        return [it.body for it in stmt.items if it.body is not None]
    if isinstance(stmt, (DelayStmt, EventStmt, WaitStmt, For, While, RepeatStmt, Forever)):
        return [stmt.body] if stmt.body is not None else []
    return []


def walk_statements(stmt: Optional[Stmt]) -> Iterator[Stmt]:
    if stmt is None:
        return
    yield stmt
    for child in child_statements(stmt):
        yield from walk_statements(child)


def walk_expr(expr: Optional[Expr]) -> Iterator[Expr]:
    if expr is None:
        return
    yield expr
    if isinstance(expr, Index):
        yield from walk_expr(expr.base)
        yield from walk_expr(expr.index)
    elif isinstance(expr, Slice):
        yield from walk_expr(expr.base)
        yield from walk_expr(expr.msb)
        yield from walk_expr(expr.lsb)
    elif isinstance(expr, IndexedSlice):
        yield from walk_expr(expr.base)
        yield from walk_expr(expr.start)
        yield from walk_expr(expr.width)
    elif isinstance(expr, (Concat,)):
        for p in expr.parts:
            yield from walk_expr(p)
    elif isinstance(expr, Repeat):
        yield from walk_expr(expr.count)
        for p in expr.parts:
            yield from walk_expr(p)
    elif isinstance(expr, Unary):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, Ternary):
        yield from walk_expr(expr.cond)
        yield from walk_expr(expr.then)
        yield from walk_expr(expr.other)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from walk_expr(a)


def identifiers(expr: Optional[Expr]) -> set[str]:
    return {e.name for e in walk_expr(expr) if isinstance(e, Ident)}
