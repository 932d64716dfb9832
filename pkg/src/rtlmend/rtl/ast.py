"""Syntax tree for the supported Verilog subset.

Nodes are frozen dataclasses. Spans are excluded from equality so that two
trees parsed from differently formatted text compare equal when they have the
same structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
from typing import Iterator, Optional, Union

from .source import Span

_NOSPAN = Span("<none>", 0, 0, 0, 0)


def _span():
    return field(default=_NOSPAN, compare=False, repr=False)


def _width():
    # filled in by width inference
    return field(default=None, compare=False, repr=False)


# -- expressions --------------------------------------------------------------

@dataclass(frozen=True)
class Number:
    text: str
    width: Optional[int]  # None: unsized
    value: int
    span: Span = _span()
    # where the digits physically live (differs from span inside macro expansions)
    origin: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class Ident:
    name: str
    span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class Index:
    base: "AstExpr"
    index: "AstExpr"
    span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class RangeSel:
    base: "AstExpr"
    msb: "AstExpr"
    lsb: "AstExpr"
    span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class IndexedSel:
    base: "AstExpr"
    start: "AstExpr"
    width: "AstExpr"
    ascending: bool  # +: when True, -: otherwise
    span: Span = _span()
    inferred_width: Optional[int] = _width()


REDUCTION_OPS = ("&", "|", "^", "~&", "~|", "~^")
UNARY_OPS = ("+", "-", "~", "!") + REDUCTION_OPS


@dataclass(frozen=True)
class UnaryOp:
    op: str
    operand: "AstExpr"
    span: Span = _span()
    inferred_width: Optional[int] = _width()

    @property
    def is_reduction(self) -> bool:
        return self.op in REDUCTION_OPS


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "AstExpr"
    right: "AstExpr"
    span: Span = _span()
    op_span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class TernaryOp:
    cond: "AstExpr"
    then: "AstExpr"
    other: "AstExpr"
    span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class ConcatExpr:
    parts: tuple["AstExpr", ...]
    span: Span = _span()
    inferred_width: Optional[int] = _width()


@dataclass(frozen=True)
class Replicate:
    count: "AstExpr"
    parts: tuple["AstExpr", ...]
    span: Span = _span()
    inferred_width: Optional[int] = _width()


AstExpr = Union[Number, Ident, Index, RangeSel, IndexedSel, UnaryOp, BinaryOp, TernaryOp, ConcatExpr, Replicate]


# -- statements ---------------------------------------------------------------

@dataclass(frozen=True)
class AssignStmt:
    lhs: AstExpr
    rhs: AstExpr
    blocking: bool
    span: Span = _span()
    op_span: Span = _span()


@dataclass(frozen=True)
class Block:
    stmts: tuple["Stmt", ...]
    label: Optional[str] = None
    span: Span = _span()


@dataclass(frozen=True)
class IfStmt:
    cond: AstExpr
    then: "Stmt"
    other: Optional["Stmt"]
    span: Span = _span()


@dataclass(frozen=True)
class CaseItem:
    labels: Optional[tuple[AstExpr, ...]]  # None: default
    body: "Stmt"
    span: Span = _span()


@dataclass(frozen=True)
class CaseStmt:
    subject: AstExpr
    items: tuple[CaseItem, ...]
    span: Span = _span()


@dataclass(frozen=True)
class NullStmt:
    span: Span = _span()


Stmt = Union[AssignStmt, Block, IfStmt, CaseStmt, NullStmt]


# -- module items -------------------------------------------------------------

@dataclass(frozen=True)
class RangeDecl:
    msb: AstExpr
    lsb: AstExpr
    span: Span = _span()


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # 'input' | 'output'
    kind: Optional[str]  # 'wire' | 'reg' | 'logic' | None
    range: Optional[RangeDecl]
    span: Span = _span()
    # span of the kind keyword when present, else an empty span just after the direction keyword
    kind_span: Span = _span()
    name_span: Span = _span()


@dataclass(frozen=True)
class NetDecl:
    name: str
    kind: str  # 'wire' | 'reg' | 'logic' | 'integer'
    range: Optional[RangeDecl]
    init: Optional[AstExpr]
    span: Span = _span()
    kind_span: Span = _span()
    name_span: Span = _span()


@dataclass(frozen=True)
class ParamDecl:
    name: str
    value: AstExpr
    local: bool
    span: Span = _span()


@dataclass(frozen=True)
class GenvarDecl:
    names: tuple[str, ...]
    span: Span = _span()


@dataclass(frozen=True)
class ContinuousAssign:
    lhs: AstExpr
    rhs: AstExpr
    span: Span = _span()


@dataclass(frozen=True)
class AlwaysBlock:
    keyword: str  # 'always' | 'always_ff' | 'always_comb'
    clock: Optional[str]  # posedge clock name; None for combinational blocks
    sensitivity: Optional[tuple[str, ...]]  # explicit level-sensitive list; None for @* / always_comb
    body: Stmt
    span: Span = _span()
    event_span: Span = _span()  # the '@(...)' text; empty for always_comb
    extra_edges: tuple[str, ...] = ()  # further posedge signals (asynchronous resets)

    @property
    def is_sequential(self) -> bool:
        return self.clock is not None


@dataclass(frozen=True)
class InitialBlock:
    body: Stmt
    span: Span = _span()


@dataclass(frozen=True)
class Connection:
    port: Optional[str]  # None for positional
    expr: Optional[AstExpr]
    span: Span = _span()


@dataclass(frozen=True)
class Instance:
    module: str
    name: str
    params: tuple[Connection, ...]
    conns: tuple[Connection, ...]
    span: Span = _span()


@dataclass(frozen=True)
class GenerateFor:
    var: str
    start: AstExpr
    cond: AstExpr
    step: AstExpr
    label: Optional[str]
    items: tuple["Item", ...]
    span: Span = _span()


Item = Union[NetDecl, ParamDecl, GenvarDecl, ContinuousAssign, AlwaysBlock, InitialBlock, Instance, GenerateFor]


@dataclass(frozen=True)
class AstModule:
    name: str
    ports: tuple[PortDecl, ...]
    port_order: tuple[str, ...]
    ansi: bool
    params: tuple[ParamDecl, ...]  # header (#(...)) parameters
    decls: tuple[NetDecl, ...]
    items: tuple[Item, ...]
    span: Span = _span()
    name_span: Span = _span()

    @property
    def file(self) -> str:
        return self.span.file

    def port(self, name: str) -> Optional[PortDecl]:
        for p in self.ports:
            if p.name == name:
                return p
        return None


def walk(node) -> Iterator:
    """Pre-order traversal over every dataclass node reachable from ``node``."""
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, (tuple, list)):
            stack.extend(reversed(n))
            continue
        if not is_dataclass(n) or isinstance(n, Span):
            continue
        yield n
        children = []
        for f in fields(n):
            if f.name in ("span", "origin", "op_span", "kind_span", "name_span", "event_span"):
                continue
            v = getattr(n, f.name)
            if is_dataclass(v) or isinstance(v, (tuple, list)):
                children.append(v)
        stack.extend(reversed(children))


def idents(expr) -> list[str]:
    return [n.name for n in walk(expr) if isinstance(n, Ident)]
