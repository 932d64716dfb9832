"""Mechanical source rewrites for decoded repair actions.

Used when no agent turns an SMT result into a patch, and to check that a
result really repairs the design.
"""

from __future__ import annotations

import re
from typing import Optional

from ..rtl import ast as A
from ..rtl.lexer import parse_number
from ..rtl.parser import parse_project
from ..rtl.source import Edit, Patch, RtlError, SourceProject, Span
from .actions import (GuardCondition, MakeCombinational, MakeRegistered, OverwriteUnder, RepairAction,
                      RewriteLiteral)


class FallbackError(ValueError):
    """The action has no simple textual counterpart."""


def literal_text(old: str, value: int, width: int) -> str:
    """Format ``value`` in the notation of the literal ``old``."""
    m = re.fullmatch(r"\s*(\d[\d_]*)?\s*'\s*([sS]?)([bBoOdDhH])\s*[0-9a-fA-FxXzZ_?]+\s*", old)
    if m is None:
        return str(value)
    size, signed, base = m.group(1), m.group(2), m.group(3)
    size_text = size.replace("_", "") if size else ""
    b = base.lower()
    if b == "b":
        digits = format(value, "b").zfill(width if size else 1)
    elif b == "o":
        digits = format(value, "o")
    elif b == "h":
        digits = format(value, "x")
    else:
        digits = str(value)
    return f"{size_text}'{signed}{base}{digits}"


def _top(project: SourceProject) -> A.AstModule:
    for m in parse_project(project):
        if m.name == project.top_module:
            return m
    raise FallbackError(f"top module {project.top_module!r} not found")


def _stmt_targets(s) -> set[str]:
    out = set()
    for n in A.walk(s):
        if isinstance(n, A.AssignStmt):
            out |= set(_lhs_names(n.lhs))
    return out


def _lhs_names(e) -> list[str]:
    if isinstance(e, A.Ident):
        return [e.name]
    if isinstance(e, (A.Index, A.RangeSel, A.IndexedSel)):
        return _lhs_names(e.base)
    if isinstance(e, A.ConcatExpr):
        return [n for p in e.parts for n in _lhs_names(p)]
    return []


def _drivers(m: A.AstModule, signal: str) -> list:
    out = []
    for it in m.items:
        if isinstance(it, A.ContinuousAssign) and signal in _lhs_names(it.lhs):
            out.append(it)
        elif isinstance(it, A.AlwaysBlock) and signal in _stmt_targets(it.body):
            out.append(it)
    return out


def _only_driver(project: SourceProject, signal: str) -> tuple[A.AstModule, object]:
    if "." in signal:
        raise FallbackError(f"{signal!r} lives in a submodule instance")
    m = _top(project)
    ds = _drivers(m, signal)
    if len(ds) != 1:
        raise FallbackError(f"{signal!r} has {len(ds)} drivers in {m.name}")
    return m, ds[0]


def _text(project: SourceProject, span: Span) -> str:
    return span.text(project)


def _head_end(b: A.AlwaysBlock) -> int:
    return max(b.event_span.end, b.span.start + len(b.keyword))


def _assign_ops(b: A.AlwaysBlock, blocking: bool) -> list[Edit]:
    op = "=" if blocking else "<="
    return [Edit(n.op_span.file, n.op_span.start, n.op_span.end, op)
            for n in A.walk(b.body) if isinstance(n, A.AssignStmt) and n.blocking != blocking]


def _clock(project: SourceProject, m: A.AstModule, clock: Optional[str]) -> str:
    if clock:
        return clock
    for p in m.ports:
        if p.direction == "input" and p.name in ("clk", "clock") and p.range is None:
            return p.name
    raise FallbackError("design has no clock to register with")


def _make_reg_decl(m: A.AstModule, signal: str) -> list[Edit]:
    decl = next((d for d in m.decls if d.name == signal), None)
    if decl is not None:
        if decl.kind in ("reg", "logic"):
            return []
        if any(d is not decl and d.kind_span == decl.kind_span for d in m.decls):
            raise FallbackError(f"{signal!r} shares its declaration with other nets")
        return [Edit(decl.kind_span.file, decl.kind_span.start, decl.kind_span.end, "reg")]
    p = m.port(signal)
    if p is None:
        raise FallbackError(f"no declaration for {signal!r}")
    if p.kind in ("reg", "logic"):
        return []
    if any(q is not p and q.kind_span == p.kind_span for q in m.ports):
        raise FallbackError(f"{signal!r} shares its declaration with other ports")
    ks = p.kind_span
    return [Edit(ks.file, ks.start, ks.end, "reg" if p.kind else " reg")]


def action_edits(project: SourceProject, a: RepairAction, clock: Optional[str] = None) -> list[Edit]:
    if isinstance(a, RewriteLiteral):
        old = _text(project, a.site)
        try:
            parse_number(old.strip())
        except RtlError:
            raise FallbackError(f"{old!r} is not a number literal") from None
        return [Edit(a.site.file, a.site.start, a.site.end, literal_text(old, a.new_value, a.width))]
    if isinstance(a, GuardCondition):
        old = _text(project, a.site)
        text = project.text(a.site.file)
        before = text[:a.site.start].rstrip()[-1:]
        after = text[a.site.end:].lstrip()[:1]
        new = a.new_condition(old)
        if not (before == "(" and after == ")"):
            new = f"({new})"
        return [Edit(a.site.file, a.site.start, a.site.end, new)]
    if isinstance(a, OverwriteUnder):
        m, d = _only_driver(project, a.signal)
        value = f"{a.width}'d{a.value}"
        if isinstance(d, A.ContinuousAssign):
            if _lhs_names(d.lhs) != [a.signal] or not isinstance(d.lhs, A.Ident):
                raise FallbackError(f"{a.signal!r} is assigned through a part select")
            rhs = _text(project, d.rhs.span)
            return [Edit(d.rhs.span.file, d.rhs.span.start, d.rhs.span.end,
                         f"({a.condition}) ? {value} : ({rhs})")]
        op = "<=" if d.is_sequential else "="
        stmt = f"if ({a.condition}) {a.signal} {op} {value};"
        body = d.body
        if isinstance(body, A.Block):
            end = body.span.end - len("end")
            return [Edit(body.span.file, end, end, f"  {stmt}\n  ")]
        old = _text(project, body.span)
        return [Edit(body.span.file, body.span.start, body.span.end, f"begin\n    {old}\n    {stmt}\n  end")]
    if isinstance(a, MakeRegistered):
        m, d = _only_driver(project, a.signal)
        clk = _clock(project, m, clock)
        if isinstance(d, A.ContinuousAssign):
            if not isinstance(d.lhs, A.Ident):
                raise FallbackError(f"{a.signal!r} is assigned through a part select")
            rhs = _text(project, d.rhs.span)
            edits = [Edit(d.span.file, d.span.start, d.span.end, f"always @(posedge {clk}) {a.signal} <= {rhs};")]
            return edits + _make_reg_decl(m, a.signal)
        if d.is_sequential:
            raise FallbackError(f"{a.signal!r} is already registered")
        if _stmt_targets(d.body) != {a.signal}:
            raise FallbackError(f"the block driving {a.signal!r} drives other signals too")
        return [Edit(d.span.file, d.span.start, _head_end(d), f"always @(posedge {clk})")] + _assign_ops(d, False)
    if isinstance(a, MakeCombinational):
        m, d = _only_driver(project, a.signal)
        if not isinstance(d, A.AlwaysBlock) or not d.is_sequential:
            raise FallbackError(f"{a.signal!r} is not registered")
        if _stmt_targets(d.body) != {a.signal}:
            raise FallbackError(f"the block driving {a.signal!r} drives other signals too")
        return [Edit(d.span.file, d.span.start, _head_end(d), "always @*")] + _assign_ops(d, True)
    raise TypeError(a)


def mechanical_patch(project: SourceProject, actions, clock: Optional[str] = None) -> Patch:
    """One patch applying every action textually. Raises FallbackError."""
    if not actions:
        raise FallbackError("no actions")
    edits: list[Edit] = []
    for a in actions:
        edits += action_edits(project, a, clock)
    return Patch(tuple(edits), "smt_template", f"mechanical rewrite of {len(actions)} repair action(s)")
