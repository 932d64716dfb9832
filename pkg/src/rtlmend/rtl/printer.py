"""Render a syntax tree back to Verilog text.

The output is fully parenthesized and uses a fixed layout; reparsing it yields
a tree equal to the input (spans aside).
"""

from __future__ import annotations

from . import ast as A


def expr(e: A.AstExpr) -> str:
    if isinstance(e, A.Number):
        return e.text
    if isinstance(e, A.Ident):
        return e.name
    if isinstance(e, A.Index):
        return f"{expr(e.base)}[{expr(e.index)}]"
    if isinstance(e, A.RangeSel):
        return f"{expr(e.base)}[{expr(e.msb)}:{expr(e.lsb)}]"
    if isinstance(e, A.IndexedSel):
        return f"{expr(e.base)}[{expr(e.start)}{'+:' if e.ascending else '-:'}{expr(e.width)}]"
    if isinstance(e, A.UnaryOp):
        return f"({e.op}({expr(e.operand)}))"
    if isinstance(e, A.BinaryOp):
        return f"({expr(e.left)} {e.op} {expr(e.right)})"
    if isinstance(e, A.TernaryOp):
        return f"({expr(e.cond)} ? {expr(e.then)} : {expr(e.other)})"
    if isinstance(e, A.ConcatExpr):
        return "{" + ", ".join(expr(p) for p in e.parts) + "}"
    if isinstance(e, A.Replicate):
        return "{" + expr(e.count) + "{" + ", ".join(expr(p) for p in e.parts) + "}}"
    raise TypeError(e)


def _lvalue(e: A.AstExpr) -> str:
    # lvalue concatenations are parsed by a separate rule without parentheses
    return expr(e)


def _range(r) -> str:
    return "" if r is None else f"[{expr(r.msb)}:{expr(r.lsb)}] "


def stmt(s: A.Stmt, ind: str) -> list[str]:
    if isinstance(s, A.AssignStmt):
        op = "=" if s.blocking else "<="
        return [f"{ind}{_lvalue(s.lhs)} {op} {expr(s.rhs)};"]
    if isinstance(s, A.Block):
        head = f"{ind}begin" + (f" : {s.label}" if s.label else "")
        out = [head]
        for x in s.stmts:
            out += stmt(x, ind + "  ")
        return out + [f"{ind}end"]
    if isinstance(s, A.IfStmt):
        out = [f"{ind}if ({expr(s.cond)})"] + stmt(s.then, ind + "  ")
        if s.other is not None:
            out += [f"{ind}else"] + stmt(s.other, ind + "  ")
        return out
    if isinstance(s, A.CaseStmt):
        out = [f"{ind}case ({expr(s.subject)})"]
        for it in s.items:
            label = "default" if it.labels is None else ", ".join(expr(l) for l in it.labels)
            out += [f"{ind}  {label}:"] + stmt(it.body, ind + "    ")
        return out + [f"{ind}endcase"]
    if isinstance(s, A.NullStmt):
        return [f"{ind};"]
    raise TypeError(s)


def _conns(cs) -> str:
    parts = []
    for c in cs:
        inner = "" if c.expr is None else expr(c.expr)
        parts.append(inner if c.port is None else f".{c.port}({inner})")
    return ", ".join(parts)


def item(it, ind: str) -> list[str]:
    if isinstance(it, A.ContinuousAssign):
        return [f"{ind}assign {_lvalue(it.lhs)} = {expr(it.rhs)};"]
    if isinstance(it, A.ParamDecl):
        kw = "localparam" if it.local else "parameter"
        return [f"{ind}{kw} {it.name} = {expr(it.value)};"]
    if isinstance(it, A.GenvarDecl):
        return [f"{ind}genvar {', '.join(it.names)};"]
    if isinstance(it, A.AlwaysBlock):
        if it.keyword == "always_comb":
            head = "always_comb"
        elif it.clock is not None:
            edges = " or ".join(f"posedge {c}" for c in (it.clock,) + it.extra_edges)
            head = f"{it.keyword} @({edges})"
        elif it.sensitivity is not None:
            head = f"{it.keyword} @({' or '.join(it.sensitivity)})"
        else:
            head = f"{it.keyword} @*"
        return [f"{ind}{head}"] + stmt(it.body, ind + "  ")
    if isinstance(it, A.InitialBlock):
        return [f"{ind}initial"] + stmt(it.body, ind + "  ")
    if isinstance(it, A.Instance):
        params = f" #({_conns(it.params)})" if it.params else ""
        return [f"{ind}{it.module}{params} {it.name} ({_conns(it.conns)});"]
    if isinstance(it, A.GenerateFor):
        out = [f"{ind}for ({it.var} = {expr(it.start)}; {expr(it.cond)}; {it.var} = {expr(it.step)}) begin"
               + (f" : {it.label}" if it.label else "")]
        for x in it.items:
            out += item(x, ind + "  ")
        return out + [f"{ind}end"]
    raise TypeError(it)


def _decl(d: A.NetDecl) -> str:
    init = "" if d.init is None else f" = {expr(d.init)}"
    rng = "" if d.kind == "integer" else _range(d.range)
    return f"{d.kind} {rng}{d.name}{init};"


def _port(p: A.PortDecl) -> str:
    kind = f"{p.kind} " if p.kind else ""
    return f"{p.direction} {kind}{_range(p.range)}{p.name}"


def module(m: A.AstModule) -> str:
    params = ""
    if m.params:
        params = " #(" + ", ".join(f"parameter {p.name} = {expr(p.value)}" for p in m.params) + ")"
    if m.ansi:
        head = f"module {m.name}{params}(" + ", ".join(_port(p) for p in m.ports) + ");"
        body_ports = []
    else:
        head = f"module {m.name}{params}(" + ", ".join(m.port_order) + ");"
        body_ports = [f"  {_port(p)};" for p in m.ports]
    lines = [head] + body_ports
    lines += ["  " + _decl(d) for d in m.decls]
    for it in m.items:
        lines += item(it, "  ")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def print_modules(mods: list[A.AstModule]) -> str:
    return "\n".join(module(m) for m in mods)
