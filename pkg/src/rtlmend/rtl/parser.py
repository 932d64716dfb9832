"""Recursive-descent parser for the synthesizable Verilog subset."""

from __future__ import annotations

import re
from typing import Optional

from . import ast as A
from .lexer import UNSUPPORTED_KEYWORDS, Token, parse_number, preprocess, tokenize
from .source import ParseError, SourceProject, Span, UnsupportedFeature

BINARY_PREC = {
    "||": 2,
    "&&": 3,
    "|": 4,
    "^": 5, "~^": 5, "^~": 5,
    "&": 6,
    "==": 7, "!=": 7, "===": 7, "!==": 7,
    "<": 8, "<=": 8, ">": 8, ">=": 8,
    "<<": 9, ">>": 9, "<<<": 9, ">>>": 9,
    "+": 10, "-": 10,
    "*": 11, "/": 11, "%": 11,
    "**": 12,
}

_ITEM_KEYWORDS_UNSUPPORTED = ("function", "task", "inout", "tri", "supply0", "supply1", "always_latch")


class Parser:
    def __init__(self, tokens: list[Token], file: str):
        self.toks = tokens
        self.file = file
        self.pos = 0
        eof_at = tokens[-1].where if tokens else Span(file, 0, 0, 1, 1)
        self.eof = Token("eof", "", Span(file, eof_at.end, eof_at.end, eof_at.line, eof_at.col))

    # -- token helpers ------------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else self.eof

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("op", "kw") and t.text == text

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            self.error(f"expected {text!r}, found {t.text or 'end of file'!r}", t)
        return self.next()

    def expect_id(self) -> Token:
        t = self.peek()
        if t.kind == "kw" and t.text in UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(UNSUPPORTED_KEYWORDS[t.text], t.where)
        if t.kind != "id":
            self.error(f"expected identifier, found {t.text or 'end of file'!r}", t)
        return self.next()

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.where)

    def span_from(self, first: Token) -> Span:
        last = self.toks[self.pos - 1] if self.pos > 0 else first
        a, b = first.where, last.where
        return Span(a.file, a.start, max(b.end, a.start), a.line, a.col)

    def check_unsupported(self):
        t = self.peek()
        if t.kind == "kw" and t.text in UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(UNSUPPORTED_KEYWORDS[t.text], t.where)

    # -- top level ----------------------------------------------------------

    def parse_file(self) -> list[A.AstModule]:
        mods = []
        while self.peek().kind != "eof":
            if self.at("module"):
                mods.append(self.parse_module())
            else:
                self.check_unsupported()
                self.error(f"expected 'module', found {self.peek().text!r}")
        return mods

    def parse_module(self) -> A.AstModule:
        first = self.expect("module")
        name_tok = self.expect_id()
        params: list[A.ParamDecl] = []
        if self.accept("#"):
            self.expect("(")
            if not self.at(")"):
                while True:
                    kw = self.peek()
                    if self.at("parameter") or self.at("localparam"):
                        self.next()
                    self.skip_param_type()
                    params.append(self.parse_param_assign(kw, local=False))
                    if not self.accept(","):
                        break
            self.expect(")")
        ports: list[A.PortDecl] = []
        order: list[str] = []
        ansi = True
        if self.accept("("):
            if self.at(")"):
                pass
            elif self.at("input") or self.at("output") or self.at("inout"):
                ports = self.parse_ansi_ports()
                order = [p.name for p in ports]
            else:
                ansi = False
                while True:
                    order.append(self.expect_id().text)
                    if not self.accept(","):
                        break
            self.expect(")")
        self.expect(";")
        decls: list[A.NetDecl] = []
        items: list[A.Item] = []
        body_ports: list[A.PortDecl] = []
        while not self.at("endmodule"):
            if self.peek().kind == "eof":
                self.error("missing 'endmodule'")
            self.parse_item(items, decls, body_ports, allow_ports=not ansi)
        self.expect("endmodule")
        if not ansi:
            declared = {p.name for p in body_ports}
            for n in order:
                if n not in declared:
                    raise ParseError(f"port {n!r} has no direction declaration", name_tok.where)
            ports = body_ports
        return A.AstModule(name_tok.text, tuple(ports), tuple(order), ansi, tuple(params), tuple(decls),
                           tuple(items), self.span_from(first), name_tok.where)

    def skip_param_type(self):
        if self.at("integer"):
            self.next()
        if self.at("["):
            self.parse_range()

    def parse_param_assign(self, first: Token, local: bool) -> A.ParamDecl:
        name = self.expect_id()
        self.expect("=")
        value = self.parse_expr()
        return A.ParamDecl(name.text, value, local, self.span_from(first))

    def parse_range(self) -> A.RangeDecl:
        first = self.expect("[")
        msb = self.parse_expr()
        self.expect(":")
        lsb = self.parse_expr()
        self.expect("]")
        return A.RangeDecl(msb, lsb, self.span_from(first))

    def _kind_and_range(self):
        kind = None
        kind_tok = None
        if self.at("wire") or self.at("reg") or self.at("logic"):
            kind_tok = self.next()
            kind = kind_tok.text
        self.check_unsupported()
        if self.at("unsigned"):
            self.next()
        rng = self.parse_range() if self.at("[") else None
        return kind, kind_tok, rng

    def parse_ansi_ports(self) -> list[A.PortDecl]:
        ports = []
        direction = None
        kind = None
        rng = None
        kind_span = None
        while True:
            first = self.peek()
            self.check_unsupported()
            if self.at("input") or self.at("output"):
                dtok = self.next()
                direction = dtok.text
                kind, kind_tok, rng = self._kind_and_range()
                kind_span = kind_tok.where if kind_tok else Span(dtok.where.file, dtok.where.end, dtok.where.end,
                                                                 dtok.where.line, dtok.where.col + len(dtok.text))
            elif direction is None:
                self.error("expected port direction")
            name = self.expect_id()
            if self.at("["):
                raise UnsupportedFeature("unpacked port array", self.peek().where)
            ports.append(A.PortDecl(name.text, direction, kind, rng, self.span_from(first), kind_span, name.where))
            if not self.accept(","):
                break
        return ports

    # -- module items -------------------------------------------------------

    def parse_item(self, items: list, decls: list, ports: list, allow_ports: bool, in_generate: bool = False):
        t = self.peek()
        if t.kind == "kw" and t.text in _ITEM_KEYWORDS_UNSUPPORTED:
            raise UnsupportedFeature(UNSUPPORTED_KEYWORDS[t.text], t.where)
        if self.at("input") or self.at("output"):
            if not allow_ports:
                self.error("port declaration not allowed here")
            dtok = self.next()
            kind, kind_tok, rng = self._kind_and_range()
            kind_span = kind_tok.where if kind_tok else Span(dtok.where.file, dtok.where.end, dtok.where.end,
                                                             dtok.where.line, dtok.where.col + len(dtok.text))
            while True:
                name = self.expect_id()
                ports.append(A.PortDecl(name.text, dtok.text, kind, rng, self.span_from(dtok), kind_span, name.where))
                if not self.accept(","):
                    break
            self.expect(";")
        elif self.at("wire") or self.at("reg") or self.at("logic") or self.at("integer"):
            if in_generate:
                raise UnsupportedFeature("declaration inside generate loop", t.where)
            self.parse_net_decl(decls)
        elif self.at("parameter") or self.at("localparam"):
            kw = self.next()
            self.skip_param_type()
            while True:
                items.append(self.parse_param_assign(kw, local=kw.text == "localparam"))
                if not self.accept(","):
                    break
            self.expect(";")
        elif self.at("genvar"):
            first = self.next()
            names = [self.expect_id().text]
            while self.accept(","):
                names.append(self.expect_id().text)
            self.expect(";")
            items.append(A.GenvarDecl(tuple(names), self.span_from(first)))
        elif self.at("assign"):
            first = self.next()
            pending = []
            while True:
                lhs = self.parse_lvalue()
                self.expect("=")
                rhs = self.parse_expr()
                pending.append((first, lhs, rhs))
                if not self.accept(","):
                    break
                first = self.peek()
            self.expect(";")
            # every assignment of a list becomes one item; spans run to the semicolon
            for start, lhs, rhs in pending:
                items.append(A.ContinuousAssign(lhs, rhs, self.span_from(start)))
        elif self.at("always") or self.at("always_ff") or self.at("always_comb"):
            items.append(self.parse_always())
        elif self.at("initial"):
            first = self.next()
            body = self.parse_stmt()
            items.append(A.InitialBlock(body, self.span_from(first)))
        elif self.at("generate"):
            self.next()
            while not self.at("endgenerate"):
                if self.peek().kind == "eof":
                    self.error("missing 'endgenerate'")
                self.parse_item(items, decls, ports, allow_ports=False, in_generate=True)
            self.expect("endgenerate")
        elif self.at("for"):
            items.append(self.parse_generate_for())
        elif self.at("begin"):
            # bare generate block
            self.next()
            if self.accept(":"):
                self.expect_id()
            while not self.at("end"):
                self.parse_item(items, decls, ports, allow_ports=False, in_generate=True)
            self.expect("end")
        elif t.kind == "id":
            self.parse_instances(items)
        elif t.kind == "sys":
            raise UnsupportedFeature("system task", t.where)
        else:
            self.error(f"unexpected {t.text or 'end of file'!r} in module body")

    def parse_net_decl(self, decls: list):
        first = self.next()
        kind = first.text
        self.check_unsupported()
        if self.at("unsigned"):
            self.next()
        rng = None
        if kind != "integer" and self.at("["):
            rng = self.parse_range()
        while True:
            name = self.expect_id()
            if self.at("["):
                raise UnsupportedFeature("memory array", self.peek().where)
            init = None
            if self.accept("="):
                init = self.parse_expr()
            decls.append(A.NetDecl(name.text, kind, rng, init, self.span_from(first), first.where, name.where))
            if not self.accept(","):
                break
        self.expect(";")

    def parse_always(self) -> A.AlwaysBlock:
        first = self.next()
        keyword = first.text
        clock = None
        sens = None
        extra: list[str] = []
        if keyword == "always_comb":
            ev_span = Span(first.where.file, first.where.end, first.where.end, first.where.line, first.where.col)
        else:
            if self.at("#"):
                raise UnsupportedFeature("delay control", self.peek().where)
            at = self.peek()
            if not self.accept("@"):
                raise UnsupportedFeature("always block without event control", first.where)
            if self.accept("*"):
                pass
            elif self.at("(") and self.peek(1).kind == "op" and self.peek(1).text == "*":
                self.next()
                self.next()
                self.expect(")")
            else:
                self.expect("(")
                if self.at("*"):
                    self.next()
                else:
                    edges: list[str] = []
                    levels: list[str] = []
                    while True:
                        if self.at("negedge"):
                            raise UnsupportedFeature("negedge clock", self.peek().where)
                        if self.accept("posedge"):
                            edges.append(self.expect_id().text)
                        else:
                            levels.append(self.expect_id().text)
                        if not (self.accept("or") or self.accept(",")):
                            break
                    if edges and levels:
                        raise UnsupportedFeature("mixed edge and level sensitivity", at.where)
                    if edges:
                        clock = edges[0]
                        extra = edges[1:]
                    else:
                        sens = tuple(levels)
                self.expect(")")
            ev_span = self.span_from(at)
        if keyword == "always_ff" and clock is None:
            self.error("always_ff requires a posedge event", first)
        body = self.parse_stmt()
        return A.AlwaysBlock(keyword, clock, sens, body, self.span_from(first), ev_span, tuple(extra))

    def parse_generate_for(self) -> A.GenerateFor:
        first = self.expect("for")
        self.expect("(")
        if self.at("genvar"):
            self.next()
        var = self.expect_id().text
        self.expect("=")
        start = self.parse_expr()
        self.expect(";")
        cond = self.parse_expr()
        self.expect(";")
        v2 = self.expect_id()
        if v2.text != var:
            self.error("generate loop must update its own genvar", v2)
        self.expect("=")
        step = self.parse_expr()
        self.expect(")")
        items: list = []
        label = None
        if self.accept("begin"):
            if self.accept(":"):
                label = self.expect_id().text
            while not self.at("end"):
                if self.peek().kind == "eof":
                    self.error("missing 'end'")
                self.parse_item(items, [], [], allow_ports=False, in_generate=True)
            self.expect("end")
        else:
            self.parse_item(items, [], [], allow_ports=False, in_generate=True)
        return A.GenerateFor(var, start, cond, step, label, tuple(items), self.span_from(first))

    def parse_instances(self, items: list):
        first = self.peek()
        module = self.expect_id().text
        params: tuple = ()
        if self.accept("#"):
            self.expect("(")
            params = tuple(self.parse_connections())
            self.expect(")")
        while True:
            name = self.expect_id()
            if self.at("["):
                raise UnsupportedFeature("instance array", self.peek().where)
            self.expect("(")
            conns = tuple(self.parse_connections())
            self.expect(")")
            items.append(A.Instance(module, name.text, params, conns, self.span_from(first)))
            if not self.accept(","):
                break
            first = self.peek()
        self.expect(";")

    def parse_connections(self) -> list[A.Connection]:
        conns = []
        if self.at(")"):
            return conns
        while True:
            first = self.peek()
            if self.accept("."):
                if self.at("*"):
                    raise UnsupportedFeature("wildcard port connection", first.where)
                port = self.expect_id().text
                self.expect("(")
                expr = None if self.at(")") else self.parse_expr()
                self.expect(")")
                conns.append(A.Connection(port, expr, self.span_from(first)))
            else:
                conns.append(A.Connection(None, self.parse_expr(), self.span_from(first)))
            if not self.accept(","):
                break
        return conns

    # -- statements ---------------------------------------------------------

    def parse_stmt(self) -> A.Stmt:
        t = self.peek()
        if t.kind == "kw" and t.text in UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(UNSUPPORTED_KEYWORDS[t.text], t.where)
        if self.at("#"):
            raise UnsupportedFeature("delay control", t.where)
        if self.at("@"):
            raise UnsupportedFeature("event control", t.where)
        if t.kind == "sys":
            raise UnsupportedFeature("system task", t.where)
        if self.at("for"):
            raise UnsupportedFeature("procedural for loop", t.where)
        if self.accept(";"):
            return A.NullStmt(self.span_from(t))
        if self.accept("begin"):
            label = None
            if self.accept(":"):
                label = self.expect_id().text
            stmts = []
            while not self.at("end"):
                if self.peek().kind == "eof":
                    self.error("missing 'end'")
                stmts.append(self.parse_stmt())
            self.expect("end")
            return A.Block(tuple(stmts), label, self.span_from(t))
        if self.accept("if"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = self.parse_stmt()
            other = None
            if self.accept("else"):
                other = self.parse_stmt()
            return A.IfStmt(cond, then, other, self.span_from(t))
        if self.accept("case"):
            self.expect("(")
            subject = self.parse_expr()
            self.expect(")")
            items = []
            seen_default = False
            while not self.at("endcase"):
                first = self.peek()
                if first.kind == "eof":
                    self.error("missing 'endcase'")
                if self.accept("default"):
                    if seen_default:
                        self.error("duplicate default in case", first)
                    seen_default = True
                    self.accept(":")
                    labels = None
                else:
                    labels = [self.parse_expr()]
                    while self.accept(","):
                        labels.append(self.parse_expr())
                    labels = tuple(labels)
                    self.expect(":")
                body = self.parse_stmt()
                items.append(A.CaseItem(labels, body, self.span_from(first)))
            self.expect("endcase")
            return A.CaseStmt(subject, tuple(items), self.span_from(t))
        if t.kind == "kw":
            self.error(f"unexpected keyword {t.text!r} in statement")
        lhs = self.parse_lvalue()
        op = self.peek()
        if self.accept("<="):
            blocking = False
        elif self.accept("="):
            blocking = True
        else:
            self.error(f"expected '=' or '<=', found {op.text or 'end of file'!r}")
        if self.at("#") or self.at("@"):
            raise UnsupportedFeature("intra-assignment delay", self.peek().where)
        rhs = self.parse_expr()
        self.expect(";")
        return A.AssignStmt(lhs, rhs, blocking, self.span_from(t), op.where)

    def parse_lvalue(self) -> A.AstExpr:
        t = self.peek()
        if self.accept("{"):
            parts = [self.parse_lvalue()]
            while self.accept(","):
                parts.append(self.parse_lvalue())
            self.expect("}")
            return A.ConcatExpr(tuple(parts), self.span_from(t))
        name = self.expect_id()
        return self.parse_selects(A.Ident(name.text, name.where), name)

    def parse_selects(self, base: A.AstExpr, first: Token) -> A.AstExpr:
        if not self.at("["):
            return base
        self.next()
        a = self.parse_expr()
        if self.accept(":"):
            b = self.parse_expr()
            self.expect("]")
            node = A.RangeSel(base, a, b, self.span_from(first))
        elif self.at("+:") or self.at("-:"):
            asc = self.next().text == "+:"
            w = self.parse_expr()
            self.expect("]")
            node = A.IndexedSel(base, a, w, asc, self.span_from(first))
        else:
            self.expect("]")
            node = A.Index(base, a, self.span_from(first))
        if self.at("["):
            raise UnsupportedFeature("multi-dimensional select", self.peek().where)
        return node

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> A.AstExpr:
        first = self.peek()
        cond = self.parse_binary(2)
        if self.accept("?"):
            then = self.parse_expr()
            self.expect(":")
            other = self.parse_expr()
            return A.TernaryOp(cond, then, other, self.span_from(first))
        return cond

    def parse_binary(self, min_prec: int) -> A.AstExpr:
        first = self.peek()
        left = self.parse_unary()
        while True:
            t = self.peek()
            if t.kind != "op" or t.text not in BINARY_PREC:
                return left
            prec = BINARY_PREC[t.text]
            if prec < min_prec:
                return left
            self.next()
            right = self.parse_binary(prec + 1)
            op = {"===": "==", "!==": "!=", "^~": "~^"}.get(t.text, t.text)
            left = A.BinaryOp(op, left, right, self.span_from(first), t.where)

    def parse_unary(self) -> A.AstExpr:
        t = self.peek()
        if t.kind == "op" and t.text in A.UNARY_OPS:
            self.next()
            operand = self.parse_unary()
            return A.UnaryOp(t.text, operand, self.span_from(t))
        return self.parse_primary()

    def parse_primary(self) -> A.AstExpr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            width, value = parse_number(t.text, t.where)
            return A.Number(t.text, width, value, t.where, t.span)
        if t.kind == "id":
            self.next()
            return self.parse_selects(A.Ident(t.text, t.where), t)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if self.accept("{"):
            head = self.parse_expr()
            if self.at("{"):
                self.next()
                parts = [self.parse_expr()]
                while self.accept(","):
                    parts.append(self.parse_expr())
                self.expect("}")
                self.expect("}")
                return A.Replicate(head, tuple(parts), self.span_from(t))
            parts = [head]
            while self.accept(","):
                parts.append(self.parse_expr())
            self.expect("}")
            return A.ConcatExpr(tuple(parts), self.span_from(t))
        if t.kind == "sys":
            raise UnsupportedFeature(f"system function {t.text}", t.where)
        if t.kind == "str":
            raise UnsupportedFeature("string literal", t.where)
        self.check_unsupported()
        self.error(f"unexpected {t.text or 'end of file'!r} in expression")


_INCLUDE_RE = re.compile(r'`include\s+"([^"]+)"')


def parse_text(text: str, file: str = "<input>") -> list[A.AstModule]:
    """Parse a single self-contained source text (no includes or macros)."""
    toks = [t for t in tokenize(text, file) if t.kind != "eof"]
    if any(t.kind == "dir" for t in toks):
        return parse_project(SourceProject(((file, text),), ""))
    return Parser(toks, file).parse_file()


def parse_project(src: SourceProject) -> list[A.AstModule]:
    """Parse every file of ``src`` into modules, in file order."""
    included = set()
    for path, text in src.files:
        for m in _INCLUDE_RE.finditer(text):
            inc = m.group(1)
            included.update(p for p in src.paths if p == inc or p.endswith("/" + inc))
    macros: dict = {}
    modules: list[A.AstModule] = []
    for path in src.paths:
        if path in included:
            continue
        toks = preprocess(src, path, macros)
        modules.extend(Parser(toks, path).parse_file())
    if not modules:
        first = src.paths[0] if src.paths else "<empty>"
        raise ParseError("no module found", Span(first, 0, 0, 1, 1))
    seen: dict[str, A.AstModule] = {}
    for m in modules:
        if m.name in seen:
            raise ParseError(f"module {m.name!r} declared more than once", m.name_span)
        seen[m.name] = m
    return modules
