"""Expression widths, constant folding and lowering of syntax to word-level expressions.

Width rules follow the Verilog self-determined/context-determined scheme for
unsigned operands. One deliberate difference: an unsized literal (or
parameter) takes the width of its context instead of 32 bits, so ``count == 5``
on a 3-bit ``count`` compares 3-bit values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from . import ast as A
from . import expr as E
from .source import HierarchyError, Span, UnsupportedFeature, WidthError

CONTEXT_OPS = ("+", "-", "*", "/", "%", "&", "|", "^", "~^")
COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&&", "||")
SHIFT_OPS = ("<<", ">>", "<<<", ">>>")

MAX_WIDTH = 1 << 16


class NotConstant(Exception):
    def __init__(self, node):
        super().__init__("not a constant expression")
        self.node = node


@dataclass(frozen=True)
class SignalInfo:
    name: str  # flattened name
    width: int
    lsb: int = 0
    kind: str = "wire"  # 'input' | 'output' | 'wire' | 'reg'


@dataclass(frozen=True)
class ConstInfo:
    value: int
    site: Optional[Span] = None  # literal site of the defining value, if a plain number


@dataclass
class Scope:
    signals: dict[str, SignalInfo] = field(default_factory=dict)
    consts: dict[str, ConstInfo] = field(default_factory=dict)

    def const_values(self) -> dict[str, int]:
        return {k: v.value for k, v in self.consts.items()}

    def signal(self, ident: A.Ident) -> SignalInfo:
        info = self.signals.get(ident.name)
        if info is None:
            raise HierarchyError(f"undeclared identifier {ident.name!r}", ident.span)
        return info

    def child(self, **consts: ConstInfo) -> "Scope":
        c = dict(self.consts)
        c.update(consts)
        return Scope(self.signals, c)


# -- constants ---------------------------------------------------------------

def const_eval(e: A.AstExpr, consts: dict[str, int]) -> int:
    if isinstance(e, A.Number):
        return e.value
    if isinstance(e, A.Ident):
        if e.name in consts:
            return consts[e.name]
        raise NotConstant(e)
    if isinstance(e, A.UnaryOp):
        v = const_eval(e.operand, consts)
        m32 = 0xFFFFFFFF
        return {
            "+": lambda: v,
            "-": lambda: -v,
            "~": lambda: ~v & m32,
            "!": lambda: int(v == 0),
            "&": lambda: int(v & m32 == m32),
            "|": lambda: int(v != 0),
            "^": lambda: bin(v & m32).count("1") & 1,
            "~&": lambda: int(v & m32 != m32),
            "~|": lambda: int(v == 0),
            "~^": lambda: 1 - (bin(v & m32).count("1") & 1),
        }[e.op]()
    if isinstance(e, A.BinaryOp):
        a = const_eval(e.left, consts)
        b = const_eval(e.right, consts)
        op = e.op
        if op in ("/", "%") and b == 0:
            raise WidthError("division by zero in constant expression", e.span)
        table = {
            "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "/": lambda: int(a / b), "%": lambda: a - b * int(a / b), "**": lambda: a ** b,
            "<<": lambda: a << b, ">>": lambda: a >> b, "<<<": lambda: a << b, ">>>": lambda: a >> b,
            "&": lambda: a & b, "|": lambda: a | b, "^": lambda: a ^ b, "~^": lambda: ~(a ^ b),
            "==": lambda: int(a == b), "!=": lambda: int(a != b), "<": lambda: int(a < b),
            "<=": lambda: int(a <= b), ">": lambda: int(a > b), ">=": lambda: int(a >= b),
            "&&": lambda: int(bool(a) and bool(b)), "||": lambda: int(bool(a) or bool(b)),
        }
        return table[op]()
    if isinstance(e, A.TernaryOp):
        return const_eval(e.then if const_eval(e.cond, consts) else e.other, consts)
    raise NotConstant(e)


def const_int(e: A.AstExpr, scope: Scope) -> int:
    try:
        return const_eval(e, scope.const_values())
    except NotConstant as exc:
        raise UnsupportedFeature("non-constant expression where a constant is required",
                                 getattr(exc.node, "span", None) or e.span) from None


def range_width(r: Optional[A.RangeDecl], scope: Scope) -> tuple[int, int]:
    """Return ``(width, lsb)`` for a declared range."""
    if r is None:
        return 1, 0
    msb, lsb = const_int(r.msb, scope), const_int(r.lsb, scope)
    if msb < lsb:
        raise UnsupportedFeature("ascending bit range", r.span)
    w = msb - lsb + 1
    if w > MAX_WIDTH:
        raise UnsupportedFeature(f"signal wider than {MAX_WIDTH} bits", r.span)
    return w, lsb


# -- self-determined widths --------------------------------------------------

def _bits(v: int) -> int:
    return max(1, v.bit_length())


def is_unsized(e: A.AstExpr, scope: Scope) -> bool:
    if isinstance(e, A.Number):
        return e.width is None
    if isinstance(e, A.Ident):
        return e.name in scope.consts
    return False


def self_width(e: A.AstExpr, scope: Scope) -> int:
    if isinstance(e, A.Number):
        return e.width if e.width is not None else _bits(e.value)
    if isinstance(e, A.Ident):
        if e.name in scope.consts:
            return _bits(scope.consts[e.name].value)
        return scope.signal(e).width
    if isinstance(e, A.Index):
        return 1
    if isinstance(e, A.RangeSel):
        return const_int(e.msb, scope) - const_int(e.lsb, scope) + 1
    if isinstance(e, A.IndexedSel):
        return const_int(e.width, scope)
    if isinstance(e, A.UnaryOp):
        if e.op in ("+", "-", "~"):
            return self_width(e.operand, scope)
        return 1
    if isinstance(e, A.BinaryOp):
        if e.op in COMPARE_OPS or e.op in LOGIC_OPS:
            return 1
        if e.op in SHIFT_OPS or e.op == "**":
            return self_width(e.left, scope)
        return max(self_width(e.left, scope), self_width(e.right, scope))
    if isinstance(e, A.TernaryOp):
        return max(self_width(e.then, scope), self_width(e.other, scope))
    if isinstance(e, A.ConcatExpr):
        return sum(self_width(p, scope) for p in e.parts)
    if isinstance(e, A.Replicate):
        n = const_int(e.count, scope)
        if n <= 0:
            raise WidthError("replication count must be positive", e.span)
        return n * sum(self_width(p, scope) for p in e.parts)
    raise TypeError(e)


# -- lowering ----------------------------------------------------------------

def _with_site(node: E.Expr, span: Span) -> E.Expr:
    return dataclasses.replace(node, site=span)


def _select_bits(e, base: A.AstExpr, hi: int, lo: int, scope: Scope) -> E.Expr:
    """Slice declared bit positions ``[hi:lo]`` out of ``base``."""
    if isinstance(base, A.Ident) and base.name in scope.consts:
        v = scope.consts[base.name].value
        if hi < lo or lo < 0:
            raise WidthError("bad constant select", e.span)
        return E.Literal(hi - lo + 1, (v >> lo) & E.mask(hi - lo + 1), None)
    if not isinstance(base, A.Ident):
        raise UnsupportedFeature("select on a non-identifier", e.span)
    info = scope.signal(base)
    if hi < lo:
        raise WidthError(f"descending select [{hi}:{lo}] expected", e.span)
    lo_i, hi_i = lo - info.lsb, hi - info.lsb
    if lo_i < 0 or hi_i >= info.width:
        msb = info.lsb + info.width - 1
        raise WidthError(f"select [{hi}:{lo}] out of range for {base.name}[{msb}:{info.lsb}]", e.span)
    ref = E.Ref(info.name, info.width, base.span)
    if lo_i == 0 and hi_i == info.width - 1:
        return ref
    return E.Slice(ref, hi_i, lo_i)


def lower(e: A.AstExpr, scope: Scope, ctx: int = 0) -> E.Expr:
    """Lower ``e`` to an IR expression of width ``max(self_width(e), ctx)``."""
    w = max(self_width(e, scope), ctx)
    if isinstance(e, A.Number):
        return E.Literal(w, e.value & E.mask(w), e.origin if e.origin.file != "<none>" else e.span)
    if isinstance(e, A.Ident):
        if e.name in scope.consts:
            c = scope.consts[e.name]
            return E.Literal(w, c.value & E.mask(w), c.site)
        info = scope.signal(e)
        return E.zext(E.Ref(info.name, info.width, e.span), w)
    if isinstance(e, A.Index):
        try:
            i = const_eval(e.index, scope.const_values())
        except NotConstant:
            i = None
        if i is not None:
            node = _with_site(_select_bits(e, e.base, i, i, scope), e.span)
        else:
            if not isinstance(e.base, A.Ident) or e.base.name in scope.consts:
                raise UnsupportedFeature("dynamic index on a non-signal", e.span)
            info = scope.signal(e.base)
            if info.lsb != 0:
                raise UnsupportedFeature("dynamic index into a range with nonzero lsb", e.span)
            idx = lower(e.index, scope)
            base = E.Ref(info.name, info.width, e.base.span)
            node = E.Slice(E.Binary(">>", base, idx, info.width), 0, 0, e.span)
        return E.zext(node, w)
    if isinstance(e, A.RangeSel):
        hi, lo = const_int(e.msb, scope), const_int(e.lsb, scope)
        return E.zext(_with_site(_select_bits(e, e.base, hi, lo, scope), e.span), w)
    if isinstance(e, A.IndexedSel):
        start, width = const_int(e.start, scope), const_int(e.width, scope)
        hi, lo = (start + width - 1, start) if e.ascending else (start, start - width + 1)
        return E.zext(_with_site(_select_bits(e, e.base, hi, lo, scope), e.span), w)
    if isinstance(e, A.UnaryOp):
        if e.op == "+":
            return lower(e.operand, scope, w)
        if e.op in ("-", "~"):
            return E.Unary(e.op, lower(e.operand, scope, w), w, e.span)
        inner = lower(e.operand, scope)
        if e.op == "!":
            node = E.Unary("!", inner, 1, e.span)
        else:
            node = E.Reduce(e.op, inner, e.span)
        return E.zext(node, w)
    if isinstance(e, A.BinaryOp):
        op = e.op
        if op in CONTEXT_OPS:
            return E.Binary(op, lower(e.left, scope, w), lower(e.right, scope, w), w, e.span)
        if op in COMPARE_OPS:
            ow = max(self_width(e.left, scope), self_width(e.right, scope))
            node = E.Binary(op, lower(e.left, scope, ow), lower(e.right, scope, ow), 1, e.span)
            return E.zext(node, w)
        if op in LOGIC_OPS:
            node = E.Binary(op, lower(e.left, scope), lower(e.right, scope), 1, e.span)
            return E.zext(node, w)
        if op in SHIFT_OPS:
            return E.Binary(op[:2], lower(e.left, scope, w), lower(e.right, scope), w, e.span)
        if op == "**":
            try:
                v = const_eval(e, scope.const_values())
            except NotConstant:
                raise UnsupportedFeature("non-constant power operator", e.span) from None
            return E.Literal(w, v & E.mask(w), None)
        raise UnsupportedFeature(f"operator {op}", e.span)
    if isinstance(e, A.TernaryOp):
        c = lower_cond(e.cond, scope)
        return E.Ternary(c, lower(e.then, scope, w), lower(e.other, scope, w), w, e.span)
    if isinstance(e, A.ConcatExpr):
        node = E.Concat(tuple(lower(p, scope) for p in e.parts), e.span)
        return E.zext(node, w)
    if isinstance(e, A.Replicate):
        n = const_int(e.count, scope)
        parts = tuple(lower(p, scope) for p in e.parts)
        node = E.Concat(parts * n, e.span)
        return E.zext(node, w)
    raise TypeError(e)


def lower_cond(e: A.AstExpr, scope: Scope) -> E.Expr:
    """Lower a condition to one bit; the result carries the condition's span."""
    c = E.truth(lower(e, scope))
    return c if c.site is not None else _with_site(c, e.span)


def lower_to(e: A.AstExpr, scope: Scope, width: int) -> E.Expr:
    """Lower an assignment right-hand side for a target of ``width`` bits."""
    return E.fit(lower(e, scope, width), width)


# -- annotation (syntax -> syntax) -------------------------------------------

def _zext_ast(e: A.AstExpr, from_w: int, to_w: int) -> A.AstExpr:
    if from_w >= to_w:
        return e
    pad = to_w - from_w
    z = A.Number(f"{pad}'b0", pad, 0, e.span, e.span, inferred_width=pad)
    return A.ConcatExpr((z, e), e.span, inferred_width=to_w)


def annotate(e: A.AstExpr, scope: Scope, ctx: int = 0) -> A.AstExpr:
    """Return ``e`` with ``inferred_width`` set everywhere and zero-extensions made explicit."""
    w = max(self_width(e, scope), ctx)
    rep = dataclasses.replace
    if isinstance(e, A.Number):
        if e.width is None:
            return rep(e, inferred_width=w)
        return _zext_ast(rep(e, inferred_width=e.width), e.width, w)
    if isinstance(e, A.Ident):
        sw = self_width(e, scope)
        if e.name in scope.consts:
            return rep(e, inferred_width=w)
        return _zext_ast(rep(e, inferred_width=sw), sw, w)
    if isinstance(e, (A.Index, A.RangeSel, A.IndexedSel)):
        lower(e, scope)  # range checks
        sw = self_width(e, scope)
        return _zext_ast(rep(e, inferred_width=sw), sw, w)
    if isinstance(e, A.UnaryOp):
        if e.op in ("+", "-", "~"):
            return rep(e, operand=annotate(e.operand, scope, w), inferred_width=w)
        node = rep(e, operand=annotate(e.operand, scope), inferred_width=1)
        return _zext_ast(node, 1, w)
    if isinstance(e, A.BinaryOp):
        if e.op in CONTEXT_OPS:
            return rep(e, left=annotate(e.left, scope, w), right=annotate(e.right, scope, w), inferred_width=w)
        if e.op in COMPARE_OPS:
            ow = max(self_width(e.left, scope), self_width(e.right, scope))
            node = rep(e, left=annotate(e.left, scope, ow), right=annotate(e.right, scope, ow), inferred_width=1)
            return _zext_ast(node, 1, w)
        if e.op in LOGIC_OPS:
            node = rep(e, left=annotate(e.left, scope), right=annotate(e.right, scope), inferred_width=1)
            return _zext_ast(node, 1, w)
        return rep(e, left=annotate(e.left, scope, w), right=annotate(e.right, scope), inferred_width=w)
    if isinstance(e, A.TernaryOp):
        return rep(e, cond=annotate(e.cond, scope), then=annotate(e.then, scope, w),
                   other=annotate(e.other, scope, w), inferred_width=w)
    if isinstance(e, A.ConcatExpr):
        sw = self_width(e, scope)
        node = rep(e, parts=tuple(annotate(p, scope) for p in e.parts), inferred_width=sw)
        return _zext_ast(node, sw, w)
    if isinstance(e, A.Replicate):
        sw = self_width(e, scope)
        node = rep(e, parts=tuple(annotate(p, scope) for p in e.parts), inferred_width=sw)
        return _zext_ast(node, sw, w)
    raise TypeError(e)


@dataclass(frozen=True)
class WidthWarning:
    span: Span
    message: str
    signal: Optional[str]
    lhs_width: int
    rhs_width: int


def module_scope(m: A.AstModule, overrides: Optional[dict[str, int]] = None) -> Scope:
    """Scope of a module with parameters at their defaults (plus ``overrides``)."""
    scope = Scope()
    overrides = overrides or {}
    for p in m.params:
        if p.name in overrides:
            scope.consts[p.name] = ConstInfo(overrides[p.name])
        else:
            scope.consts[p.name] = ConstInfo(const_int(p.value, scope), _number_site(p.value))
    for it in m.items:
        if isinstance(it, A.ParamDecl):
            if not it.local and it.name in overrides:
                scope.consts[it.name] = ConstInfo(overrides[it.name])
            else:
                scope.consts[it.name] = ConstInfo(const_int(it.value, scope), _number_site(it.value))
    decl_ranges = {d.name: d for d in m.decls}
    for p in m.ports:
        r = p.range
        d = decl_ranges.get(p.name)
        if r is None and d is not None:
            r = d.range
        w, lsb = range_width(r, scope)
        scope.signals[p.name] = SignalInfo(p.name, w, lsb, p.direction)
    for d in m.decls:
        if d.name in scope.signals:
            continue
        if d.kind == "integer":
            scope.signals[d.name] = SignalInfo(d.name, 32, 0, "reg")
        else:
            w, lsb = range_width(d.range, scope)
            scope.signals[d.name] = SignalInfo(d.name, w, lsb, "reg" if d.kind in ("reg", "logic") else "wire")
    return scope


def _number_site(e: A.AstExpr) -> Optional[Span]:
    if isinstance(e, A.Number):
        return e.origin if e.origin.file != "<none>" else e.span
    return None


def lvalue_width(lhs: A.AstExpr, scope: Scope) -> int:
    return self_width(lhs, scope)


def assignment_width_warning(lhs: A.AstExpr, rhs: A.AstExpr, scope: Scope) -> Optional[WidthWarning]:
    """Implicit truncation or extension across an assignment, if any.

    Unsized literals that fit the target never warn.
    """
    lw = lvalue_width(lhs, scope)
    rw = self_width(rhs, scope)
    if lw == rw:
        return None
    if is_unsized(rhs, scope) and rw <= lw:
        return None
    sig = lhs.name if isinstance(lhs, A.Ident) else None
    if isinstance(lhs, (A.Index, A.RangeSel, A.IndexedSel)) and isinstance(lhs.base, A.Ident):
        sig = lhs.base.name
    kind = "truncated" if rw > lw else "extended"
    return WidthWarning(rhs.span, f"{rw}-bit value implicitly {kind} to {lw} bits", sig, lw, rw)


def _annotate_stmt(s: A.Stmt, scope: Scope, warnings: list) -> A.Stmt:
    rep = dataclasses.replace
    if isinstance(s, A.AssignStmt):
        lw = lvalue_width(s.lhs, scope)
        ww = assignment_width_warning(s.lhs, s.rhs, scope)
        if ww:
            warnings.append(ww)
        return rep(s, lhs=annotate(s.lhs, scope), rhs=annotate(s.rhs, scope, lw))
    if isinstance(s, A.Block):
        return rep(s, stmts=tuple(_annotate_stmt(x, scope, warnings) for x in s.stmts))
    if isinstance(s, A.IfStmt):
        return rep(s, cond=annotate(s.cond, scope), then=_annotate_stmt(s.then, scope, warnings),
                   other=None if s.other is None else _annotate_stmt(s.other, scope, warnings))
    if isinstance(s, A.CaseStmt):
        sw = max([self_width(s.subject, scope)] + [self_width(l, scope) for it in s.items for l in (it.labels or ())])
        items = tuple(rep(it, labels=None if it.labels is None else tuple(annotate(l, scope, sw) for l in it.labels),
                          body=_annotate_stmt(it.body, scope, warnings)) for it in s.items)
        return rep(s, subject=annotate(s.subject, scope, sw), items=items)
    return s


def infer_widths(m: A.AstModule, overrides: Optional[dict[str, int]] = None,
                 warnings: Optional[list] = None) -> A.AstModule:
    """Annotate every expression of ``m`` with its width.

    Implicit zero-extensions become explicit concatenations. Assignment width
    mismatches are appended to ``warnings`` (if given) rather than raised;
    WidthError is raised only for impossible selects. Generate-loop bodies are
    left unannotated.
    """
    scope = module_scope(m, overrides)
    warns: list = [] if warnings is None else warnings
    rep = dataclasses.replace
    items = []
    for it in m.items:
        if isinstance(it, A.ContinuousAssign):
            lw = lvalue_width(it.lhs, scope)
            ww = assignment_width_warning(it.lhs, it.rhs, scope)
            if ww:
                warns.append(ww)
            items.append(rep(it, lhs=annotate(it.lhs, scope), rhs=annotate(it.rhs, scope, lw)))
        elif isinstance(it, A.AlwaysBlock):
            items.append(rep(it, body=_annotate_stmt(it.body, scope, warns)))
        elif isinstance(it, A.InitialBlock):
            items.append(rep(it, body=_annotate_stmt(it.body, scope, warns)))
        else:
            items.append(it)
    decls = []
    for d in m.decls:
        if d.init is not None:
            lw = scope.signals[d.name].width
            ww = assignment_width_warning(A.Ident(d.name, d.name_span), d.init, scope)
            if ww:
                warns.append(ww)
            decls.append(rep(d, init=annotate(d.init, scope, lw)))
        else:
            decls.append(d)
    return rep(m, items=tuple(items), decls=tuple(decls))
