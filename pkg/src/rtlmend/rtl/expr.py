"""Word-level expressions over flattened signals.

Every node carries its result width. Operand widths follow these rules,
checked by :func:`check`:

* ``+ - * / % & | ^ ~^``: both operands and the result share one width
* comparisons: operands share a width, result is 1 bit
* ``&& ||``: any operand widths, result 1 bit
* ``<< >>``: left operand has the result width, shift amount any width
* ``Ternary``: branches have the result width, condition any width (nonzero is true)

Division by zero follows SMT-LIB: ``x / 0`` is all ones and ``x % 0`` is ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

from .source import Span


def mask(width: int) -> int:
    return (1 << width) - 1


def _site():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Literal:
    width: int
    value: int
    site: Optional[Span] = _site()

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("literal width must be positive")
        if not 0 <= self.value <= mask(self.width):
            raise ValueError(f"literal value {self.value} does not fit {self.width} bits")


@dataclass(frozen=True)
class Ref:
    name: str
    width: int
    site: Optional[Span] = _site()


@dataclass(frozen=True)
class Unary:
    op: str  # '~' | '-' | '!'
    e: "Expr"
    width: int
    site: Optional[Span] = _site()


@dataclass(frozen=True)
class Binary:
    op: str
    l: "Expr"
    r: "Expr"
    width: int
    site: Optional[Span] = _site()


@dataclass(frozen=True)
class Reduce:
    op: str  # '&' | '|' | '^' | '~&' | '~|' | '~^'
    e: "Expr"
    site: Optional[Span] = _site()

    @property
    def width(self) -> int:
        return 1


@dataclass(frozen=True)
class Ternary:
    c: "Expr"
    t: "Expr"
    f: "Expr"
    width: int
    site: Optional[Span] = _site()


@dataclass(frozen=True)
class Slice:
    e: "Expr"
    hi: int
    lo: int
    site: Optional[Span] = _site()

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class Concat:
    parts: tuple["Expr", ...]  # most significant first
    site: Optional[Span] = _site()

    @property
    def width(self) -> int:
        return sum(p.width for p in self.parts)


Expr = Union[Literal, Ref, Unary, Binary, Reduce, Ternary, Slice, Concat]

ARITH_OPS = ("+", "-", "*", "/", "%", "&", "|", "^", "~^")
COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&&", "||")
SHIFT_OPS = ("<<", ">>")
BINARY_OPS = ARITH_OPS + COMPARE_OPS + LOGIC_OPS + SHIFT_OPS
UNARY_OPS = ("~", "-", "!")
REDUCE_OPS = ("&", "|", "^", "~&", "~|", "~^")


class ExprError(ValueError):
    pass


def check(e: Expr) -> None:
    """Validate the width discipline of ``e`` recursively."""
    for n in nodes(e):
        if isinstance(n, Binary):
            if n.op not in BINARY_OPS:
                raise ExprError(f"unknown binary operator {n.op!r}")
            if n.op in ARITH_OPS and not (n.l.width == n.r.width == n.width):
                raise ExprError(f"operand widths {n.l.width}/{n.r.width} differ from result {n.width} for {n.op}")
            if n.op in COMPARE_OPS and (n.l.width != n.r.width or n.width != 1):
                raise ExprError(f"comparison {n.op} needs equal operand widths and 1-bit result")
            if n.op in LOGIC_OPS and n.width != 1:
                raise ExprError(f"{n.op} yields 1 bit")
            if n.op in SHIFT_OPS and n.l.width != n.width:
                raise ExprError("shift result width must equal the shifted operand")
        elif isinstance(n, Unary):
            if n.op not in UNARY_OPS:
                raise ExprError(f"unknown unary operator {n.op!r}")
            if n.op == "!" and n.width != 1:
                raise ExprError("! yields 1 bit")
            if n.op != "!" and n.e.width != n.width:
                raise ExprError(f"unary {n.op} must preserve width")
        elif isinstance(n, Reduce):
            if n.op not in REDUCE_OPS:
                raise ExprError(f"unknown reduction {n.op!r}")
        elif isinstance(n, Ternary):
            if not (n.t.width == n.f.width == n.width):
                raise ExprError("ternary branch widths must match the result")
        elif isinstance(n, Slice):
            if not (0 <= n.lo <= n.hi < n.e.width):
                raise ExprError(f"slice [{n.hi}:{n.lo}] out of range for width {n.e.width}")
        elif isinstance(n, Concat):
            if not n.parts:
                raise ExprError("empty concatenation")
        elif isinstance(n, Ref):
            if n.width <= 0:
                raise ExprError("reference width must be positive")


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Literal, Ref)):
        return ()
    if isinstance(e, (Unary, Reduce, Slice)):
        return (e.e,)
    if isinstance(e, Binary):
        return (e.l, e.r)
    if isinstance(e, Ternary):
        return (e.c, e.t, e.f)
    if isinstance(e, Concat):
        return e.parts
    raise TypeError(f"not an expression: {e!r}")


def nodes(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def refs(e: Expr) -> set[str]:
    return {n.name for n in nodes(e) if isinstance(n, Ref)}


def rebuild(e: Expr, kids: tuple[Expr, ...]) -> Expr:
    if isinstance(e, (Literal, Ref)):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, kids[0], e.width, e.site)
    if isinstance(e, Reduce):
        return Reduce(e.op, kids[0], e.site)
    if isinstance(e, Slice):
        return Slice(kids[0], e.hi, e.lo, e.site)
    if isinstance(e, Binary):
        return Binary(e.op, kids[0], kids[1], e.width, e.site)
    if isinstance(e, Ternary):
        return Ternary(kids[0], kids[1], kids[2], e.width, e.site)
    if isinstance(e, Concat):
        return Concat(tuple(kids), e.site)
    raise TypeError(e)


def transform(e: Expr, fn: Callable[[Expr], Optional[Expr]]) -> Expr:
    """Bottom-up rewrite. ``fn`` returns a replacement or None to keep the node.

    Shared subtrees are rewritten once.
    """
    memo: dict[int, Expr] = {}

    def go(n: Expr) -> Expr:
        key = id(n)
        if key in memo:
            return memo[key]
        kids = children(n)
        new_kids = tuple(go(k) for k in kids)
        m = n if all(a is b for a, b in zip(kids, new_kids)) else rebuild(n, new_kids)
        r = fn(m)
        out = m if r is None else r
        memo[key] = out
        return out

    return go(e)


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    return transform(e, lambda n: mapping.get(n.name) if isinstance(n, Ref) else None)


# -- construction helpers ----------------------------------------------------

def zext(e: Expr, width: int) -> Expr:
    if e.width == width:
        return e
    if e.width > width:
        raise ExprError("zext to a smaller width")
    return Concat((Literal(width - e.width, 0), e))


def trunc(e: Expr, width: int) -> Expr:
    if e.width == width:
        return e
    if e.width < width:
        raise ExprError("trunc to a larger width")
    return Slice(e, width - 1, 0)


def fit(e: Expr, width: int) -> Expr:
    return zext(e, width) if e.width < width else trunc(e, width)


def truth(e: Expr) -> Expr:
    """1-bit truth value of ``e`` (nonzero is true)."""
    if e.width == 1:
        return e
    return Reduce("|", e)


def mux(c: Expr, t: Expr, f: Expr) -> Expr:
    return Ternary(c, t, f, t.width)


def const(width: int, value: int) -> Literal:
    return Literal(width, value & mask(width))


# -- concrete semantics ------------------------------------------------------

def eval_binary(op: str, a: int, b: int, lw: int, width: int) -> int:
    m = mask(width)
    if op == "+":
        return (a + b) & m
    if op == "-":
        return (a - b) & m
    if op == "*":
        return (a * b) & m
    if op == "/":
        return m if b == 0 else a // b
    if op == "%":
        return a if b == 0 else a % b
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op == "^":
        return a ^ b
    if op == "~^":
        return ~(a ^ b) & m
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "&&":
        return int(bool(a) and bool(b))
    if op == "||":
        return int(bool(a) or bool(b))
    if op == "<<":
        return 0 if b >= lw else (a << b) & m
    if op == ">>":
        return 0 if b >= lw else a >> b
    raise ExprError(f"unknown operator {op!r}")


def eval_reduce(op: str, a: int, width: int) -> int:
    if op == "&":
        return int(a == mask(width))
    if op == "|":
        return int(a != 0)
    if op == "^":
        return bin(a).count("1") & 1
    if op == "~&":
        return int(a != mask(width))
    if op == "~|":
        return int(a == 0)
    if op == "~^":
        return 1 - (bin(a).count("1") & 1)
    raise ExprError(f"unknown reduction {op!r}")


def evaluate(e: Expr, env: dict[str, int]) -> int:
    """Interpret ``e`` under ``env`` (signal name to value)."""
    return compile_expr(e)(env)


def compile_expr(e: Expr) -> Callable[[dict], int]:
    """Turn ``e`` into a closure ``env -> int``."""
    if isinstance(e, Literal):
        v = e.value
        return lambda env: v
    if isinstance(e, Ref):
        name = e.name
        return lambda env: env[name]
    if isinstance(e, Unary):
        f = compile_expr(e.e)
        m = mask(e.width)
        if e.op == "~":
            return lambda env: ~f(env) & m
        if e.op == "-":
            return lambda env: -f(env) & m
        return lambda env: int(f(env) == 0)
    if isinstance(e, Reduce):
        f = compile_expr(e.e)
        op, w = e.op, e.e.width
        return lambda env: eval_reduce(op, f(env), w)
    if isinstance(e, Binary):
        fl, fr = compile_expr(e.l), compile_expr(e.r)
        op, lw, w = e.op, e.l.width, e.width
        if op == "+":
            m = mask(w)
            return lambda env: (fl(env) + fr(env)) & m
        if op == "&":
            return lambda env: fl(env) & fr(env)
        if op == "|":
            return lambda env: fl(env) | fr(env)
        if op == "^":
            return lambda env: fl(env) ^ fr(env)
        if op == "==":
            return lambda env: int(fl(env) == fr(env))
        return lambda env: eval_binary(op, fl(env), fr(env), lw, w)
    if isinstance(e, Ternary):
        fc, ft, ff = compile_expr(e.c), compile_expr(e.t), compile_expr(e.f)
        return lambda env: ft(env) if fc(env) else ff(env)
    if isinstance(e, Slice):
        f = compile_expr(e.e)
        lo, m = e.lo, mask(e.width)
        return lambda env: (f(env) >> lo) & m
    if isinstance(e, Concat):
        fs = [(compile_expr(p), p.width) for p in e.parts]

        def cat(env):
            v = 0
            for f, w in fs:
                v = (v << w) | f(env)
            return v
        return cat
    raise TypeError(f"not an expression: {e!r}")


# -- rendering ---------------------------------------------------------------

_PREC = {"||": 2, "&&": 3, "|": 4, "^": 5, "~^": 5, "&": 6, "==": 7, "!=": 7, "<": 8, "<=": 8, ">": 8,
         ">=": 8, "<<": 9, ">>": 9, "+": 10, "-": 10, "*": 11, "/": 11, "%": 11}


def to_verilog(e: Expr, rename: Optional[Callable[[str], str]] = None) -> str:
    """Render ``e`` as Verilog source text. Literals are sized."""
    rn = rename or (lambda s: s)

    def go(n: Expr, parent_prec: int) -> str:
        if isinstance(n, Literal):
            return f"{n.width}'d{n.value}"
        if isinstance(n, Ref):
            return rn(n.name)
        if isinstance(n, Unary):
            return f"{n.op}{go(n.e, 99)}"
        if isinstance(n, Reduce):
            return f"{n.op}{go(n.e, 99)}"
        if isinstance(n, Binary):
            p = _PREC[n.op]
            s = f"{go(n.l, p)} {n.op} {go(n.r, p + 1)}"
            return f"({s})" if p < parent_prec else s
        if isinstance(n, Ternary):
            s = f"{go(n.c, 2)} ? {go(n.t, 1)} : {go(n.f, 1)}"
            return f"({s})" if parent_prec > 0 else s
        if isinstance(n, Slice):
            if not isinstance(n.e, Ref):
                raise ExprError("part-select of a compound expression has no Verilog form")
            inner = go(n.e, 99)
            return f"{inner}[{n.hi}]" if n.hi == n.lo else f"{inner}[{n.hi}:{n.lo}]"
        if isinstance(n, Concat):
            return "{" + ", ".join(go(p, 0) for p in n.parts) + "}"
        raise TypeError(n)

    return go(e, 0)
