"""SMT-LIB v2 rendering of word-level expressions and s-expression parsing."""

from __future__ import annotations

from collections import Counter
from typing import Callable

from ..rtl import expr as E

TIME = "\x00"  # placeholder replaced by the cycle index


def sym(name: str) -> str:
    if "|" in name or "\\" in name:
        raise ValueError(f"name {name!r} cannot be quoted")
    return f"|{name}|"


def bv(width: int, value: int) -> str:
    return f"(_ bv{value & E.mask(width)} {width})"


def _bool(b: str) -> str:
    return f"(ite {b} #b1 #b0)"


def _nz(s: str, w: int) -> str:
    return f"(distinct {s} {bv(w, 0)})"


def _is_true(s: str, w: int) -> str:
    return f"(= {s} #b1)" if w == 1 else _nz(s, w)


_ARITH = {"+": "bvadd", "-": "bvsub", "*": "bvmul", "/": "bvudiv", "%": "bvurem", "&": "bvand", "|": "bvor",
          "^": "bvxor"}
_CMP = {"==": "=", "!=": "distinct", "<": "bvult", "<=": "bvule", ">": "bvugt", ">=": "bvuge"}


def _concat(parts: list[str]) -> str:
    out = parts[0]
    for p in parts[1:]:
        out = f"(concat {out} {p})"
    return out


def render(e: E.Expr, ref: Callable[[E.Ref], str]) -> str:
    """Render ``e`` as an SMT-LIB bit-vector term, let-binding shared subterms."""
    counts: Counter = Counter()
    order: list = []
    stack = [(e, False)]
    seen: set = set()
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        counts[id(n)] += 1
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        for c in reversed(E.children(n)):
            stack.append((c, False))
    names: dict[int, str] = {}
    bindings: list[tuple[str, str]] = []

    def term(n: E.Expr) -> str:
        if id(n) in names:
            return names[id(n)]
        return _node(n, term, ref)

    for n in order:
        if counts[id(n)] > 1 and not isinstance(n, (E.Literal, E.Ref)) and n is not e:
            s = _node(n, term, ref)
            name = f"?s{len(bindings)}"
            bindings.append((name, s))
            names[id(n)] = name
    body = term(e)
    for name, s in reversed(bindings):
        body = f"(let (({name} {s})) {body})"
    return body


def _node(n: E.Expr, term, ref) -> str:
    if isinstance(n, E.Literal):
        return bv(n.width, n.value)
    if isinstance(n, E.Ref):
        return ref(n)
    if isinstance(n, E.Unary):
        a = term(n.e)
        if n.op == "~":
            return f"(bvnot {a})"
        if n.op == "-":
            return f"(bvneg {a})"
        return _bool(f"(= {a} {bv(n.e.width, 0)})")
    if isinstance(n, E.Reduce):
        a, w = term(n.e), n.e.width
        if n.op in ("&", "~&"):
            r = f"(= {a} {bv(w, E.mask(w))})"
        elif n.op in ("|", "~|"):
            r = _nz(a, w)
        else:
            bits = [f"((_ extract {i} {i}) {a})" for i in range(w)]
            x = bits[0]
            for b in bits[1:]:
                x = f"(bvxor {x} {b})"
            r = f"(= {x} #b1)"
        if n.op.startswith("~"):
            r = f"(not {r})"
        return _bool(r)
    if isinstance(n, E.Binary):
        a, b = term(n.l), term(n.r)
        op = n.op
        if op in _ARITH:
            return f"({_ARITH[op]} {a} {b})"
        if op == "~^":
            return f"(bvnot (bvxor {a} {b}))"
        if op in _CMP:
            return _bool(f"({_CMP[op]} {a} {b})")
        if op in ("&&", "||"):
            k = "and" if op == "&&" else "or"
            return _bool(f"({k} {_is_true(a, n.l.width)} {_is_true(b, n.r.width)})")
        if op in ("<<", ">>"):
            f = "bvshl" if op == "<<" else "bvlshr"
            lw, aw = n.l.width, n.r.width
            if aw == lw:
                return f"({f} {a} {b})"
            if aw < lw:
                return f"({f} {a} ((_ zero_extend {lw - aw}) {b}))"
            return (f"(ite (bvuge {b} {bv(aw, lw)}) {bv(lw, 0)} "
                    f"({f} {a} ((_ extract {lw - 1} 0) {b})))")
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(n, E.Ternary):
        return f"(ite {_is_true(term(n.c), n.c.width)} {term(n.t)} {term(n.f)})"
    if isinstance(n, E.Slice):
        return f"((_ extract {n.hi} {n.lo}) {term(n.e)})"
    if isinstance(n, E.Concat):
        return _concat([term(p) for p in n.parts])
    raise TypeError(n)


# -- s-expressions -----------------------------------------------------------

class SexpError(ValueError):
    pass


def parse_sexps(text: str) -> list:
    """Parse every s-expression in ``text``; symbols and literals stay strings."""
    out: list = []
    stack: list[list] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(":
            stack.append([])
            i += 1
        elif c == ")":
            if not stack:
                raise SexpError(f"unbalanced ')' at {i}")
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
            i += 1
        else:
            if c == "|":
                j = text.find("|", i + 1)
                if j < 0:
                    raise SexpError("unterminated quoted symbol")
                atom = text[i:j + 1]
                i = j + 1
            elif c == '"':
                j = i + 1
                while j < n:
                    if text[j] == '"':
                        if j + 1 < n and text[j + 1] == '"':
                            j += 2
                            continue
                        break
                    j += 1
                atom = text[i:j + 1]
                i = j + 1
            else:
                j = i
                while j < n and not text[j].isspace() and text[j] not in "()":
                    j += 1
                atom = text[i:j]
                i = j
            (stack[-1] if stack else out).append(atom)
    if stack:
        raise SexpError("unbalanced '('")
    return out


def unquote(symbol: str) -> str:
    return symbol[1:-1] if symbol.startswith("|") and symbol.endswith("|") else symbol


def bv_value(term) -> int:
    """Decode ``#b..``, ``#x..`` or ``(_ bvN w)``."""
    if isinstance(term, str):
        if term.startswith("#b"):
            return int(term[2:], 2)
        if term.startswith("#x"):
            return int(term[2:], 16)
    elif isinstance(term, list) and len(term) == 3 and term[0] == "_" and term[1].startswith("bv"):
        return int(term[1][2:])
    raise SexpError(f"not a bit-vector constant: {term!r}")


def parse_model(sexp) -> dict[str, int]:
    """Bit-vector constants of a ``(get-model)`` answer."""
    items = sexp
    if items and items[0] == "model":
        items = items[1:]
    out = {}
    for d in items:
        if not (isinstance(d, list) and len(d) == 5 and d[0] == "define-fun" and d[2] == []):
            continue
        try:
            out[unquote(d[1])] = bv_value(d[4])
        except SexpError:
            continue
    return out
