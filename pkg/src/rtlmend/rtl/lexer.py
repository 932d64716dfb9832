"""Tokenizer and a minimal preprocessor (`define / `include only)."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .source import ParseError, SourceProject, Span, UnsupportedFeature, line_col

KEYWORDS = frozenset("""
module endmodule input output inout wire reg logic integer parameter localparam
assign always always_ff always_comb always_latch initial begin end if else case casez casex
endcase default posedge negedge or generate endgenerate genvar for function endfunction
task endtask fork join while repeat forever wait signed unsigned tri supply0 supply1
""".split())

# constructs rejected at lex/parse time with the name reported to the user
UNSUPPORTED_KEYWORDS = {
    "inout": "inout port (tri-state)",
    "tri": "tri-state net",
    "function": "function",
    "task": "task",
    "fork": "fork/join",
    "while": "while loop",
    "repeat": "repeat loop",
    "forever": "forever loop",
    "wait": "wait statement",
    "casez": "casez",
    "casex": "casex",
    "always_latch": "always_latch",
    "signed": "signed arithmetic",
    "supply0": "supply net",
    "supply1": "supply net",
}

OPERATORS = sorted("""
<<< >>> === !== == != <= >= && || << >> ~& ~| ~^ ^~ +: -: ** ( ) [ ] { } , ; : ? = + - * / % & | ^ ~ ! < > @ # .
""".split(), key=len, reverse=True)

_WS = re.compile(r"[ \t\r\n\f]+")
_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_ESC_ID = re.compile(r"\\\S+")
_NUMBER = re.compile(
    r"(?P<size>[0-9][0-9_]*)?\s*'(?P<signed>[sS])?(?P<base>[bBoOdDhH])\s*(?P<digits>[0-9a-fA-FxXzZ?_]+)"
    r"|(?P<dec>[0-9][0-9_]*)"
)
_STRING = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_SYSID = re.compile(r"\$[A-Za-z_][A-Za-z0-9_$]*")
_DIRECTIVE = re.compile(r"`[A-Za-z_][A-Za-z0-9_]*")

_IGNORED_DIRECTIVES = {"`timescale", "`default_nettype", "`resetall", "`celldefine", "`endcelldefine"}


@dataclass(frozen=True)
class Token:
    kind: str  # 'id', 'kw', 'num', 'op', 'str', 'sys', 'dir', 'eof'
    text: str
    span: Span
    # location used for node extents; differs from span only for macro expansions
    anchor: Span | None = None

    @property
    def where(self) -> Span:
        return self.anchor or self.span


def _mkspan(file: str, text: str, start: int, end: int) -> Span:
    line, col = line_col(text, start)
    return Span(file, start, end, line, col)


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    """Raw tokenization; comments and whitespace are skipped. Ends with an 'eof' token."""
    toks: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        m = _WS.match(text, i)
        if m:
            i = m.end()
            continue
        if text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                raise ParseError("unterminated block comment", _mkspan(file, text, i, n))
            i = j + 2
            continue
        if text.startswith("(*", i) and not text.startswith("(*)", i):
            j = text.find("*)", i + 2)
            if j < 0:
                raise ParseError("unterminated attribute", _mkspan(file, text, i, n))
            i = j + 2
            continue
        c = text[i]
        if c.isdigit() or c == "'":
            m = _NUMBER.match(text, i)
            if m and (m.group("base") or m.group("dec")):
                toks.append(Token("num", m.group(0), _mkspan(file, text, i, m.end())))
                i = m.end()
                continue
            if c == "'":
                raise UnsupportedFeature("fill literal or cast", _mkspan(file, text, i, i + 2))
        m = _ID.match(text, i)
        if m:
            word = m.group(0)
            toks.append(Token("kw" if word in KEYWORDS else "id", word, _mkspan(file, text, i, m.end())))
            i = m.end()
            continue
        m = _ESC_ID.match(text, i)
        if m:
            raise UnsupportedFeature("escaped identifier", _mkspan(file, text, i, m.end()))
        m = _STRING.match(text, i)
        if m:
            toks.append(Token("str", m.group(0), _mkspan(file, text, i, m.end())))
            i = m.end()
            continue
        m = _SYSID.match(text, i)
        if m:
            toks.append(Token("sys", m.group(0), _mkspan(file, text, i, m.end())))
            i = m.end()
            continue
        m = _DIRECTIVE.match(text, i)
        if m:
            toks.append(Token("dir", m.group(0), _mkspan(file, text, i, m.end())))
            i = m.end()
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                toks.append(Token("op", op, _mkspan(file, text, i, i + len(op))))
                i += len(op)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", _mkspan(file, text, i, i + 1))
    toks.append(Token("eof", "", _mkspan(file, text, n, n)))
    return toks


def _line_end(text: str, pos: int) -> int:
    j = text.find("\n", pos)
    return len(text) if j < 0 else j


def preprocess(project: SourceProject, path: str, macros: dict[str, list[Token]] | None = None,
               _stack: tuple[str, ...] = ()) -> list[Token]:
    """Tokenize ``path`` expanding `include and `define'd macros (literal expansion)."""
    if path in _stack:
        raise ParseError(f"recursive include of {path!r}")
    macros = {} if macros is None else macros
    text = project.text(path)
    raw = tokenize(text, path)
    out: list[Token] = []
    i = 0
    while i < len(raw):
        t = raw[i]
        if t.kind != "dir":
            if t.kind != "eof":
                out.append(t)
            i += 1
            continue
        name = t.text
        if name in _IGNORED_DIRECTIVES:
            end = _line_end(text, t.span.end)
            while raw[i].kind != "eof" and raw[i].span.start < end:
                i += 1
            continue
        if name == "`define":
            end = _line_end(text, t.span.end)
            i += 1
            if raw[i].kind not in ("id", "kw") or raw[i].span.start >= end:
                raise ParseError("`define without a name", t.span)
            mname = raw[i].text
            i += 1
            if raw[i].text == "(" and raw[i].span.start == raw[i - 1].span.end:
                raise UnsupportedFeature("macro with arguments", t.span)
            body = []
            while raw[i].kind != "eof" and raw[i].span.start < end:
                body.append(raw[i])
                i += 1
            macros[mname] = body
            continue
        if name == "`include":
            i += 1
            if raw[i].kind != "str":
                raise ParseError("`include expects a file name", t.span)
            inc = raw[i].text[1:-1]
            i += 1
            target = next((p for p in project.paths if p == inc or p.endswith("/" + inc)), None)
            if target is None:
                raise ParseError(f"included file {inc!r} not in project", t.span)
            out.extend(preprocess(project, target, macros, _stack + (path,)))
            continue
        if name in ("`ifdef", "`ifndef", "`else", "`endif", "`elsif", "`undef"):
            raise UnsupportedFeature(f"conditional compilation {name}", t.span)
        mname = name[1:]
        if mname not in macros:
            raise ParseError(f"undefined macro {name}", t.span)
        for b in macros[mname]:
            out.append(Token(b.kind, b.text, b.span, anchor=t.span))
        i += 1
    return out


def parse_number(text: str, span: Span | None = None) -> tuple[int | None, int]:
    """Return ``(width or None if unsized, value)`` of a Verilog number literal.

    x digits read as 0 (two-state values); z digits are rejected.
    """
    m = _NUMBER.fullmatch(text)
    if m is None:
        raise ParseError(f"bad number {text!r}", span)
    if m.group("dec") is not None:
        return None, int(m.group("dec").replace("_", ""))
    if m.group("signed"):
        raise UnsupportedFeature("signed literal", span)
    digits = m.group("digits").replace("_", "")
    if re.search(r"[zZ?]", digits):
        raise UnsupportedFeature("tri-state (z) literal", span)
    base = {"b": 2, "o": 8, "d": 10, "h": 16}[m.group("base").lower()]
    bits_per = {2: 1, 8: 3, 16: 4}.get(base)
    try:
        if base == 10:
            value = 0 if re.search(r"[xX]", digits) else int(digits, 10)
        else:
            value = 0
            for ch in digits:
                d = 0 if ch in "xX" else int(ch, base)
                value = (value << bits_per) | d
    except ValueError:
        raise ParseError(f"bad digits in number {text!r}", span) from None
    size = m.group("size")
    if size is None:
        return None, value
    width = int(size.replace("_", ""))
    if width <= 0:
        raise ParseError("literal width must be positive", span)
    return width, value & ((1 << width) - 1)
