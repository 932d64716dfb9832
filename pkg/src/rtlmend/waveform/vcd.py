"""Value change dump reading and writing.

Cycle ``t`` is written at time ``10*t`` with the clock low and a rising edge
at ``10*t + 5``. The reader samples every signal just before each rising
clock edge, so dumps from event-driven simulators (where registers change at
the edge) line up with the cycle model.
"""

from __future__ import annotations

import re
from typing import Optional

from .trace import WaveformTrace

PERIOD = 10


class VcdFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _ident(i: int) -> str:
    chars = []
    while True:
        chars.append(chr(33 + i % 94))
        i //= 94
        if i == 0:
            break
        i -= 1
    return "".join(chars)


def _value(w: int, v: int, code: str) -> str:
    if w == 1:
        return f"{v}{code}"
    return f"b{v:b} {code}"


def vcd_write(trace: WaveformTrace) -> bytes:
    names = [n for n in trace.signals if n != trace.clock_name]
    codes = {n: _ident(i + 1) for i, n in enumerate(names)}
    clk = _ident(0)
    out = ["$version rtlmend $end", f"$timescale {trace.timescale} $end", f"$scope module {trace.scope} $end",
           f"$var wire 1 {clk} {trace.clock_name} $end"]
    # nested scopes for dotted names, emitted in sorted scope order
    tree: dict = {}
    for n in names:
        node = tree
        parts = n.split(".")
        for p in parts[:-1]:
            node = node.setdefault(("s", p), {})
        node[("v", n)] = parts[-1]

    def emit(node: dict):
        for key in node:
            if key[0] == "v":
                w = trace.width(key[1])
                out.append(f"$var wire {w} {codes[key[1]]} {node[key]} $end")
        for key in node:
            if key[0] == "s":
                out.append(f"$scope module {key[1]} $end")
                emit(node[key])
                out.append("$upscope $end")

    emit(tree)
    out += ["$upscope $end", "$enddefinitions $end", "#0", "$dumpvars", f"0{clk}"]
    prev = {}
    for n in names:
        v = trace.at(n, 0) if trace.n_cycles else 0
        out.append(_value(trace.width(n), v, codes[n]))
        prev[n] = v
    out.append("$end")
    for t in range(trace.n_cycles):
        if t > 0:
            out.append(f"#{PERIOD * t}")
            out.append(f"0{clk}")
            for n in names:
                v = trace.at(n, t)
                if v != prev[n]:
                    out.append(_value(trace.width(n), v, codes[n]))
                    prev[n] = v
        out.append(f"#{PERIOD * t + PERIOD // 2}")
        out.append(f"1{clk}")
    out.append(f"#{PERIOD * trace.n_cycles}")
    out.append(f"0{clk}")
    return ("\n".join(out) + "\n").encode("ascii")


_TOKEN = re.compile(rb"\S+")


def _parse_bits(text: str, offset: int) -> int:
    bits = text.lower().replace("x", "0").replace("z", "0")
    if not bits or any(c not in "01" for c in bits):
        raise VcdFormatError(f"bad vector value {text!r}", offset)
    return int(bits, 2)


def vcd_read(data: bytes, clock: Optional[str] = None) -> WaveformTrace:
    """Parse a dump into per-cycle samples.

    ``clock`` names the clock variable; by default a 1-bit variable called
    ``clk`` or ``clock`` is used. Unknown (x/z) bits read as 0.
    """
    toks = [(m.group().decode("utf-8", "replace"), m.start()) for m in _TOKEN.finditer(data)]
    i = 0
    n = len(toks)

    def need(k: int, what: str):
        if i + k > n:
            raise VcdFormatError(f"truncated {what}", len(data))

    timescale = "1ns"
    scopes: list[str] = []
    top_scope: Optional[str] = None
    vars_: dict[str, list[tuple[str, int]]] = {}  # code -> [(full name, width)]
    order: list[tuple[str, str, int]] = []
    ended = False
    while i < n:
        tok, off = toks[i]
        if tok == "$enddefinitions":
            need(2, "$enddefinitions")
            i += 2
            ended = True
            break
        if tok in ("$date", "$version", "$comment"):
            j = i + 1
            while j < n and toks[j][0] != "$end":
                j += 1
            if j >= n:
                raise VcdFormatError(f"unterminated {tok}", off)
            i = j + 1
        elif tok == "$timescale":
            j = i + 1
            parts = []
            while j < n and toks[j][0] != "$end":
                parts.append(toks[j][0])
                j += 1
            if j >= n:
                raise VcdFormatError("unterminated $timescale", off)
            timescale = "".join(parts)
            i = j + 1
        elif tok == "$scope":
            need(4, "$scope")
            name = toks[i + 2][0]
            if toks[i + 3][0] != "$end":
                raise VcdFormatError("malformed $scope", off)
            if not scopes and top_scope is None:
                top_scope = name
            scopes.append(name)
            i += 4
        elif tok == "$upscope":
            need(2, "$upscope")
            if not scopes:
                raise VcdFormatError("$upscope without $scope", off)
            scopes.pop()
            i += 2
        elif tok == "$var":
            j = i + 1
            while j < n and toks[j][0] != "$end":
                j += 1
            if j >= n:
                raise VcdFormatError("unterminated $var", off)
            fields = [t for t, _ in toks[i + 1:j]]
            if len(fields) < 4:
                raise VcdFormatError("malformed $var", off)
            try:
                width = int(fields[1])
            except ValueError:
                raise VcdFormatError(f"bad width {fields[1]!r}", toks[i + 2][1]) from None
            if width <= 0:
                raise VcdFormatError("non-positive width", toks[i + 2][1])
            code, ref = fields[2], fields[3]
            path = scopes[1:] + [ref]
            full = ".".join(path)
            vars_.setdefault(code, []).append((full, width))
            order.append((full, code, width))
            i = j + 1
        else:
            raise VcdFormatError(f"unexpected {tok!r} in header", off)
    if not ended:
        raise VcdFormatError("missing $enddefinitions", len(data))
    if scopes:
        raise VcdFormatError("unbalanced $scope", len(data))

    names = {full: (code, w) for full, code, w in order}
    if clock is None:
        for cand in ("clk", "clock"):
            if cand in names and names[cand][1] == 1:
                clock = cand
                break
    if clock is None or clock not in names:
        raise VcdFormatError("no clock variable found", 0)
    clk_code = names[clock][0]

    current: dict[str, int] = {code: 0 for code in vars_}
    snapshot = dict(current)
    samples: list[dict[str, int]] = []
    in_dump = False
    dump_off = 0
    while i < n:
        tok, off = toks[i]
        c = tok[0]
        if c == "#":
            try:
                int(tok[1:])
            except ValueError:
                raise VcdFormatError(f"bad timestamp {tok!r}", off) from None
            snapshot = dict(current)
            i += 1
        elif tok in ("$dumpvars", "$dumpall", "$dumpon", "$dumpoff"):
            if in_dump:
                raise VcdFormatError(f"nested {tok}", off)
            in_dump, dump_off = True, off
            i += 1
        elif tok == "$end":
            if not in_dump:
                raise VcdFormatError("stray $end", off)
            in_dump = False
            i += 1
        elif tok == "$comment":
            j = i + 1
            while j < n and toks[j][0] != "$end":
                j += 1
            if j >= n:
                raise VcdFormatError("unterminated $comment", off)
            i = j + 1
        elif c in "01xXzZ":
            code = tok[1:]
            if code not in vars_:
                raise VcdFormatError(f"unknown identifier {code!r}", off)
            v = 1 if c == "1" else 0
            if code == clk_code and v == 1 and current[code] == 0:
                samples.append(snapshot)
            current[code] = v
            i += 1
        elif c in "bB":
            if i + 1 >= n:
                raise VcdFormatError("truncated vector change", len(data))
            code = toks[i + 1][0]
            if code not in vars_:
                raise VcdFormatError(f"unknown identifier {code!r}", toks[i + 1][1])
            current[code] = _parse_bits(tok[1:], off)
            i += 2
        elif c in "rR":
            raise VcdFormatError("real values are not supported", off)
        else:
            raise VcdFormatError(f"unexpected {tok!r}", off)
    if in_dump:
        raise VcdFormatError("unterminated dump section", dump_off)

    signals = {}
    for full, code, w in order:
        if full == clock or full in signals:
            continue
        m = (1 << w) - 1
        signals[full] = (w, tuple(s[code] & m for s in samples))
    return WaveformTrace(signals, len(samples), clock, timescale, top_scope or "top")
