"""Tabular stimulus format.

The first non-comment line lists signal names, optionally as ``name:width``.
Every further line holds one cycle: whitespace-separated values written in
binary (``0101`` or ``0b0101``) or hex (``0x5``). ``#`` starts a comment.
"""

from __future__ import annotations

from typing import Optional

from .trace import ShapeError, WaveformTrace


class TableFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_value(tok: str, line: int) -> int:
    t = tok.lower().replace("_", "")
    try:
        if t.startswith("0x"):
            return int(t[2:], 16)
        if t.startswith("0b"):
            t = t[2:]
        if t and all(c in "01" for c in t):
            return int(t, 2)
    except ValueError:
        pass
    raise TableFormatError(f"bad value {tok!r}", line)


def read_table(text: str, widths: Optional[dict[str, int]] = None, clock_name: str = "clk") -> WaveformTrace:
    header: Optional[list[tuple[str, Optional[int]]]] = None
    rows: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if header is None:
            header = []
            for t in toks:
                name, _, w = t.partition(":")
                try:
                    width = int(w) if w else None
                except ValueError:
                    raise TableFormatError(f"bad width in {t!r}", lineno) from None
                header.append((name, width))
            continue
        if len(toks) != len(header):
            raise TableFormatError(f"expected {len(header)} values, found {len(toks)}", lineno)
        rows.append([_parse_value(t, lineno) for t in toks])
    if header is None:
        raise TableFormatError("missing header line", 1)
    signals = {}
    for k, (name, w) in enumerate(header):
        vals = [r[k] for r in rows]
        if w is None:
            w = (widths or {}).get(name) or max([1] + [v.bit_length() for v in vals])
        if any(v >> w for v in vals):
            raise ShapeError(f"{name}: value does not fit {w} bits")
        signals[name] = (w, tuple(vals))
    return WaveformTrace(signals, len(rows), clock_name)


def write_table(trace: WaveformTrace) -> str:
    names = list(trace.signals)
    lines = [" ".join(f"{n}:{trace.width(n)}" for n in names)]
    for t in range(trace.n_cycles):
        cells = []
        for n in names:
            w, v = trace.width(n), trace.at(n, t)
            cells.append(format(v, f"0{w}b") if w <= 8 else f"0x{v:x}")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"
