"""Textual waveform diff for agents, with mismatching cells marked ``>>v<<``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .trace import Mismatch, WaveformTrace, compare

DEFAULT_WINDOW = 32
DEFAULT_MAX_WIDTH = 64
# shown instead of a value for mismatching cells of suppressed (too wide) signals
HIDDEN_MARK = ">>!<<"


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class DiffReport:
    window: tuple[int, int]  # [start, end)
    rows: dict[str, tuple[str, ...]]
    expected_rows: dict[str, tuple[str, ...]]
    mismatches: tuple[Mismatch, ...]
    suppressed: tuple[tuple[str, str], ...]
    text: str

    def marked_cells(self) -> set[tuple[str, int]]:
        out = set()
        for name, cells in self.rows.items():
            for k, c in enumerate(cells):
                if c.startswith(">>") and c.endswith("<<"):
                    out.add((name, self.window[0] + k))
        return out


def _fmt(v: int, w: int) -> str:
    if w == 1:
        return str(v)
    if w <= 4:
        return format(v, f"0{w}b")
    return format(v, "x")


def default_window(n_cycles: int, mismatches: list[Mismatch], size: int = DEFAULT_WINDOW) -> tuple[int, int]:
    if n_cycles == 0:
        return 0, 0
    center = mismatches[0].cycle if mismatches else 0
    start = max(0, center - size // 2)
    end = min(n_cycles, start + size)
    return max(0, end - size), end


def diff_view(got: WaveformTrace, golden: WaveformTrace, window: Optional[tuple[int, int]] = None,
              max_width_shown: int = DEFAULT_MAX_WIDTH, max_signals: Optional[int] = None) -> DiffReport:
    """Render ``got`` against ``golden`` over ``window`` (default: around the first mismatch)."""
    _, mism = compare(got, golden)
    if window is None:
        window = default_window(golden.n_cycles, mism)
    start, end = window
    if not (0 <= start <= end <= golden.n_cycles) or (start == end and golden.n_cycles > 0):
        raise WindowError(f"window [{start}, {end}) outside 0..{golden.n_cycles}")
    in_win = tuple(m for m in mism if start <= m.cycle < end)
    bad = {(m.signal, m.cycle) for m in in_win}
    bad_signals = {m.signal for m in in_win}
    names = sorted(golden.signals, key=lambda n: (n not in bad_signals, n))
    suppressed = []
    if max_signals is not None and len(names) > max_signals:
        for n in names[max_signals:]:
            suppressed.append((n, "signal limit"))
        names = names[:max_signals]
    rows: dict[str, tuple[str, ...]] = {}
    expected: dict[str, tuple[str, ...]] = {}
    for n in names:
        w = golden.width(n)
        wide = w > max_width_shown
        if wide:
            suppressed.append((n, f"{w} bits wider than {max_width_shown}"))
        cells = []
        for t in range(start, end):
            v = got.at(n, t)
            if (n, t) in bad:
                cells.append(HIDDEN_MARK if wide else f">>{_fmt(v, w)}<<")
            else:
                cells.append("." if wide else _fmt(v, w))
        rows[n] = tuple(cells)
        if n in bad_signals and not wide:
            expected[n] = tuple(_fmt(golden.at(n, t), w) for t in range(start, end))
    suppressed.sort()
    text = _render(start, end, rows, expected, golden)
    return DiffReport((start, end), rows, expected, in_win, tuple(suppressed), text)


def _render(start: int, end: int, rows, expected, golden: WaveformTrace) -> str:
    label_rows = []
    for n, cells in rows.items():
        label_rows.append((f"{n}[{golden.width(n)}]", cells))
        if n in expected:
            label_rows.append(("  expected", expected[n]))
    header = ("cycle", tuple(str(t) for t in range(start, end)))
    all_rows = [header] + label_rows
    lw = max(len(r[0]) for r in all_rows)
    colw = [max(len(r[1][k]) for r in all_rows) for k in range(end - start)]
    lines = []
    for label, cells in all_rows:
        parts = [label.ljust(lw)] + [c.rjust(colw[k]) for k, c in enumerate(cells)]
        lines.append(" ".join(parts).rstrip())
    return "\n".join(lines) + "\n"
