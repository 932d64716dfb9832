"""Structural lint checks over an elaborated design."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..rtl import ast as A
from ..rtl.elaborate import DesignInfo, TransitionSystem, analyze
from ..rtl.source import MultipleDrivers, Span


@dataclass(frozen=True, order=True)
class LintMessage:
    file: str
    line: int
    col: int
    code: str
    severity: str  # 'error' | 'warning'
    message: str
    signal: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.severity}: {self.code}: {self.message}"

    @property
    def location(self) -> tuple[str, int, int]:
        return self.file, self.line, self.col


def _at(span: Optional[Span], code: str, severity: str, message: str, signal: Optional[str]) -> LintMessage:
    if span is None:
        return LintMessage("<unknown>", 0, 0, code, severity, message, signal)
    return LintMessage(span.file, span.line, span.col, code, severity, message, signal)


def guess_top(modules: list[A.AstModule]) -> str:
    """The first module that no other module instantiates."""
    used = {n.module for m in modules for n in A.walk(m.items) if isinstance(n, A.Instance)}
    for m in modules:
        if m.name not in used:
            return m.name
    return modules[0].name


def _overlaps(a, b) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi


def check_design(info: DesignInfo) -> list[LintMessage]:
    out: list[LintMessage] = []
    inputs = set(info.top_inputs)
    outputs = set(info.top_outputs)
    for name, w in info.widths.items():
        drivers = info.drivers.get(name, [])
        decl = info.decl_spans.get(name)
        if name in inputs:
            if drivers:
                out.append(_at(drivers[0].span, "MULTI_DRIVEN", "error",
                               f"input {name} is also driven inside the design", name))
            continue
        clash = next((b for k, b in enumerate(drivers) for a in drivers[:k] if _overlaps(a, b)), None)
        if clash is not None:
            out.append(_at(clash.span, "MULTI_DRIVEN", "error", f"signal {name} has multiple drivers", name))
        if drivers:
            covered = [False] * w
            for d in drivers:
                for i in range(d.lo, d.hi + 1):
                    covered[i] = True
            missing = [i for i, c in enumerate(covered) if not c]
            if missing:
                out.append(_at(decl, "PART_DRIVEN", "warning",
                               f"bits {_ranges(missing)} of {name} are never driven", name))
        read = name in info.reads or name in outputs
        if read and not drivers and not _has_init(info, name):
            out.append(_at(decl, "UNDRIVEN", "warning", f"signal {name} is read but never driven", name))
        internal = info.kinds.get(name) in ("wire", "reg")
        if internal and drivers and name not in info.reads:
            out.append(_at(decl, "UNUSED", "warning", f"signal {name} is driven but never read", name))
    for w in info.width_warnings:
        target = f" to {w.signal}" if w.signal else ""
        out.append(_at(w.span, "WIDTH_MISMATCH", "warning", f"assignment{target}: {w.message}", w.signal))
    for name, span in info.latches.items():
        out.append(_at(span, "LATCH_INFERRED", "warning",
                       f"combinational block does not assign {name} on every path; a latch is inferred", name))
    err = info.error
    if isinstance(err, MultipleDrivers):
        # e.g. two blocks writing disjoint bits of one variable
        if not any(m.code == "MULTI_DRIVEN" and m.signal == err.signal for m in out):
            out.append(_at(err.span, "MULTI_DRIVEN", "error", f"signal {err.signal} has multiple drivers",
                           err.signal))
    elif err is not None:
        out.append(_at(err.span, err.code, "error", err.message, None))
    return out


def _has_init(info: DesignInfo, name: str) -> bool:
    ts = info.ts
    return ts is not None and ts.init.get(name, 0) != 0


def _ranges(bits: list[int]) -> str:
    groups = []
    start = prev = bits[0]
    for b in bits[1:]:
        if b != prev + 1:
            groups.append((start, prev))
            start = b
        prev = b
    groups.append((start, prev))
    return ", ".join(f"[{hi}:{lo}]" if hi != lo else f"[{lo}]" for lo, hi in reversed(groups))


def lint_project(ts: Optional[TransitionSystem], modules: list[A.AstModule],
                 top: Optional[str] = None) -> list[LintMessage]:
    """Run every custom check. Never raises for design defects.

    ``ts`` may be None when elaboration failed; the top module is then taken
    from ``top`` or guessed.
    """
    if not modules:
        return []
    top = top or (ts.top if ts is not None else guess_top(modules))
    info = analyze(modules, top)
    msgs = set(check_design(info))
    return sorted(msgs, key=lambda m: (m.file, m.line, m.col, m.code, m.message))


def render(msgs: list[LintMessage]) -> str:
    return "\n".join(str(m) for m in msgs)
