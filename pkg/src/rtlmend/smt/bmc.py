"""Bounded model checking encoding of a transition system against testbenches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from ..rtl import expr as E
from ..rtl.elaborate import TransitionSystem
from ..waveform.trace import StimulusError, Testbench
from .smtlib import TIME, bv, render, sym

DEFAULT_HORIZON_CAP = 256


class HorizonError(ValueError):
    pass


@dataclass(frozen=True)
class SmtScript:
    """Declarations and assertions, without any ``check-sat`` command."""

    text: str
    horizon: int
    free: dict[str, int] = field(default_factory=dict)
    n_testbenches: int = 1


def default_horizon(tbs: Sequence[Testbench], cap: int = DEFAULT_HORIZON_CAP) -> int:
    return min(min(tb.n_cycles for tb in tbs), cap)


def _templates(ts: TransitionSystem) -> tuple[dict[str, str], dict[str, str]]:
    """Render every comb and next function once with a time placeholder."""
    free = ts.free

    def ref(r: E.Ref) -> str:
        if r.name in free:
            return sym(r.name)
        return sym(f"{r.name}@{TIME}")

    comb = {n: render(e, ref) for n, e in ts.comb.items()}
    nxt = {n: render(e, ref) for n, e in ts.next.items()}
    return comb, nxt


def encode_bmc(ts: TransitionSystem, tb: Union[Testbench, Sequence[Testbench]],
               horizon: Optional[int] = None) -> SmtScript:
    """Unroll ``ts`` for ``horizon`` transitions under each testbench.

    State variables exist for cycles ``0..horizon``; inputs, comb signals and
    output checks for cycles ``0..min(horizon, n_cycles - 1)``. With several
    testbenches each copy gets its own name prefix and free constants are
    shared.
    """
    tbs = [tb] if isinstance(tb, Testbench) else list(tb)
    if not tbs:
        raise HorizonError("no testbench given")
    if horizon is None:
        horizon = default_horizon(tbs)
    for t in tbs:
        if horizon < 0 or horizon > t.n_cycles:
            raise HorizonError(f"horizon {horizon} outside 0..{t.n_cycles}")
    comb_t, next_t = _templates(ts)
    widths = ts.widths()
    lines = ["(set-logic QF_BV)", "(set-option :produce-models true)"]
    for name, w in ts.free.items():
        lines.append(f"(declare-const {sym(name)} (_ BitVec {w}))")
    multi = len(tbs) > 1
    for k, t in enumerate(tbs):
        prefix = f"tb{k}." if multi else ""
        lines.append(f"; testbench {k}" + (f" ({t.name})" if t.name else ""))
        lines += _unroll(ts, t, horizon, prefix, comb_t, next_t, widths)
    return SmtScript("\n".join(lines) + "\n", horizon, dict(ts.free), len(tbs))


def _unroll(ts, tb: Testbench, horizon: int, prefix: str, comb_t, next_t, widths) -> list[str]:
    stim = tb.effective_stimulus()
    golden = tb.golden
    for name, w in ts.inputs.items():
        if name not in stim.signals:
            raise StimulusError(f"testbench does not drive input {name!r}")
        if stim.width(name) != w:
            raise StimulusError(f"input {name!r} is {w} bits, stimulus gives {stim.width(name)}")
    last = min(horizon, tb.n_cycles - 1)

    def at(name: str, t: int) -> str:
        return sym(f"{prefix}{name}@{t}")

    def inst(template: str, t: int) -> str:
        return _instantiate(template, t, prefix, ts.free)

    lines = []
    for t in range(horizon + 1):
        for name, w in ts.state_vars.items():
            lines.append(f"(declare-const {at(name, t)} (_ BitVec {w}))")
        if t == 0:
            for name, w in ts.state_vars.items():
                lines.append(f"(assert (= {at(name, 0)} {bv(w, ts.init.get(name, 0))}))")
        if t <= last:
            for name, w in ts.inputs.items():
                lines.append(f"(declare-const {at(name, t)} (_ BitVec {w}))")
                lines.append(f"(assert (= {at(name, t)} {bv(w, stim.at(name, t))}))")
            for name, tpl in comb_t.items():
                lines.append(f"(declare-const {at(name, t)} (_ BitVec {widths[name]}))")
                lines.append(f"(assert (= {at(name, t)} {inst(tpl, t)}))")
            for name in golden.signals:
                if name not in widths:
                    raise StimulusError(f"golden signal {name!r} is not part of the design")
                if golden.width(name) != widths[name]:
                    raise StimulusError(f"golden {name!r} is {golden.width(name)} bits, design has {widths[name]}")
                lines.append(f"(assert (= {at(name, t)} {bv(widths[name], golden.at(name, t))}))")
        if t > 0:
            for name, tpl in next_t.items():
                lines.append(f"(assert (= {at(name, t)} {inst(tpl, t - 1)}))")
    return lines


def _instantiate(template: str, t: int, prefix: str, free: dict[str, int]) -> str:
    out = template.replace(f"@{TIME}|", f"@{t}|")
    if not prefix:
        return out
    # quoted symbols sit at odd positions; free constants are shared and keep their names
    parts = out.split("|")
    for i in range(1, len(parts), 2):
        if parts[i] not in free:
            parts[i] = prefix + parts[i]
    return "|".join(parts)
