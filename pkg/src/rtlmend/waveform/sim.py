"""Cycle-based simulation of a transition system."""

from __future__ import annotations

from typing import Optional

from ..rtl import expr as E
from ..rtl.elaborate import TransitionSystem
from .trace import StimulusError, Testbench, WaveformTrace, compare


def _visible(name: str) -> bool:
    return "$" not in name


def simulate(ts: TransitionSystem, tb: Testbench, internal: bool = False,
             free_values: Optional[dict[str, int]] = None, n_cycles: Optional[int] = None) -> WaveformTrace:
    """Run ``ts`` under the stimulus of ``tb``.

    Per cycle: apply inputs, settle comb logic in order, sample, then update
    state. Free constants default to 0 unless given in ``free_values``.
    With ``internal`` set, every named wire and register is recorded too.
    """
    stim = tb.effective_stimulus()
    n = stim.n_cycles if n_cycles is None else min(n_cycles, stim.n_cycles)
    for name, w in ts.inputs.items():
        if name not in stim.signals:
            raise StimulusError(f"testbench does not drive input {name!r}")
        if stim.width(name) != w:
            raise StimulusError(f"input {name!r} is {w} bits, stimulus gives {stim.width(name)}")
    comb = [(name, E.compile_expr(e)) for name, e in ts.comb.items()]
    nxt = [(name, E.compile_expr(e)) for name, e in ts.next.items()]
    env: dict[str, int] = {}
    for name, w in ts.free.items():
        env[name] = (free_values or {}).get(name, 0) & E.mask(w)
    state = dict(ts.init)
    record = list(ts.outputs)
    if internal:
        seen = set(record)
        for name in list(ts.state_vars) + list(ts.comb):
            if name not in seen and _visible(name):
                record.append(name)
                seen.add(name)
    widths = ts.widths()
    cols: dict[str, list[int]] = {name: [] for name in record}
    inputs = [(name, stim.values(name)) for name in ts.inputs]
    for t in range(n):
        env.update(state)
        for name, vals in inputs:
            env[name] = vals[t]
        for name, f in comb:
            env[name] = f(env)
        for name in record:
            cols[name].append(env[name])
        state = {name: f(env) for name, f in nxt}
    clock = ts.clock or stim.clock_name
    return WaveformTrace({name: (widths[name], tuple(cols[name])) for name in record}, n, clock,
                         stim.timescale, ts.top)


def run_and_compare(ts: TransitionSystem, tb: Testbench, free_values: Optional[dict[str, int]] = None):
    got = simulate(ts, tb, free_values=free_values)
    return compare(got, tb.golden)
