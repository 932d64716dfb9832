"""Waveform traces and testbenches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional


class ShapeError(ValueError):
    pass


class StimulusError(ValueError):
    pass


@dataclass(frozen=True)
class WaveformTrace:
    """Per-cycle values of a set of signals.

    ``signals`` maps a name to ``(width, values)``; ``values[t]`` is the value
    sampled in cycle ``t``.
    """

    signals: dict[str, tuple[int, tuple[int, ...]]]
    n_cycles: int
    clock_name: str = "clk"
    timescale: str = "1ns"
    scope: str = "top"

    def __post_init__(self):
        if self.n_cycles < 0:
            raise ShapeError("negative cycle count")
        for name, (w, vals) in self.signals.items():
            if w <= 0:
                raise ShapeError(f"{name}: width must be positive")
            if len(vals) != self.n_cycles:
                raise ShapeError(f"{name}: {len(vals)} values for {self.n_cycles} cycles")
            lim = 1 << w
            for v in vals:
                if not 0 <= v < lim:
                    raise ShapeError(f"{name}: value {v} does not fit {w} bits")

    @classmethod
    def build(cls, signals: dict[str, tuple[int, Iterable[int]]], n_cycles: Optional[int] = None,
              **kw) -> "WaveformTrace":
        sig = {k: (w, tuple(int(x) for x in v)) for k, (w, v) in signals.items()}
        if n_cycles is None:
            n_cycles = len(next(iter(sig.values()))[1]) if sig else 0
        return cls(sig, n_cycles, **kw)

    def width(self, name: str) -> int:
        return self.signals[name][0]

    def values(self, name: str) -> tuple[int, ...]:
        return self.signals[name][1]

    def at(self, name: str, cycle: int) -> int:
        return self.signals[name][1][cycle]

    def restrict(self, names: Iterable[str]) -> "WaveformTrace":
        names = list(names)
        missing = [n for n in names if n not in self.signals]
        if missing:
            raise ShapeError(f"trace lacks signals {missing}")
        return WaveformTrace({n: self.signals[n] for n in names}, self.n_cycles, self.clock_name,
                             self.timescale, self.scope)

    def prefix(self, n: int) -> "WaveformTrace":
        n = min(n, self.n_cycles)
        return WaveformTrace({k: (w, v[:n]) for k, (w, v) in self.signals.items()}, n, self.clock_name,
                             self.timescale, self.scope)

    def merge(self, other: "WaveformTrace") -> "WaveformTrace":
        if other.n_cycles != self.n_cycles:
            raise ShapeError("cannot merge traces of different lengths")
        sig = dict(self.signals)
        sig.update(other.signals)
        return WaveformTrace(sig, self.n_cycles, self.clock_name, self.timescale, self.scope)


@dataclass(frozen=True)
class ResetSpec:
    signal: str
    active_value: int
    cycles: int


@dataclass(frozen=True)
class Testbench:
    __test__ = False  # not a pytest class

    stimulus: WaveformTrace
    golden: WaveformTrace
    reset_spec: Optional[ResetSpec] = None
    name: str = field(default="tb", compare=False)

    def __post_init__(self):
        if self.stimulus.n_cycles != self.golden.n_cycles:
            raise ShapeError(f"stimulus has {self.stimulus.n_cycles} cycles, golden has {self.golden.n_cycles}")

    @property
    def n_cycles(self) -> int:
        return self.stimulus.n_cycles

    def effective_stimulus(self) -> WaveformTrace:
        """Stimulus with the reset signal forced active for the first ``cycles`` cycles."""
        r = self.reset_spec
        if r is None or r.signal not in self.stimulus.signals:
            return self.stimulus
        w, vals = self.stimulus.signals[r.signal]
        n = min(r.cycles, len(vals))
        forced = tuple([r.active_value & ((1 << w) - 1)] * n) + vals[n:]
        sig = dict(self.stimulus.signals)
        sig[r.signal] = (w, forced)
        return WaveformTrace(sig, self.stimulus.n_cycles, self.stimulus.clock_name, self.stimulus.timescale,
                             self.stimulus.scope)


class Mismatch(NamedTuple):
    signal: str
    cycle: int
    got: int
    expected: int


def compare(got: WaveformTrace, golden: WaveformTrace) -> tuple[bool, list[Mismatch]]:
    """Compare ``got`` against every signal of ``golden``.

    ``got`` may carry extra signals (e.g. internal ones); each golden signal
    must be present with the same width, and lengths must agree.
    """
    if got.n_cycles != golden.n_cycles:
        raise ShapeError(f"got {got.n_cycles} cycles, golden has {golden.n_cycles}")
    out = []
    for name, (w, exp) in golden.signals.items():
        if name not in got.signals:
            raise ShapeError(f"signal {name!r} missing from trace")
        gw, vals = got.signals[name]
        if gw != w:
            raise ShapeError(f"signal {name!r} is {gw} bits, golden is {w} bits")
        for t, (a, b) in enumerate(zip(vals, exp)):
            if a != b:
                out.append(Mismatch(name, t, a, b))
    out.sort(key=lambda m: (m.cycle, m.signal))
    return not out, out
