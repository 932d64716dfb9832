"""Structured repair actions decoded from a solver model, and their prompt rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..rtl.source import SourceProject, Span


def local_name(signal: str) -> str:
    """Name of a flattened signal inside its own module."""
    return signal.rsplit(".", 1)[-1]


@dataclass(frozen=True)
class Literal:
    """One factor of a synthesized product term."""

    signal: str
    positive: bool = True

    def text(self) -> str:
        n = local_name(self.signal)
        return n if self.positive else f"!{n}"


def product_text(lits: tuple[Literal, ...]) -> str:
    if not lits:
        return "1'b1"
    return " && ".join(l.text() for l in lits)


@dataclass(frozen=True)
class RewriteLiteral:
    site: Span
    old_value: int
    new_value: int
    width: int


@dataclass(frozen=True)
class GuardCondition:
    """Replace condition ``c`` by ``(c or !c) op (product)``."""

    site: Span
    invert: bool
    op: str  # '&&' | '||'
    literals: tuple[Literal, ...]

    def new_condition(self, original: str) -> str:
        c = f"!({original})" if self.invert else f"({original})"
        if not self.literals:
            return c if self.op == "&&" else "1'b1"
        return f"{c} {self.op} ({product_text(self.literals)})"


@dataclass(frozen=True)
class OverwriteUnder:
    signal: str
    literals: tuple[Literal, ...]
    value: int
    width: int
    site: Optional[Span] = None

    @property
    def condition(self) -> str:
        return product_text(self.literals)


@dataclass(frozen=True)
class MakeRegistered:
    signal: str
    site: Optional[Span] = None


@dataclass(frozen=True)
class MakeCombinational:
    signal: str
    site: Optional[Span] = None


RepairAction = Union[RewriteLiteral, GuardCondition, OverwriteUnder, MakeRegistered, MakeCombinational]


@dataclass(frozen=True)
class SolverStats:
    time_ms: float
    result: str  # 'sat' | 'unsat' | 'timeout' | 'unknown'
    active_flags: Optional[int] = None
    runs: int = 0


@dataclass(frozen=True)
class RepairResult:
    template: str
    actions: tuple[RepairAction, ...]
    stats: SolverStats
    # values of every free constant in the chosen model (empty unless sat)
    model: dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def sat(self) -> bool:
        return self.stats.result == "sat"


def _where(site: Optional[Span]) -> str:
    return f"{site.file} line {site.line}, column {site.col}" if site else "(location unknown)"


def _snippet(site: Optional[Span], project: Optional[SourceProject]) -> str:
    if site is None or project is None or not project.has_file(site.file):
        return ""
    return site.text(project)


GUIDANCE = {
    "ReplaceLiteral": "Change only the listed constants and keep their notation (sized/unsized, base).",
    "AddGuard": ("Edit the existing condition in place; prefer extending an if/else branch condition "
                 "over inserting a new multiplexer."),
    "ConditionalOverwrite": ("Prefer adding the overwrite as a branch of the existing if/else or case "
                             "that drives the signal over inserting a separate multiplexer."),
    "CycleShift": ("A registered signal is assigned with nonblocking '<=' inside always @(posedge clk); "
                   "a combinational one with 'assign' or blocking '=' inside always @*."),
}


def actions_to_prompt(result: RepairResult, project: Optional[SourceProject] = None) -> str:
    """Describe ``result`` for the agent. Never edits source."""
    if not result.actions:
        raise ValueError("no repair actions to describe")
    lines = [f"SMT repair ({result.template}) found a fix with {len(result.actions)} change(s):"]
    for i, a in enumerate(result.actions, 1):
        if isinstance(a, RewriteLiteral):
            old = _snippet(a.site, project) or str(a.old_value)
            lines.append(f"{i}. At {_where(a.site)}: replace the constant `{old}` (value {a.old_value}) "
                         f"with value {a.new_value} ({a.width} bits).")
        elif isinstance(a, GuardCondition):
            orig = _snippet(a.site, project) or "<condition>"
            lines.append(f"{i}. At {_where(a.site)}: the condition `{orig}` should become "
                         f"`{a.new_condition(orig)}`.")
        elif isinstance(a, OverwriteUnder):
            n = local_name(a.signal)
            lines.append(f"{i}. Signal `{n}` (declared at {_where(a.site)}) must take the value "
                         f"{a.width}'d{a.value} whenever `{a.condition}` holds; otherwise keep its current logic.")
        elif isinstance(a, MakeRegistered):
            n = local_name(a.signal)
            lines.append(f"{i}. Signal `{n}` (declared at {_where(a.site)}) is combinational but must be "
                         f"registered: drive it from always @(posedge clk) with a nonblocking `<=` assignment "
                         f"and declare it as reg, so it changes one cycle later.")
        elif isinstance(a, MakeCombinational):
            n = local_name(a.signal)
            lines.append(f"{i}. Signal `{n}` (declared at {_where(a.site)}) is registered but must be "
                         f"combinational: compute it with a continuous assign or always @* using blocking "
                         f"`=`, so it changes in the same cycle.")
    lines.append("Constraint: " + GUIDANCE[result.template])
    lines.append("Keep the original coding style and emit exactly one patch.")
    return "\n".join(lines)
