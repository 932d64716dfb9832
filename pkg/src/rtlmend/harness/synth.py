"""Random-logic designs with one injected bug, for benchmarking the repair flow.

A design has a few data inputs, wires, one combinational block with an
if/else, a handful of registers and two outputs. Every internal signal
reaches an output. The bug is injected by mutating one expression tree (or
one storage kind) and re-rendering the module; a mutant that matches the
reference on the generated stimulus is rejected and resampled.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from ..rtl.elaborate import elaborate
from ..rtl.parser import parse_project
from ..rtl.source import RtlError, SourceProject, Span
from ..waveform import Testbench, WaveformTrace, compare, simulate, vcd_write
from .config import write_config

BUG_CLASSES = ("IncorrectBinaryOp", "DuplicatedExprItem", "NegateIfCondition", "AdditionalMinusOne",
               "MissingExprItem", "IncorrectReduceOp", "DelayedOneCycle", "AdvancedOneCycle")
MAX_ATTEMPTS = 100
TOP = "synth_top"
FILE = "design.v"
N_CYCLES = 48
RESET_CYCLES = 2
BIN_OPS = ("+", "-", "&", "|", "^")
RED_OPS = ("&", "|", "^")


class ResampleExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    width: int = 4
    n_inputs: tuple[int, int] = (2, 3)
    n_wires: tuple[int, int] = (2, 3)
    n_regs: tuple[int, int] = (2, 4)
    n_cycles: int = N_CYCLES


# expression trees: ("ref", name) | ("const", v) | ("chain", op, items) | ("red", op, e) | ("not", e)
#                   | ("bit", name, i) | ("minus1", e)
Tree = tuple


@dataclass
class Stmt:
    kind: str  # 'wire' | 'comb' | 'reg' | 'out'
    name: str
    exprs: list  # wire/out: [e]; comb: [cond, then, else]; reg: [e] or [enable, e]
    width: int
    accumulate: bool = False
    negated: set = field(default_factory=set)  # indices of negated conditions ('rst' for the reset test)
    storage: Optional[str] = None  # overrides the natural storage kind: 'reg' | 'comb'


@dataclass
class Design:
    params: GenParams
    inputs: list[str]
    stmts: list[Stmt]

    def copy(self) -> "Design":
        return Design(self.params, list(self.inputs),
                      [replace(s, exprs=list(s.exprs), negated=set(s.negated)) for s in self.stmts])


@dataclass(frozen=True)
class BugInjection:
    bug_class: str
    site: Span
    original: str
    mutated: str
    target: str

    def to_json(self) -> dict:
        s = self.site
        return {"class": self.bug_class, "target": self.target,
                "site": {"file": s.file, "start": s.start, "end": s.end, "line": s.line, "col": s.col},
                "original": self.original, "mutated": self.mutated}


@dataclass(frozen=True)
class SynthBench:
    reference: str
    buggy: str
    testbench: Testbench
    injection: BugInjection
    attempts: int


# -- generation ---------------------------------------------------------------

def _rand_expr(rng: random.Random, pool: list[str], w: int, depth: int = 2) -> Tree:
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.15:
            return ("const", rng.randrange(1, 1 << w))
        return ("ref", rng.choice(pool))
    n = 2 if rng.random() < 0.6 else 3
    return ("chain", rng.choice(BIN_OPS), [_rand_expr(rng, pool, w, depth - 1) for _ in range(n)])


def _rand_cond(rng: random.Random, pool: list[str], w: int) -> Tree:
    r = rng.random()
    pool = [x for x in pool if x != "s0"]
    if r < 0.4:
        return ("bit", rng.choice(pool), rng.randrange(w))
    if r < 0.7:
        return ("red", rng.choice(RED_OPS), ("ref", rng.choice(pool)))
    return ("ref", "s0")


def generate(rng: random.Random, params: GenParams = GenParams()) -> Design:
    w = params.width
    inputs = [f"a{i}" for i in range(rng.randint(*params.n_inputs))]
    regs = [f"r{i}" for i in range(rng.randint(*params.n_regs))]
    stmts: list[Stmt] = []
    avail = inputs + regs
    for i in range(rng.randint(*params.n_wires)):
        stmts.append(Stmt("wire", f"w{i}", [_rand_expr(rng, avail, w)], w))
        avail = avail + [f"w{i}"]
    stmts.append(Stmt("comb", "c0", [_rand_cond(rng, avail, w), _rand_expr(rng, avail, w, 1),
                                     _rand_expr(rng, avail, w, 1)], w))
    avail = avail + ["c0"]
    for r in regs:
        acc = rng.random() < 0.5
        # pipeline registers only read inputs and registers, so they can be made combinational safely
        pool = avail if acc else inputs + [x for x in regs if x != r]
        e = _rand_expr(rng, pool, w, 1)
        if acc:
            e = ("chain", rng.choice(("+", "^")), [("ref", r), e])
        exprs = [e] if rng.random() < 0.6 else [_rand_cond(rng, inputs, w), e]
        stmts.append(Stmt("reg", r, exprs, w, accumulate=acc))
    stmts.append(Stmt("out", "y0", [_rand_expr(rng, avail, w, 1)], w))
    stmts.append(Stmt("out", "y1", [("red", rng.choice(RED_OPS), _rand_expr(rng, avail, w, 1))], 1))
    d = Design(params, inputs, stmts)
    _make_observable(d)
    return d


def _refs(t: Tree, out: set) -> set:
    if t[0] == "ref" or t[0] == "bit":
        out.add(t[1])
    elif t[0] == "chain":
        for x in t[2]:
            _refs(x, out)
    elif t[0] in ("red", "not", "minus1"):
        _refs(t[-1], out)
    return out


def _make_observable(d: Design) -> None:
    used: set = set()
    for s in d.stmts:
        for e in s.exprs:
            _refs(e, used)
    # a signal only read by itself (an accumulator) is still unobservable
    for s in d.stmts:
        if s.accumulate and s.name in used:
            others: set = set()
            for t in d.stmts:
                if t.name != s.name:
                    for e in t.exprs:
                        _refs(e, others)
            if s.name not in others:
                used.discard(s.name)
    extra = [s.name for s in d.stmts if s.kind != "out" and s.name not in used]
    for n in d.inputs:
        if n not in used:
            extra.append(n)
    if extra:
        y0 = next(s for s in d.stmts if s.name == "y0")
        y0.exprs[0] = ("chain", "^", [y0.exprs[0]] + [("ref", n) for n in extra])


# -- rendering ----------------------------------------------------------------

def render_expr(t: Tree, w: int) -> str:
    k = t[0]
    if k == "ref":
        return t[1]
    if k == "const":
        return f"{w}'d{t[1]}"
    if k == "bit":
        return f"{t[1]}[{t[2]}]"
    if k == "chain":
        return "(" + f" {t[1]} ".join(render_expr(x, w) for x in t[2]) + ")"
    if k == "red":
        return f"{t[1]}{render_expr(t[2], w)}" if t[2][0] != "ref" else f"{t[1]}{t[2][1]}"
    if k == "not":
        return f"!({render_expr(t[1], w)})"
    if k == "minus1":
        return f"({render_expr(t[1], w)} - {w}'d1)"
    raise ValueError(f"bad tree {t!r}")


def _cond(t: Tree, w: int, negated: bool) -> str:
    c = render_expr(t, w)
    return f"!({c})" if negated else c


def render(d: Design) -> str:
    w = d.params.width
    rng_decl = f"[{w - 1}:0] "
    ports = ["input clk", "input rst", "input s0"] + [f"input {rng_decl}{a}" for a in d.inputs]
    ports += [f"output {rng_decl if s.width > 1 else ''}{s.name}" for s in d.stmts if s.kind == "out"]
    lines = [f"module {TOP}(", ",\n".join("  " + p for p in ports), ");"]
    # registers are read by earlier logic, so they are declared up front
    lines += [f"  reg {rng_decl}{s.name};" for s in d.stmts if s.kind == "reg"]
    for s in d.stmts:
        decl = rng_decl if s.width > 1 else ""
        if s.kind in ("wire", "out"):
            rhs = render_expr(s.exprs[0], w)
            if s.storage == "reg":
                if s.kind == "wire":
                    lines.append(f"  reg {decl}{s.name};")
                lines.append(f"  always @(posedge clk) {s.name} <= {rhs};")
            else:
                if s.kind == "wire":
                    lines.append(f"  wire {decl}{s.name};")
                lines.append(f"  assign {s.name} = {rhs};")
        elif s.kind == "comb":
            c, a, b = s.exprs
            head, op = ("always @(posedge clk)", "<=") if s.storage == "reg" else ("always @*", "=")
            lines += [f"  reg {decl}{s.name};", f"  {head} begin",
                      f"    if ({_cond(c, w, 0 in s.negated)}) {s.name} {op} {render_expr(a, w)};",
                      f"    else {s.name} {op} {render_expr(b, w)};", "  end"]
        else:
            if s.storage == "comb":
                # the reset has no meaning without a clock; the next-state logic becomes combinational
                e = s.exprs[-1]
                if len(s.exprs) == 2:
                    lines.append(f"  always @* {s.name} = {_cond(s.exprs[0], w, 0 in s.negated)} ? "
                                 f"{render_expr(e, w)} : {w}'d0;")
                else:
                    lines.append(f"  always @* {s.name} = {render_expr(e, w)};")
                continue
            lines.append("  always @(posedge clk) begin")
            lines.append(f"    if ({_cond(('ref', 'rst'), w, 'rst' in s.negated)}) {s.name} <= {w}'d0;")
            if len(s.exprs) == 2:
                lines.append(f"    else if ({_cond(s.exprs[0], w, 0 in s.negated)}) {s.name} <= "
                             f"{render_expr(s.exprs[1], w)};")
            else:
                lines.append(f"    else {s.name} <= {render_expr(s.exprs[0], w)};")
            lines.append("  end")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# -- mutation -----------------------------------------------------------------

def _paths(t: Tree, pred, path: tuple = ()) -> list[tuple]:
    out = [path] if pred(t) else []
    if t[0] == "chain":
        for i, x in enumerate(t[2]):
            out += _paths(x, pred, path + (i,))
    elif t[0] in ("red", "not", "minus1"):
        out += _paths(t[-1], pred, path + (0,))
    return out


def _get(t: Tree, path: tuple) -> Tree:
    for i in path:
        t = t[2][i] if t[0] == "chain" else t[-1]
    return t


def _put(t: Tree, path: tuple, new: Tree) -> Tree:
    if not path:
        return new
    i, rest = path[0], path[1:]
    if t[0] == "chain":
        items = list(t[2])
        items[i] = _put(items[i], rest, new)
        return ("chain", t[1], items)
    return t[:-1] + (_put(t[-1], rest, new),)


def _expr_slots(d: Design, conds: bool) -> list[tuple[int, int]]:
    """(statement, expression) indices of data expressions, or of conditions."""
    out = []
    for si, s in enumerate(d.stmts):
        for ei in range(len(s.exprs)):
            is_cond = (s.kind == "comb" and ei == 0) or (s.kind == "reg" and len(s.exprs) == 2 and ei == 0)
            if is_cond == conds:
                out.append((si, ei))
    return out


def _mutate_tree(rng: random.Random, d: Design, pred, fn, conds: bool = False) -> Optional[tuple[Design, str]]:
    cands = [(si, ei, p) for si, ei in _expr_slots(d, conds) for p in _paths(d.stmts[si].exprs[ei], pred)]
    if not cands:
        return None
    si, ei, p = rng.choice(cands)
    m = d.copy()
    t = m.stmts[si].exprs[ei]
    new = fn(_get(t, p))
    if new is None:
        return None
    m.stmts[si].exprs[ei] = _put(t, p, new)
    return m, m.stmts[si].name


def mutate(rng: random.Random, d: Design, bug_class: str) -> Optional[tuple[Design, str]]:
    """One random mutant of ``d`` and the name of the affected signal, or None if none applies."""
    w = d.params.width
    if bug_class == "IncorrectBinaryOp":
        return _mutate_tree(rng, d, lambda t: t[0] == "chain",
                            lambda t: ("chain", rng.choice([o for o in BIN_OPS if o != t[1]]), t[2]))
    if bug_class == "DuplicatedExprItem":
        def dup(t):
            items = list(t[2])
            i = rng.randrange(len(items))
            items.insert(i + 1, items[i])
            return ("chain", t[1], items)
        return _mutate_tree(rng, d, lambda t: t[0] == "chain", dup)
    if bug_class == "MissingExprItem":
        def drop(t):
            items = list(t[2])
            del items[rng.randrange(len(items))]
            return ("chain", t[1], items) if len(items) > 1 else items[0]
        return _mutate_tree(rng, d, lambda t: t[0] == "chain", drop)
    if bug_class == "AdditionalMinusOne":
        return _mutate_tree(rng, d, lambda t: t[0] in ("ref", "chain"), lambda t: ("minus1", t))
    if bug_class == "IncorrectReduceOp":
        fn = lambda t: ("red", rng.choice([o for o in RED_OPS if o != t[1]]), t[2])
        pred = lambda t: t[0] == "red"
        conds = rng.random() < 0.5
        return _mutate_tree(rng, d, pred, fn, conds) or _mutate_tree(rng, d, pred, fn, not conds)
    if bug_class == "NegateIfCondition":
        cands = [(si, 0) for si, s in enumerate(d.stmts)
                 if s.kind == "comb" or (s.kind == "reg" and len(s.exprs) == 2)]
        cands += [(si, "rst") for si, s in enumerate(d.stmts) if s.kind == "reg"]
        si, key = rng.choice(cands)
        m = d.copy()
        m.stmts[si].negated.add(key)
        return m, m.stmts[si].name
    if bug_class == "DelayedOneCycle":
        cands = [si for si, s in enumerate(d.stmts) if s.kind in ("wire", "comb")]
        si = rng.choice(cands)
        m = d.copy()
        m.stmts[si].storage = "reg"
        return m, m.stmts[si].name
    if bug_class == "AdvancedOneCycle":
        cands = [si for si, s in enumerate(d.stmts) if s.kind == "reg" and not s.accumulate]
        if not cands:
            return None
        si = rng.choice(cands)
        m = d.copy()
        m.stmts[si].storage = "comb"
        return m, m.stmts[si].name
    raise ValueError(f"unknown bug class {bug_class!r}")


# -- testbench ----------------------------------------------------------------

def _stimulus(rng: random.Random, d: Design) -> WaveformTrace:
    n, w = d.params.n_cycles, d.params.width
    sig = {"rst": (1, [1] * RESET_CYCLES + [0] * (n - RESET_CYCLES)),
           "s0": (1, [rng.randrange(2) for _ in range(n)])}
    for a in d.inputs:
        sig[a] = (w, [rng.randrange(1 << w) for _ in range(n)])
    return WaveformTrace.build(sig, n)


def _run(text: str, stim: WaveformTrace) -> WaveformTrace:
    proj = SourceProject.from_texts({FILE: text}, TOP)
    ts = elaborate(parse_project(proj), TOP)
    empty = WaveformTrace.build({}, stim.n_cycles)
    return simulate(ts, Testbench(stim, empty))


def diff_span(original: str, mutated: str) -> tuple[Span, str, str]:
    """The smallest region of ``original`` that differs, and both versions of it."""
    p = 0
    while p < min(len(original), len(mutated)) and original[p] == mutated[p]:
        p += 1
    s = 0
    while s < min(len(original), len(mutated)) - p and original[-1 - s] == mutated[-1 - s]:
        s += 1
    line = original.count("\n", 0, p) + 1
    col = p - (original.rfind("\n", 0, p) + 1) + 1
    span = Span(FILE, p, len(original) - s, line, col)
    return span, original[p:len(original) - s], mutated[p:len(mutated) - s]


def synth_bench(seed: int, bug_class: str, params: GenParams = GenParams()) -> SynthBench:
    """Generate a design, its testbench and one injected bug; deterministic in (seed, bug_class)."""
    if bug_class not in BUG_CLASSES:
        raise ValueError(f"unknown bug class {bug_class!r}; pick one of {', '.join(BUG_CLASSES)}")
    rng = random.Random(f"{seed}:{bug_class}")
    for attempt in range(1, MAX_ATTEMPTS + 1):
        d = generate(rng, params)
        ref = render(d)
        stim = _stimulus(rng, d)
        golden = _run(ref, stim)
        m = mutate(rng, d, bug_class)
        if m is None:
            continue
        md, target = m
        buggy = render(md)
        if buggy == ref:
            continue
        try:
            got = _run(buggy, stim)
        except RtlError:
            continue
        ok, _ = compare(got, golden)
        if ok:
            continue
        span, orig, mut = diff_span(ref, buggy)
        inj = BugInjection(bug_class, span, orig, mut, target)
        return SynthBench(ref, buggy, Testbench(stim, golden, name="random"), inj, attempt)
    raise ResampleExhausted(f"no behaviour-changing {bug_class} mutant in {MAX_ATTEMPTS} attempts (seed {seed})")


def write_bench(bench: SynthBench, out: Union[str, Path]) -> Path:
    out = Path(out)
    (out / "reference").mkdir(parents=True, exist_ok=True)
    (out / FILE).write_text(bench.buggy)
    (out / "reference" / FILE).write_text(bench.reference)
    (out / "stimulus.vcd").write_bytes(vcd_write(bench.testbench.stimulus))
    (out / "golden.vcd").write_bytes(vcd_write(bench.testbench.golden))
    rec = {**bench.injection.to_json(), "attempts": bench.attempts}
    (out / "bug.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    write_config(out / "config.toml", [FILE], TOP,
                 [{"name": "random", "stimulus": "stimulus.vcd", "golden": "golden.vcd", "clock": "clk"}],
                 extra='\n[llm]\nbackend = "live"\n')
    return out
