"""The RTL toolbox agents act through, and the design state it works on."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from ..lint import LintMessage, lint_project, render, run_external_linter
from ..rtl import ast as A
from ..rtl.elaborate import TransitionSystem, elaborate
from ..rtl.parser import parse_project
from ..rtl.source import Edit, Patch, RangeError, RtlError, SourceProject
from ..smt import (FallbackError, RepairResult, RepairTemplate, SolverConfig, TargetNotFound, actions_to_prompt,
                   mechanical_patch, resolve_targets, solve_repair)
from ..smt.solver import SolverProcessError
from ..waveform import Testbench, WaveformTrace, compare, diff_view, simulate
from ..waveform.diff import WindowError, default_window

NAV_TOOLS = ("read_file", "query_def", "query_ref")
MAIN_TOOLS = ("read_file", "edit_file", "run_sim", "diff_waveform", "ask_context_agent", "smt_repair",
              "propose_hypothesis", "emit_patch", "give_up_hypothesis")
LINT_FIX_TOOLS = ("read_file", "query_def", "query_ref", "emit_patch")
ALL_TOOLS = MAIN_TOOLS + ("run_lint", "query_def", "query_ref")
TOOLS_BY_KIND = {"main": MAIN_TOOLS, "context": NAV_TOOLS, "lint_fix": LINT_FIX_TOOLS}

READ_LIMIT = 400


def tool_header(name: str) -> str:
    """First line of every tool result; lets transcripts be scanned for raw tool output."""
    return f"[{name}]"


@dataclass
class SimResult:
    name: str
    passed: bool
    mismatches: list
    trace: Optional[WaveformTrace] = None
    error: Optional[str] = None


@dataclass
class SimReport:
    results: list[SimResult]

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def all_pass(self) -> bool:
        return self.passed == self.total

    def summary(self) -> str:
        lines = [f"{self.passed}/{self.total} testbenches pass."]
        for r in self.results:
            if r.error:
                lines.append(f"  {r.name}: ERROR {r.error}")
            elif not r.passed:
                m = r.mismatches[0]
                lines.append(f"  {r.name}: FAIL, {len(r.mismatches)} mismatching cell(s); first: {m.signal} at "
                             f"cycle {m.cycle} got {m.got} expected {m.expected}")
            else:
                lines.append(f"  {r.name}: pass")
        return "\n".join(lines)


@dataclass
class Workspace:
    """Current code plus the fixed testbenches and tool settings."""

    project: SourceProject
    testbenches: list[Testbench]
    solver: SolverConfig = field(default_factory=SolverConfig)
    lint_cmd: Optional[str] = None
    lint_regex: Optional[str] = None
    last_smt: Optional[RepairResult] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def set_project(self, project: SourceProject) -> None:
        self.project = project
        self.last_smt = None

    def _cached(self, key: str, fn):
        k = (key, self.project)
        if k not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            try:
                self._cache[k] = (fn(), None)
            except RtlError as e:
                self._cache[k] = (None, e)
        val, err = self._cache[k]
        if err is not None:
            raise err
        return val

    def modules(self) -> list[A.AstModule]:
        return self._cached("modules", lambda: parse_project(self.project))

    def design(self) -> TransitionSystem:
        return self._cached("ts", lambda: elaborate(self.modules(), self.project.top_module))

    def simulate_all(self) -> SimReport:
        try:
            ts = self.design()
        except RtlError as e:
            return SimReport([SimResult(tb.name, False, [], None, str(e)) for tb in self.testbenches])
        out = []
        for tb in self.testbenches:
            try:
                got = simulate(ts, tb, internal=True)
                ok, mism = compare(got, tb.golden)
                out.append(SimResult(tb.name, ok, mism, got))
            except ValueError as e:
                out.append(SimResult(tb.name, False, [], None, str(e)))
        return SimReport(out)

    def lint(self) -> list[LintMessage]:
        try:
            mods = self.modules()
        except RtlError as e:
            d = e.diagnostic
            return [LintMessage(d.file, d.line, d.col, d.code, "error", d.message, None)]
        try:
            ts = self.design()
        except RtlError:
            ts = None
        msgs = lint_project(ts, mods, self.project.top_module)
        if self.lint_cmd:
            msgs = sorted(set(msgs) | set(run_external_linter(self.project, self.lint_cmd, self.lint_regex)))
        return msgs


# -- patch arguments ---------------------------------------------------------

class PatchArgsError(ValueError):
    pass


def patch_from_args(ws: Workspace, args: dict, provenance: str = "agent") -> Patch:
    """Build a patch from ``{file, old, new}`` or ``{edits: [...]}`` arguments.

    Each ``old`` text must occur exactly once in its file.
    """
    if args.get("use_smt_result"):
        if ws.last_smt is None or not ws.last_smt.actions:
            raise PatchArgsError("there is no SMT repair result to apply")
        try:
            return mechanical_patch(ws.project, ws.last_smt.actions, _clock(ws))
        except (FallbackError, RtlError) as e:
            raise PatchArgsError(f"cannot apply the SMT result mechanically: {e}") from e
    items = args.get("edits")
    if items is None:
        items = [args]
    if not isinstance(items, list) or not items:
        raise PatchArgsError("emit_patch needs 'file', 'old' and 'new', or a list of them under 'edits'")
    edits = []
    for it in items:
        if not isinstance(it, dict):
            raise PatchArgsError("each edit must be an object")
        path, old, new = it.get("file"), it.get("old"), it.get("new")
        if path is None and len(ws.project.paths) == 1:
            path = ws.project.paths[0]
        if not isinstance(path, str) or not isinstance(old, str) or not isinstance(new, str):
            raise PatchArgsError("each edit needs string fields 'file', 'old' and 'new'")
        if not ws.project.has_file(path):
            raise PatchArgsError(f"unknown file {path!r}")
        text = ws.project.text(path)
        i = text.find(old) if old else -1
        if i < 0:
            raise PatchArgsError(f"text to replace not found in {path}")
        if text.find(old, i + 1) >= 0:
            raise PatchArgsError(f"text to replace occurs more than once in {path}; include more context")
        edits.append(Edit(path, i, i + len(old), new))
    desc = str(args.get("description", ""))
    return Patch(tuple(edits), provenance, desc)


def _clock(ws: Workspace) -> Optional[str]:
    try:
        return ws.design().clock
    except RtlError:
        return None


# -- tools -------------------------------------------------------------------

def read_file(ws: Workspace, args: dict) -> str:
    path = args.get("path") or args.get("file")
    if not isinstance(path, str) or not ws.project.has_file(path):
        return f"file {path!r} not found; files: {', '.join(ws.project.paths)}"
    lines = ws.project.text(path).splitlines()
    start = max(1, int(args.get("start", 1) or 1))
    end = min(len(lines), int(args.get("end", start + READ_LIMIT - 1) or len(lines)))
    end = min(end, start + READ_LIMIT - 1)
    body = "\n".join(f"{i:4d}| {lines[i - 1]}" for i in range(start, end + 1))
    more = f"\n... ({len(lines) - end} more lines)" if end < len(lines) else ""
    return f"{path} lines {start}-{end}:\n{body}{more}"


def _line(ws: Workspace, file: str, line: int) -> str:
    lines = ws.project.text(file).splitlines()
    return lines[line - 1].strip() if 0 < line <= len(lines) else ""


def query_def(ws: Workspace, args: dict) -> str:
    name = str(args.get("name", "")).split(".")[-1]
    try:
        mods = ws.modules()
    except RtlError as e:
        return f"cannot parse the design: {e}"
    hits = []
    for m in mods:
        if m.name == name:
            hits.append((m.name_span, f"module {m.name}"))
        for p in m.ports:
            if p.name == name:
                hits.append((p.name_span, f"{p.direction} port of module {m.name}"))
        for d in m.decls:
            if d.name == name:
                hits.append((d.name_span, f"{d.kind} in module {m.name}"))
        for p in m.params:
            if p.name == name:
                hits.append((p.span, f"parameter of module {m.name}"))
        for it in A.walk(m.items):
            if isinstance(it, A.ParamDecl) and it.name == name:
                hits.append((it.span, f"parameter of module {m.name}"))
            elif isinstance(it, A.Instance) and it.name == name:
                hits.append((it.span, f"instance of {it.module} in module {m.name}"))
    if not hits:
        return f"{name}: not found"
    out = []
    for span, what in hits:
        out.append(f"{span.file}:{span.line}: {what}: {_line(ws, span.file, span.line)}")
    drivers = _driver_lines(ws, mods, name)
    if drivers:
        out.append("driven at:")
        out += drivers
    return "\n".join(dict.fromkeys(out))


def _lhs_names(e) -> list[str]:
    if isinstance(e, A.Ident):
        return [e.name]
    if isinstance(e, (A.Index, A.RangeSel, A.IndexedSel)):
        return _lhs_names(e.base)
    if isinstance(e, A.ConcatExpr):
        return [n for p in e.parts for n in _lhs_names(p)]
    return []


def _driver_lines(ws: Workspace, mods, name: str) -> list[str]:
    out = []
    for m in mods:
        for n in A.walk(m.items):
            if isinstance(n, (A.AssignStmt, A.ContinuousAssign)) and name in _lhs_names(n.lhs):
                s = n.span
                out.append(f"  {s.file}:{s.line}: {_line(ws, s.file, s.line)}")
    return list(dict.fromkeys(out))


def query_ref(ws: Workspace, args: dict) -> str:
    name = str(args.get("name", "")).split(".")[-1]
    try:
        mods = ws.modules()
    except RtlError as e:
        return f"cannot parse the design: {e}"
    sites = []
    for m in mods:
        for n in A.walk(m.items):
            if isinstance(n, A.Ident) and n.name == name:
                sites.append((n.span.file, n.span.line))
            elif isinstance(n, A.Connection) and n.port == name:
                sites.append((n.span.file, n.span.line))
    if not sites:
        return f"{name}: not found"
    out = [f"{f}:{l}: {_line(ws, f, l)}" for f, l in sorted(set(sites))]
    return f"{len(out)} line(s) reference {name}:\n" + "\n".join(out)


def run_sim(ws: Workspace, args: dict) -> str:
    return ws.simulate_all().summary()


def _fmt(v: int, w: int) -> str:
    if w == 1:
        return str(v)
    if w <= 4:
        return format(v, f"0{w}b")
    return format(v, "x")


def diff_waveform(ws: Workspace, args: dict) -> str:
    rep = ws.simulate_all()
    idx = args.get("testbench")
    if idx is None:
        idx = next((i for i, r in enumerate(rep.results) if not r.passed), 0)
    try:
        r = rep.results[int(idx)]
        tb = ws.testbenches[int(idx)]
    except (IndexError, ValueError, TypeError):
        return f"no testbench {idx!r}; there are {rep.total}"
    if r.trace is None:
        return f"{r.name}: cannot simulate: {r.error}"
    if "start" in args or "end" in args:
        start = int(args.get("start", 0))
        end = int(args.get("end", min(tb.n_cycles, start + 32)))
        window = (start, end)
    else:
        window = default_window(tb.n_cycles, r.mismatches)
    try:
        d = diff_view(r.trace, tb.golden, window)
    except WindowError as e:
        return str(e)
    extra = args.get("signals")
    if not isinstance(extra, list):
        extra = [n for n in tb.effective_stimulus().signals] + [n for n in r.trace.signals
                                                                  if n not in tb.golden.signals]
    stim = tb.effective_stimulus()
    rows = []
    for n in extra[:24]:
        src = r.trace if n in r.trace.signals else stim if n in stim.signals else None
        if src is None or n in tb.golden.signals:
            continue
        w = src.width(n)
        rows.append((f"{n}[{w}]", [_fmt(src.at(n, t), w) for t in range(*d.window)]))
    text = f"{r.name}, cycles {d.window[0]}..{d.window[1] - 1} (>>v<< marks a wrong output)\n{d.text}"
    if rows:
        lw = max(len(a) for a, _ in rows)
        text += "inputs and internal signals:\n" + "\n".join(
            (a.ljust(lw) + " " + " ".join(cells)).rstrip() for a, cells in rows) + "\n"
    return text


def run_lint(ws: Workspace, args: dict) -> str:
    msgs = ws.lint()
    return render(msgs) if msgs else "no lint messages"


def smt_repair(ws: Workspace, args: dict) -> str:
    kind = args.get("template")
    targets = args.get("targets") or []
    if isinstance(targets, str):
        targets = [targets]
    try:
        ts = ws.design()
        tpl = RepairTemplate(str(kind), resolve_targets(str(kind), [str(t) for t in targets], ts))
        res = solve_repair(ts, ws.testbenches, tpl, ws.solver, ws.project)
    except (ValueError, RtlError, SolverProcessError) as e:
        return f"SMT repair could not run: {e}"
    ws.last_smt = res
    if not res.actions:
        if res.sat:
            return "SMT repair: the design already satisfies the testbenches under this template (no change needed)."
        return f"SMT repair ({kind}) found no fix: solver answered {res.stats.result}."
    return actions_to_prompt(res, ws.project)


IMPLS = {"read_file": read_file, "query_def": query_def, "query_ref": query_ref, "run_sim": run_sim,
         "diff_waveform": diff_waveform, "run_lint": run_lint, "smt_repair": smt_repair}


def run_tool(ws: Workspace, name: str, args: dict) -> str:
    """Run a non-control tool and return its text result."""
    fn = IMPLS.get(name)
    if fn is None:
        raise KeyError(name)
    return f"{tool_header(name)}\n{fn(ws, args)}"


# -- schemas for native function calling ---------------------------------------

def _obj(props: dict, required: list[str]) -> dict:
    return {"type": "object", "properties": props, "required": required}


_S = {"type": "string"}
_I = {"type": "integer"}
_EDIT = _obj({"file": _S, "old": _S, "new": _S}, ["old", "new"])

SCHEMAS = {
    "read_file": ("Read lines of a source file.", _obj({"path": _S, "start": _I, "end": _I}, ["path"])),
    "edit_file": ("Replace one unique piece of text in a file (applied as this iteration's patch).", _EDIT),
    "run_sim": ("Simulate all testbenches and report pass/fail.", _obj({}, [])),
    "diff_waveform": ("Show simulated outputs against the golden trace over a cycle window.",
                      _obj({"testbench": _I, "start": _I, "end": _I, "signals": {"type": "array", "items": _S}},
                           [])),
    "ask_context_agent": ("Ask the context agent a question about the code.", _obj({"question": _S},
                                                                                    ["question"])),
    "smt_repair": ("Run SMT-based repair with one template on the given targets.",
                   _obj({"template": {"type": "string", "enum": ["ReplaceLiteral", "AddGuard",
                                                                 "ConditionalOverwrite", "CycleShift"]},
                         "targets": {"type": "array", "items": _S}}, ["template", "targets"])),
    "propose_hypothesis": ("Record a new root-cause hypothesis and stop working on the current one.",
                           _obj({"text": _S}, ["text"])),
    "emit_patch": ("Emit one patch: text replacements, or use_smt_result to apply the last SMT repair.",
                   _obj({"file": _S, "old": _S, "new": _S, "edits": {"type": "array", "items": _EDIT},
                         "use_smt_result": {"type": "boolean"}, "description": _S,
                         "suppress": {"type": "array", "items": _obj({"index": _I, "reason": _S},
                                                                     ["index", "reason"])}}, [])),
    "give_up_hypothesis": ("Abandon the current hypothesis.", _obj({"reason": _S}, [])),
    "run_lint": ("Run the linters.", _obj({}, [])),
    "query_def": ("Find where a name is declared and driven.", _obj({"name": _S}, ["name"])),
    "query_ref": ("Find every line referencing a name.", _obj({"name": _S}, ["name"])),
}


def tool_schemas(kind: str) -> list[dict]:
    return [{"name": n, "description": SCHEMAS[n][0], "parameters": SCHEMAS[n][1]} for n in TOOLS_BY_KIND[kind]]


def args_text(args: dict) -> str:
    return json.dumps(args, sort_keys=True)
