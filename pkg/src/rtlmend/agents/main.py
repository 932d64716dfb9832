"""The main agent: hypothesis, validation and patch loops."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from ..rtl.source import Patch, RangeError, ReparseError, SourceProject, apply_patch
from ..smt import SolverConfig
from ..waveform import Testbench
from .budget import Budget, BudgetExceeded, Meter
from .prompts import load_prompt
from .subagents import SUMMARY_CAP, ContextAgent, NewPatch, Question, lint_fix_agent
from .tools import MAIN_TOOLS, PatchArgsError, Workspace, patch_from_args, run_tool, tool_header, tool_schemas
from .transcript import AgentTranscript, ToolCall


@dataclass(frozen=True)
class Hypothesis:
    id: int
    text: str
    parent: Optional[int] = None
    created_from: int = 0


@dataclass(frozen=True)
class Counters:
    """Raw measurements behind a node's heuristic features, cumulative along the tree path."""

    tb_passed: int = 0
    tb_total: int = 1
    n_queries: int = 0
    n_compile_errors: int = 0
    n_tokens: int = 0


@dataclass(frozen=True)
class NodeState:
    """Everything needed to resume the main agent at a tree node."""

    project: SourceProject
    transcript: AgentTranscript
    patches: tuple[Patch, ...] = ()
    hypothesis: Optional[Hypothesis] = None
    counters: Counters = Counters()
    suppressed: frozenset = frozenset()

    def fork(self) -> "NodeState":
        return replace(self, transcript=self.transcript.copy())


@dataclass(frozen=True)
class Fixed:
    state: NodeState


@dataclass(frozen=True)
class NewHypothesis:
    hypothesis: Hypothesis
    state: NodeState


@dataclass(frozen=True)
class OutOfPatience:
    forced: Optional[Hypothesis]
    state: NodeState
    reason: str = "operation budget exhausted"


@dataclass(frozen=True)
class BudgetExhausted:
    state: NodeState
    reason: str = ""


StepOutcome = Union[Fixed, NewHypothesis, OutOfPatience, BudgetExhausted]


@dataclass
class AgentEnv:
    """Shared, read-only settings for every step of one search."""

    meter: Meter
    testbenches: list[Testbench]
    solver: SolverConfig = field(default_factory=SolverConfig)
    lint_cmd: Optional[str] = None
    summary_cap: int = SUMMARY_CAP
    count_all_tools: bool = False  # N_Q counts every tool call instead of context-agent queries only
    smt_enabled: bool = True
    lint_regex: Optional[str] = None
    ids: itertools.count = field(default_factory=lambda: itertools.count(1))

    @property
    def budget(self) -> Budget:
        return self.meter.budget


def lint_key(m) -> tuple:
    # line numbers move under patches, so a message is identified by what it is about
    return (m.code, m.file, m.signal) if m.signal else (m.code, m.file, m.message)


def initial_state(project: SourceProject, env: AgentEnv) -> NodeState:
    ws = Workspace(project, env.testbenches, env.solver, env.lint_cmd, env.lint_regex)
    rep = ws.simulate_all()
    t = AgentTranscript("main")
    system = load_prompt("main")
    if env.smt_enabled:
        system += "\n\n" + load_prompt("templates")
    t.say("system", system)
    files = ", ".join(project.paths)
    t.say("user", f"Design files: {files}. Top module: {project.top_module}.\n"
                  f"Simulation of the current code: {rep.summary()}\n"
                  f"Find the root cause. Start by proposing a hypothesis.")
    return NodeState(project, t, counters=Counters(rep.passed, rep.total))


class _Step:
    def __init__(self, state: NodeState, env: AgentEnv):
        self.env = env
        self.st = state.fork()
        self.t = self.st.transcript
        self.ws = Workspace(self.st.project, env.testbenches, env.solver, env.lint_cmd, env.lint_regex)
        self.ctx = ContextAgent(env.meter, self.ws, env.summary_cap)
        self.ops = 0
        self.tokens0 = env.meter.tokens
        self.c = self.st.counters
        self.tools = tool_schemas("main")
        if not env.smt_enabled:
            self.tools = [s for s in self.tools if s["name"] != "smt_repair"]

    def snapshot(self) -> NodeState:
        c = replace(self.c, n_tokens=self.st.counters.n_tokens + self.env.meter.tokens - self.tokens0)
        return replace(self.st, project=self.ws.project, transcript=self.t, counters=c)

    def count(self, **kw) -> None:
        self.c = replace(self.c, **{k: getattr(self.c, k) + v for k, v in kw.items()})

    def new_hypothesis(self, text: str) -> Hypothesis:
        parent = self.st.hypothesis.id if self.st.hypothesis else None
        return Hypothesis(next(self.env.ids), text, parent, len(self.t.messages))

    # -- patch loop --------------------------------------------------------

    def patch_loop(self, allow_patch: bool) -> Union[Patch, StepOutcome]:
        while True:
            if self.ops >= self.env.budget.max_ops_per_hypothesis:
                return self.out_of_patience()
            self.ops += 1
            reply = self.env.meter.chat(self.t, self.tools)
            self.t.say("assistant", reply.content, reply.tool_call)
            tc = reply.tool_call
            if tc is None:
                self.t.say("user", "Reply with exactly one tool call.")
                continue
            if self.env.count_all_tools:
                self.count(n_queries=1)
            r = self.dispatch(tc, allow_patch)
            if r is not None:
                return r

    def dispatch(self, tc: ToolCall, allow_patch: bool):
        name, args = tc.name, tc.args
        if name not in MAIN_TOOLS or (name == "smt_repair" and not self.env.smt_enabled):
            self.t.say("tool", f"{tool_header(name)}\nerror: unknown tool")
            return None
        if name == "propose_hypothesis":
            h = self.new_hypothesis(str(args.get("text", "")).strip() or "(no text)")
            self.t.say("tool", f"{tool_header(name)}\nrecorded hypothesis #{h.id}")
            return NewHypothesis(h, replace(self.snapshot(), hypothesis=h))
        if name == "give_up_hypothesis":
            self.t.say("tool", f"{tool_header(name)}\nhypothesis abandoned")
            return OutOfPatience(None, self.snapshot(), "gave up: " + str(args.get("reason", "")))
        if name in ("emit_patch", "edit_file"):
            if not allow_patch:
                self.t.say("tool", f"{tool_header(name)}\nerror: propose a hypothesis before patching")
                return None
            try:
                p = patch_from_args(self.ws, args, "smt_template" if args.get("use_smt_result") else "agent")
            except PatchArgsError as e:
                self.t.say("tool", f"{tool_header(name)}\nerror: {e}")
                return None
            self.t.say("tool", f"{tool_header(name)}\npatch accepted")
            return p
        if name == "ask_context_agent":
            summary = self.ctx.query(Question(str(args.get("question", ""))))
            if not self.env.count_all_tools:
                self.count(n_queries=1)
            self.t.say("tool", f"{tool_header(name)}\n{summary}")
            return None
        self.t.say("tool", run_tool(self.ws, name, args))
        return None

    def out_of_patience(self) -> StepOutcome:
        # one more turn, outside the operation budget, to extract a forced hypothesis
        self.t.say("user", f"Operation budget of {self.env.budget.max_ops_per_hypothesis} exhausted for this "
                           f"hypothesis. Propose a new hypothesis now with propose_hypothesis.")
        reply = self.env.meter.chat(self.t, self.tools)
        self.t.say("assistant", reply.content, reply.tool_call)
        tc = reply.tool_call
        forced = None
        if tc is not None and tc.name == "propose_hypothesis":
            forced = self.new_hypothesis(str(tc.args.get("text", "")).strip() or "(no text)")
            self.t.say("tool", f"{tool_header(tc.name)}\nrecorded hypothesis #{forced.id}")
            return OutOfPatience(forced, replace(self.snapshot(), hypothesis=forced))
        if tc is not None:
            self.t.say("tool", f"{tool_header(tc.name)}\nignored: out of patience")
        return OutOfPatience(None, self.snapshot())

    # -- validation loop ---------------------------------------------------

    def validate(self) -> StepOutcome:
        h = self.st.hypothesis
        assert h is not None
        self.t.say("user", f"Validate hypothesis #{h.id}: {h.text}")
        while True:
            summary = self.ctx.query(Question(f"Collect the code relevant to this hypothesis: {h.text}"))
            self.count(n_queries=1)
            self.t.say("user", f"Context agent: {summary}")
            patch = None
            msgs = [m for m in self.ws.lint() if lint_key(m) not in self.st.suppressed]
            if msgs:
                res = lint_fix_agent(self.env.meter, self.ws, msgs)
                self.st = replace(self.st, suppressed=self.st.suppressed | {lint_key(s.message)
                                                                            for s in res.suppressed})
                self.t.say("user", res.summary(len(msgs)))
                patch = res.patch
            if patch is None:
                r = self.patch_loop(allow_patch=True)
                if not isinstance(r, Patch):
                    return r
                patch = r
            out = self.apply(patch)
            if out is not None:
                return out

    def apply(self, patch: Patch) -> Optional[StepOutcome]:
        try:
            new = apply_patch(self.ws.project, patch)
        except (ReparseError, RangeError) as e:
            self.count(n_compile_errors=1)
            self.t.say("user", f"The patch does not compile and was not applied: {e}")
            return None
        # registered before switching projects so the note quotes the replaced text
        self.ctx.query(NewPatch(patch))
        self.ws.set_project(new)
        self.st = replace(self.st, project=new, patches=self.st.patches + (patch,))
        rep = self.ws.simulate_all()
        if any(r.error for r in rep.results):
            self.count(n_compile_errors=1)
        self.c = replace(self.c, tb_passed=rep.passed, tb_total=rep.total)
        if rep.all_pass:
            return Fixed(self.snapshot())
        self.t.say("user", f"Patch applied ({len(self.st.patches)} so far). Simulation: {rep.summary()}")
        return None


def main_agent_step(state: NodeState, env: AgentEnv) -> StepOutcome:
    """Resume the main agent at ``state`` and run it until it leaves the current hypothesis.

    A node without a hypothesis (the root) only runs the hypothesis-making
    turn. LlmBackendError propagates; budget exhaustion is an outcome.
    """
    step = _Step(state, env)
    try:
        if state.hypothesis is None:
            r = step.patch_loop(allow_patch=False)
            assert not isinstance(r, Patch)
            return r
        return step.validate()
    except BudgetExceeded as e:
        return BudgetExhausted(step.snapshot(), str(e))
