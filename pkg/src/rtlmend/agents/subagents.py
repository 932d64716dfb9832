"""The context agent and the lint-fix agent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..lint import LintMessage
from ..rtl.source import Patch
from .budget import Meter
from .prompts import load_prompt
from .tools import (NAV_TOOLS, PatchArgsError, Workspace, patch_from_args, run_tool, tool_header,
                    tool_schemas)
from .transcript import AgentTranscript

SUMMARY_CAP = 2000
CONTEXT_STEPS = 6
LINT_FIX_STEPS = 8


@dataclass(frozen=True)
class NewPatch:
    patch: Patch


@dataclass(frozen=True)
class Question:
    text: str


def patch_text(src_texts: dict, p: Patch) -> str:
    """Readable rendering of a patch against the files it was applied to."""
    lines = [p.description] if p.description else []
    for e in p.edits:
        text = src_texts.get(e.file, "")
        line = text.count("\n", 0, e.start) + 1
        old = text[e.start:e.end]
        lines.append(f"{e.file}:{line}: replace {old!r} with {e.text!r}")
    return "\n".join(lines)


def cap_summary(text: str, cap: int = SUMMARY_CAP) -> str:
    text = text.strip()
    if len(text) <= cap:
        return text
    tail = " [truncated]"
    return text[:cap - len(tail)] + tail


class ContextAgent:
    """One instance per hypothesis; its dialogue persists across that hypothesis's patches."""

    def __init__(self, meter: Meter, ws: Workspace, cap: int = SUMMARY_CAP):
        self.meter = meter
        self.ws = ws
        self.cap = cap
        self.transcript = AgentTranscript("context")
        self.transcript.say("system", load_prompt("context"))
        files = ", ".join(ws.project.paths)
        self.transcript.say("user", f"Design files: {files}. Top module: {ws.project.top_module}.")
        self.queries = 0

    def query(self, task: Union[NewPatch, Question]) -> str:
        if isinstance(task, NewPatch):
            # registration only updates the dialogue; no navigation needed
            before = {p: self.ws.project.text(p) for p in self.ws.project.paths}
            self.transcript.say("user", "A patch was applied:\n" + patch_text(before, task.patch))
            return "Context agent registered the patch."
        self.queries += 1
        self.transcript.say("user", f"Question: {task.text}")
        tools = tool_schemas("context")
        for _ in range(CONTEXT_STEPS):
            reply = self.meter.chat(self.transcript, tools)
            self.transcript.say("assistant", reply.content, reply.tool_call)
            tc = reply.tool_call
            if tc is None:
                return cap_summary(reply.content, self.cap)
            if tc.name not in NAV_TOOLS:
                self.transcript.say("tool", f"{tool_header(tc.name)}\nerror: tool not available; use "
                                            f"{', '.join(NAV_TOOLS)} or answer in plain text")
                continue
            self.transcript.say("tool", run_tool(self.ws, tc.name, tc.args))
        self.transcript.say("user", "Answer now in plain text.")
        reply = self.meter.chat(self.transcript, tools)
        self.transcript.say("assistant", reply.content, reply.tool_call)
        if reply.tool_call is not None or not reply.content.strip():
            return "The context agent found no answer."
        return cap_summary(reply.content, self.cap)


@dataclass(frozen=True)
class Suppress:
    message: LintMessage
    reason: str


@dataclass(frozen=True)
class LintFixResult:
    patch: Optional[Patch]
    suppressed: tuple[Suppress, ...]
    transcript: AgentTranscript

    def summary(self, n: int) -> str:
        parts = [f"Lint-fix agent handled {n} lint message(s)"]
        if self.patch is not None:
            parts.append("and produced a patch")
        if self.suppressed:
            codes = ", ".join(sorted({s.message.code for s in self.suppressed}))
            parts.append(f"suppressing {len(self.suppressed)} ({codes})")
        return " ".join(parts) + "."


def lint_fix_agent(meter: Meter, ws: Workspace, messages: list[LintMessage]) -> LintFixResult:
    """A fresh agent that patches or suppresses ``messages``."""
    if not messages:
        raise ValueError("lint_fix_agent needs at least one message")
    t = AgentTranscript("lint_fix")
    t.say("system", load_prompt("lint_fix"))
    listing = "\n".join(f"{i}: {m}" for i, m in enumerate(messages))
    t.say("user", f"Lint messages:\n{listing}")
    tools = tool_schemas("lint_fix")
    for _ in range(LINT_FIX_STEPS):
        reply = meter.chat(t, tools)
        t.say("assistant", reply.content, reply.tool_call)
        tc = reply.tool_call
        if tc is None:
            t.say("user", "Finish with one emit_patch call.")
            continue
        if tc.name in NAV_TOOLS:
            t.say("tool", run_tool(ws, tc.name, tc.args))
            continue
        if tc.name != "emit_patch":
            t.say("tool", f"{tool_header(tc.name)}\nerror: tool not available")
            continue
        try:
            sup = _suppressions(tc.args.get("suppress"), messages)
            has_edits = any(k in tc.args for k in ("old", "edits"))
            patch = patch_from_args(ws, tc.args, "lint_fix") if has_edits else None
        except (PatchArgsError, ValueError) as e:
            t.say("tool", f"{tool_header('emit_patch')}\nerror: {e}")
            continue
        if patch is None and not sup:
            t.say("tool", f"{tool_header('emit_patch')}\nerror: give edits or a suppress list")
            continue
        t.say("tool", f"{tool_header('emit_patch')}\naccepted")
        return LintFixResult(patch, sup, t)
    # no decision: suppress everything so the same messages are not dispatched again
    return LintFixResult(None, tuple(Suppress(m, "no fix produced") for m in messages), t)


def _suppressions(raw, messages: list[LintMessage]) -> tuple[Suppress, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ValueError("suppress must be a list of {index, reason}")
    out = []
    for s in raw:
        try:
            i = int(s["index"])
            reason = str(s.get("reason", ""))
        except (KeyError, TypeError, ValueError):
            raise ValueError("suppress entries need an integer index") from None
        if not 0 <= i < len(messages):
            raise ValueError(f"no lint message {i}")
        out.append(Suppress(messages[i], reason))
    return tuple(out)
