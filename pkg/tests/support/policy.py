"""A scripted stand-in for the LLM, used to record replay fixtures.

It knows the injected bug (from bug.json) and behaves like a competent
debugger would: look at the waveform diff, state a hypothesis about the
mutated region, then patch it. Cycle-timing bugs of the delayed kind go
through the SMT repair tool first.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional

from rtlmend.agents.transcript import Message, ToolCall

SMT_FIRST = {"DelayedOneCycle": "CycleShift"}


def restore_edit(buggy: str, start: int, mutated: str, original: str) -> dict:
    """Smallest symmetric widening of the mutated region that occurs once in ``buggy``."""
    end = start + len(mutated)
    assert buggy[start:end] == mutated
    pad = 0
    while True:
        lo, hi = max(0, start - pad), min(len(buggy), end + pad)
        old = buggy[lo:hi]
        if old and buggy.count(old) == 1:
            return {"old": old, "new": buggy[lo:start] + original + buggy[end:hi]}
        pad += 1


class ScriptedDebugger:
    def __init__(self, bench_dir: Path):
        bench_dir = Path(bench_dir)
        self.bug = json.loads((bench_dir / "bug.json").read_text())
        self.buggy = (bench_dir / "design.v").read_text()
        self.file = self.bug["site"]["file"]
        self.edit = restore_edit(self.buggy, self.bug["site"]["start"], self.bug["mutated"], self.bug["original"])

    def __call__(self, kind: str, messages: list[Message]) -> tuple[str, Optional[ToolCall]]:
        return getattr(self, f"_{kind}")(messages)

    def _main(self, messages):
        last = messages[-1]
        target, line = self.bug["target"], self.bug["site"]["line"]
        if last.role == "user" and "Start by proposing" in last.content:
            return "Let me look at where the outputs diverge first.", ToolCall("diff_waveform", {})
        if last.role == "tool" and last.content.startswith("[diff_waveform]"):
            return ("The outputs diverge from the golden trace.",
                    ToolCall("propose_hypothesis", {"text": f"The logic driving `{target}` near {self.file}:{line} "
                                                            f"is wrong."}))
        if "Operation budget" in last.content:
            return "", ToolCall("propose_hypothesis", {"text": f"Re-examine `{target}`."})
        if last.role == "user" and ("Context agent:" in last.content or "Lint-fix agent" in last.content):
            tpl = SMT_FIRST.get(self.bug["class"])
            if tpl and not any(m.content.startswith("[smt_repair]") for m in messages):
                return "Check the timing of this signal with the solver.", ToolCall(
                    "smt_repair", {"template": tpl, "targets": [target]})
            return "Restore the intended expression.", self._patch()
        if last.role == "tool" and last.content.startswith("[smt_repair]"):
            if "found a fix" in last.content:
                return "Apply the solver's repair.", ToolCall("emit_patch", {"use_smt_result": True,
                                                                            "description": "solver repair"})
            return "The solver did not help; patch by hand.", self._patch()
        return "This hypothesis did not pan out.", ToolCall("give_up_hypothesis", {"reason": "no progress"})

    def _patch(self) -> ToolCall:
        return ToolCall("emit_patch", {"file": self.file, **self.edit,
                                       "description": f"fix the {self.bug['class']} bug on {self.bug['target']}"})

    def _context(self, messages):
        last = messages[-1]
        if last.role == "user" and last.content.startswith("Question:"):
            return "", ToolCall("query_def", {"name": self.bug["target"]})
        found = last.content.split("\n", 1)[-1] if last.role == "tool" else ""
        return (f"`{self.bug['target']}` is the signal to inspect.\n{found}".strip(), None)

    def _lint_fix(self, messages):
        listing = messages[1].content
        n = len(re.findall(r"^\d+: ", listing, re.M))
        return "These warnings are unrelated to the failure.", ToolCall(
            "emit_patch", {"suppress": [{"index": i, "reason": "unrelated"} for i in range(n)]})
