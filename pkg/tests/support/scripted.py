"""A queue-driven stand-in for the LLM used by unit tests."""

from __future__ import annotations

from typing import Optional

from rtlmend.agents import RecordingBackend, ToolCall


class Script(RecordingBackend):
    """Answer each agent kind from its own queue of ``(content, tool_call)`` turns.

    An empty queue answers with ``fallback`` (plain text for sub-agents, a
    give-up call for the main agent). Every turn is kept in ``records``.
    """

    def __init__(self, **queues):
        self.queues = {k: list(v) for k, v in queues.items()}
        self.seen: list[tuple[str, list]] = []
        super().__init__(self._next)

    def _next(self, kind: str, messages) -> tuple[str, Optional[ToolCall]]:
        self.seen.append((kind, list(messages)))
        q = self.queues.get(kind) or []
        if q:
            return q.pop(0)
        if kind == "main":
            return "nothing left", ToolCall("give_up_hypothesis", {"reason": "script exhausted"})
        return "no further information", None


def call(tool: str, /, **args) -> tuple[str, ToolCall]:
    return "", ToolCall(tool, args)


def text(content: str) -> tuple[str, None]:
    return content, None
