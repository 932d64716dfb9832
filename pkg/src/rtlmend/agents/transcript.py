"""Agent dialogues and tool calls."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

ROLES = ("system", "user", "assistant", "tool")
AGENT_KINDS = ("main", "context", "lint_fix")


class TranscriptError(ValueError):
    pass


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "args": self.args}

    @classmethod
    def from_json(cls, d: dict) -> "ToolCall":
        return cls(d["name"], dict(d.get("args") or {}))


@dataclass(frozen=True)
class Message:
    role: str
    content: str
    tool_call: Optional[ToolCall] = None

    def to_json(self) -> dict:
        d = {"role": self.role, "content": self.content}
        if self.tool_call is not None:
            d["tool_call"] = self.tool_call.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Message":
        tc = d.get("tool_call")
        return cls(d["role"], d.get("content", ""), ToolCall.from_json(tc) if tc else None)


@dataclass
class AgentTranscript:
    agent_kind: str
    messages: list[Message] = field(default_factory=list)
    tokens_used: int = 0

    def __post_init__(self):
        if self.agent_kind not in AGENT_KINDS:
            raise TranscriptError(f"unknown agent kind {self.agent_kind!r}")

    def add(self, msg: Message) -> None:
        if msg.role not in ROLES:
            raise TranscriptError(f"unknown role {msg.role!r}")
        if msg.role == "tool":
            last = self.messages[-1] if self.messages else None
            if last is None or last.role != "assistant" or last.tool_call is None:
                raise TranscriptError("tool message without a preceding tool call")
        self.messages.append(msg)

    def say(self, role: str, content: str, tool_call: Optional[ToolCall] = None) -> Message:
        m = Message(role, content, tool_call)
        self.add(m)
        return m

    def charge(self, tokens: int) -> None:
        if tokens < 0:
            raise TranscriptError("negative token count")
        self.tokens_used += tokens

    def copy(self) -> "AgentTranscript":
        return AgentTranscript(self.agent_kind, list(self.messages), self.tokens_used)

    def to_json(self) -> dict:
        return {"agent_kind": self.agent_kind, "tokens_used": self.tokens_used,
                "messages": [m.to_json() for m in self.messages]}

    @classmethod
    def from_json(cls, d: dict) -> "AgentTranscript":
        t = cls(d["agent_kind"], [], int(d.get("tokens_used", 0)))
        for m in d["messages"]:
            t.add(Message.from_json(m))
        return t


def digest(messages: list[Message]) -> str:
    """Stable fingerprint of a conversation prefix."""
    blob = json.dumps([m.to_json() for m in messages], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def approx_tokens(text: str) -> int:
    return len(text.split())
