"""Chat backends: live HTTP endpoint, recorded replay and a recorder."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

from .transcript import Message, ToolCall, approx_tokens, digest

ENV_URL = "RTLMEND_LLM_URL"
ENV_MODEL = "RTLMEND_LLM_MODEL"
ENV_KEY = "RTLMEND_LLM_KEY"


class LlmBackendError(RuntimeError):
    pass


class TransportError(LlmBackendError):
    pass


class ReplayDivergence(LlmBackendError):
    def __init__(self, kind: str, position: int, detail: str = ""):
        self.kind = kind
        self.position = position
        super().__init__(f"replay for {kind} diverged at position {position}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Reply:
    content: str
    tool_call: Optional[ToolCall]
    tokens: int


class LlmBackend(Protocol):
    def chat(self, kind: str, messages: list[Message], tools: list[dict]) -> Reply:
        ...


_FENCE = re.compile(r"```tool\s*\n(?P<body>.*?)```", re.S)


def parse_tool_text(content: str) -> Optional[ToolCall]:
    """Read a fenced ``tool`` block: a tool name, then JSON arguments."""
    m = _FENCE.search(content)
    if m is None:
        return None
    body = m.group("body").strip()
    name, _, rest = body.partition(" ")
    if "\n" in name:
        name, _, more = name.partition("\n")
        rest = more + rest
    rest = rest.strip()
    try:
        args = json.loads(rest) if rest else {}
    except json.JSONDecodeError:
        return ToolCall(name.strip(), {"_raw": rest})
    return ToolCall(name.strip(), args if isinstance(args, dict) else {"_value": args})


def tool_text(call: ToolCall) -> str:
    return f"```tool\n{call.name} {json.dumps(call.args, sort_keys=True)}\n```"


def _conversation_tokens(messages: list[Message], reply: str) -> int:
    return sum(approx_tokens(m.content) for m in messages) + approx_tokens(reply)


# -- replay ------------------------------------------------------------------

class ReplayBackend:
    """Serve recorded assistant turns.

    Each record is ``{pos, role, content, tool_call?, tokens?, prefix?}``.
    ``pos`` must equal the number of messages sent; when ``prefix`` is
    present it must match the fingerprint of those messages too. Records at
    one position are used in file order; a repeated identical conversation
    gets the same answer again.
    """

    def __init__(self, records: dict[str, list[dict]]):
        self.records = {k: list(v) for k, v in records.items()}
        self.used: dict[str, set[int]] = {k: set() for k in records}

    @classmethod
    def load(cls, directory: Path) -> "ReplayBackend":
        directory = Path(directory)
        if not directory.is_dir():
            raise LlmBackendError(f"replay directory {directory} not found")
        records = {}
        for path in sorted(directory.glob("*.jsonl")):
            rows = []
            for i, line in enumerate(path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise LlmBackendError(f"{path}:{i}: {e}") from e
            records[path.stem] = rows
        return cls(records)

    def chat(self, kind: str, messages: list[Message], tools: list[dict]) -> Reply:
        pos = len(messages)
        fp = digest(messages)
        rows = self.records.get(kind, [])
        hits = [i for i, r in enumerate(rows)
                if r.get("pos") == pos and r.get("role", "assistant") == "assistant"
                and r.get("prefix", fp) == fp]
        if not hits:
            raise ReplayDivergence(kind, pos, "no recorded turn for this conversation")
        fresh = [i for i in hits if i not in self.used.setdefault(kind, set())]
        i = fresh[0] if fresh else hits[-1]
        self.used[kind].add(i)
        r = rows[i]
        content = r.get("content", "")
        tc = ToolCall.from_json(r["tool_call"]) if r.get("tool_call") else parse_tool_text(content)
        tokens = int(r["tokens"]) if "tokens" in r else _conversation_tokens(messages, content)
        return Reply(content, tc, tokens)


# -- recording ---------------------------------------------------------------

Policy = Callable[[str, list[Message]], tuple[str, Optional[ToolCall]]]


class RecordingBackend:
    """Wrap a scripted policy (or another backend) and keep every turn."""

    def __init__(self, policy: Policy):
        self.policy = policy
        self.records: dict[str, list[dict]] = {}

    def chat(self, kind: str, messages: list[Message], tools: list[dict]) -> Reply:
        content, tc = self.policy(kind, messages)
        if tc is not None and "```tool" not in content:
            content = (content + "\n" if content else "") + tool_text(tc)
        tokens = _conversation_tokens(messages, content)
        row = {"pos": len(messages), "prefix": digest(messages), "role": "assistant", "content": content,
               "tokens": tokens}
        if tc is not None:
            row["tool_call"] = tc.to_json()
        self.records.setdefault(kind, []).append(row)
        return Reply(content, tc, tokens)

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for kind, rows in sorted(self.records.items()):
            with open(directory / f"{kind}.jsonl", "w") as f:
                for r in rows:
                    f.write(json.dumps(r, sort_keys=True) + "\n")


# -- live --------------------------------------------------------------------

class LiveBackend:
    """Chat-completions endpoint with native function calling."""

    def __init__(self, url: Optional[str] = None, model: Optional[str] = None, key: Optional[str] = None,
                 timeout_s: float = 300.0):
        self.url = url or os.environ.get(ENV_URL, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        self.key = key if key is not None else os.environ.get(ENV_KEY)
        self.timeout_s = timeout_s

    def _payload(self, messages: list[Message], tools: list[dict]) -> dict:
        out = []
        n = 0
        for m in messages:
            if m.role == "assistant" and m.tool_call is not None:
                n += 1
                out.append({"role": "assistant", "content": m.content or None, "tool_calls": [{
                    "id": f"call_{n}", "type": "function",
                    "function": {"name": m.tool_call.name, "arguments": json.dumps(m.tool_call.args)}}]})
            elif m.role == "tool":
                out.append({"role": "tool", "tool_call_id": f"call_{n}", "content": m.content})
            else:
                out.append({"role": m.role, "content": m.content})
        body = {"model": self.model, "messages": out}
        if tools:
            body["tools"] = [{"type": "function", "function": t} for t in tools]
        return body

    def chat(self, kind: str, messages: list[Message], tools: list[dict]) -> Reply:
        if not self.key:
            raise TransportError(f"no API key: set {ENV_KEY}")
        if not self.url:
            raise TransportError(f"no endpoint: set {ENV_URL}")
        import requests

        try:
            r = requests.post(self.url.rstrip("/") + "/chat/completions",
                              headers={"Authorization": f"Bearer {self.key}"},
                              json=self._payload(messages, tools), timeout=self.timeout_s)
            r.raise_for_status()
            data = r.json()
        except (requests.RequestException, ValueError) as e:
            raise TransportError(str(e)) from e
        try:
            msg = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as e:
            raise TransportError(f"malformed response: {e}") from e
        content = msg.get("content") or ""
        tc = None
        calls = msg.get("tool_calls") or []
        if calls:
            fn = calls[0].get("function", {})
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError:
                args = {"_raw": fn.get("arguments")}
            tc = ToolCall(fn.get("name", ""), args if isinstance(args, dict) else {"_value": args})
        else:
            tc = parse_tool_text(content)
        usage = data.get("usage") or {}
        tokens = usage.get("total_tokens")
        if tokens is None:
            tokens = _conversation_tokens(messages, content)
        return Reply(content, tc, int(tokens))


def make_backend(kind: str, replay_dir: Optional[Path] = None) -> LlmBackend:
    if kind == "replay":
        if replay_dir is None:
            raise LlmBackendError("replay backend needs a fixture directory")
        return ReplayBackend.load(replay_dir)
    if kind == "live":
        return LiveBackend()
    raise LlmBackendError(f"unknown backend {kind!r}")
