"""Wrapper around an external lint tool run as a subprocess."""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

from ..rtl.source import SourceProject
from .checks import LintMessage

DEFAULT_REGEX = (r"^(?P<file>[^:\s][^:]*):(?P<line>\d+):(?:(?P<col>\d+):)?\s*"
                 r"(?P<severity>[A-Za-z%-]+)\s*:\s*(?P<message>.*)$")


def _severity(text: str) -> str:
    return "error" if "err" in text.lower() else "warning"


def _code(message: str) -> tuple[str, str]:
    m = re.match(r"([A-Z][A-Z0-9_]+)\b[:\s-]*(.*)", message)
    if m:
        return m.group(1), m.group(2) or message
    return "EXTERNAL", message


def parse_output(text: str, regex: str, root: Optional[str] = None) -> list[LintMessage]:
    pat = re.compile(regex)
    out = []
    for line in text.splitlines():
        m = pat.match(line.strip())
        if not m:
            continue
        g = m.groupdict()
        file = g.get("file") or "<unknown>"
        if root and file.startswith(root):
            file = file[len(root):].lstrip("/")
        code = g.get("code")
        message = (g.get("message") or "").strip()
        if not code:
            code, message = _code(message)
        out.append(LintMessage(file, int(g.get("line") or 0), int(g.get("col") or 0), code,
                               _severity(g.get("severity") or "warning"), message, None))
    return out


def run_external_linter(src: SourceProject, cmd: Union[str, Sequence[str], None], parse_regex: Optional[str] = None,
                        timeout: float = 60.0) -> list[LintMessage]:
    """Run ``cmd`` over the project's files and parse its diagnostics.

    ``{files}`` and ``{top}`` in the command are substituted; without a
    ``{files}`` placeholder the file paths are appended. An unset command
    yields no messages. Failures never raise.
    """
    if not cmd:
        return []
    regex = parse_regex or DEFAULT_REGEX
    argv0 = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
    with tempfile.TemporaryDirectory(prefix="lint-") as tmp:
        src.write(Path(tmp))
        files = [str(Path(tmp) / p) for p in src.paths]
        argv = []
        placed = False
        for a in argv0:
            if a == "{files}":
                argv.extend(files)
                placed = True
            else:
                argv.append(a.replace("{top}", src.top_module))
        if not placed:
            argv.extend(files)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout, cwd=tmp)
        except (OSError, subprocess.TimeoutExpired) as exc:
            return [_tool_error(f"lint tool could not run: {exc}")]
        text = proc.stdout + "\n" + proc.stderr
        msgs = parse_output(text, regex, root=tmp)
    if proc.returncode != 0 and not msgs:
        tail = " ".join(text.split())[-200:]
        return [_tool_error(f"lint tool exited with status {proc.returncode}: {tail}")]
    return sorted(msgs, key=lambda m: (m.file, m.line, m.col, m.code))


def _tool_error(message: str) -> LintMessage:
    return LintMessage("<lint>", 0, 0, "LINT_TOOL_ERROR", "warning", message, None)
