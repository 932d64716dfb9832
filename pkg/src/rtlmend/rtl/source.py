"""Source projects, spans, diagnostics and text patches."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class Span:
    """Half-open character range ``[start, end)`` into one source file.

    ``line`` and ``col`` are 1-based and locate ``start``.
    """

    file: str
    start: int
    end: int
    line: int = 1
    col: int = 1

    def text(self, project: "SourceProject") -> str:
        return project.text(self.file)[self.start:self.end]

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    col: int
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.code}: {self.message}"


class RtlError(Exception):
    """Base error carrying a structured diagnostic."""

    code = "RTL_ERROR"

    def __init__(self, message: str, span: Span | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    @property
    def diagnostic(self) -> Diagnostic:
        if self.span is None:
            return Diagnostic("<unknown>", 0, 0, self.code, self.message)
        return Diagnostic(self.span.file, self.span.line, self.span.col, self.code, self.message)

    def __str__(self) -> str:
        return str(self.diagnostic)


class ParseError(RtlError):
    code = "PARSE_ERROR"


class UnsupportedFeature(RtlError):
    code = "UNSUPPORTED"

    def __init__(self, construct: str, span: Span | None = None):
        super().__init__(f"unsupported construct: {construct}", span)
        self.construct = construct


class WidthError(RtlError):
    code = "WIDTH_ERROR"


class RangeError(RtlError):
    code = "RANGE_ERROR"


class ReparseError(RtlError):
    code = "REPARSE_ERROR"

    def __init__(self, cause: RtlError):
        super().__init__(f"patched project does not parse: {cause.message}", cause.span)
        self.cause = cause


class ElaborationError(RtlError):
    code = "ELAB_ERROR"


class CombinationalLoop(ElaborationError):
    code = "COMB_LOOP"

    def __init__(self, cycle: list[str], span: Span | None = None):
        super().__init__("combinational loop through " + " -> ".join(cycle), span)
        self.cycle = cycle


class MultipleDrivers(ElaborationError):
    code = "MULTI_DRIVEN"

    def __init__(self, signal: str, span: Span | None = None):
        super().__init__(f"signal {signal!r} has multiple drivers", span)
        self.signal = signal


class HierarchyError(ElaborationError):
    code = "HIERARCHY_ERROR"


def line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


@dataclass(frozen=True)
class SourceProject:
    """An immutable set of source files plus the name of the top module."""

    files: tuple[tuple[str, str], ...]
    top_module: str

    def __post_init__(self):
        paths = [p for p, _ in self.files]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate file paths in project")

    @classmethod
    def from_texts(cls, texts: dict[str, str], top_module: str) -> "SourceProject":
        return cls(tuple(texts.items()), top_module)

    @classmethod
    def load(cls, paths: Iterable[str | Path], top_module: str, root: Path | None = None) -> "SourceProject":
        files = []
        for p in paths:
            p = Path(p)
            name = str(p.relative_to(root)) if root is not None else p.name
            files.append((name, p.read_bytes().decode("utf-8")))
        return cls(tuple(files), top_module)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.files]

    def text(self, path: str) -> str:
        for p, t in self.files:
            if p == path:
                return t
        raise KeyError(path)

    def has_file(self, path: str) -> bool:
        return any(p == path for p, _ in self.files)

    def replace_file(self, path: str, text: str) -> "SourceProject":
        if not self.has_file(path):
            raise KeyError(path)
        return SourceProject(tuple((p, text if p == path else t) for p, t in self.files), self.top_module)

    def write(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        for p, t in self.files:
            out = directory / p
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(t, encoding="utf-8")


@dataclass(frozen=True)
class Edit:
    file: str
    start: int
    end: int
    text: str


PROVENANCES = ("agent", "lint_fix", "smt_template")


@dataclass(frozen=True)
class Patch:
    edits: tuple[Edit, ...]
    provenance: str = "agent"
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "description": self.description,
            "edits": [{"file": e.file, "start": e.start, "end": e.end, "text": e.text} for e in self.edits],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Patch":
        edits = tuple(Edit(e["file"], int(e["start"]), int(e["end"]), e["text"]) for e in d["edits"])
        return cls(edits, d.get("provenance", "agent"), d.get("description", ""))


def _check_ranges(src: SourceProject, p: Patch) -> None:
    by_file: dict[str, list[Edit]] = {}
    for e in p.edits:
        if not src.has_file(e.file):
            raise RangeError(f"patch edits unknown file {e.file!r}")
        n = len(src.text(e.file))
        if not (0 <= e.start <= e.end <= n):
            raise RangeError(f"edit range [{e.start}, {e.end}) outside {e.file!r} (length {n})")
        by_file.setdefault(e.file, []).append(e)
    for f, edits in by_file.items():
        edits = sorted(edits, key=lambda e: (e.start, e.end))
        for a, b in zip(edits, edits[1:]):
            # two insertions at one point are ambiguous as well
            if b.start < a.end or (a.start == a.end == b.start == b.end):
                raise RangeError(f"overlapping edits in {f!r} at [{a.start}, {a.end}) and [{b.start}, {b.end})")


def apply_edits(src: SourceProject, p: Patch) -> SourceProject:
    """Apply ``p`` without reparsing. Ranges are validated."""
    _check_ranges(src, p)
    out = src
    for path in src.paths:
        edits = sorted((e for e in p.edits if e.file == path), key=lambda e: (e.start, e.end), reverse=True)
        if not edits:
            continue
        text = src.text(path)
        for e in edits:
            text = text[:e.start] + e.text + text[e.end:]
        out = out.replace_file(path, text)
    return out


def apply_patch(src: SourceProject, p: Patch) -> SourceProject:
    """Apply ``p`` to ``src`` and return the new project; ``src`` is untouched.

    Raises RangeError for bad or overlapping ranges and ReparseError when the
    result no longer parses.
    """
    from .parser import parse_project

    out = apply_edits(src, p)
    try:
        parse_project(out)
    except (ParseError, UnsupportedFeature) as exc:
        raise ReparseError(exc) from exc
    return out


def replace_text_patch(src: SourceProject, file: str, old: str, new: str, provenance: str = "agent") -> Patch:
    """Build a patch replacing the unique occurrence of ``old`` in ``file``."""
    if not src.has_file(file):
        raise RangeError(f"unknown file {file!r}")
    text = src.text(file)
    idx = text.find(old)
    if idx < 0 or not old:
        raise RangeError(f"text to replace not found in {file!r}")
    if text.find(old, idx + 1) >= 0:
        raise RangeError(f"text to replace is not unique in {file!r}")
    return Patch((Edit(file, idx, idx + len(old), new),), provenance)
