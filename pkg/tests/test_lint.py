import json
import sys
from pathlib import Path

import pytest

from rtlmend.lint import DEFAULT_REGEX, lint_project, parse_output, render, run_external_linter
from rtlmend.rtl import RtlError, SourceProject, elaborate, parse_project

from .conftest import FIXTURES
from .support.designs import COUNTER, project

LINT_DIR = FIXTURES / "lint"
EXPECTED = json.loads((LINT_DIR / "expected.json").read_text())


def lint_file(path: Path):
    src = SourceProject.from_texts({path.name: path.read_text()}, "top")
    mods = parse_project(src)
    try:
        ts = elaborate(mods, "top")
    except RtlError:
        ts = None
    return lint_project(ts, mods, "top")


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_lint_corpus_codes(name):
    msgs = lint_file(LINT_DIR / name)
    assert sorted({m.code for m in msgs}) == EXPECTED[name]
    assert all(m.file == name and m.line > 0 for m in msgs)


def test_corpus_has_two_designs_per_check():
    per_code = {}
    for codes in EXPECTED.values():
        for c in codes:
            per_code[c] = per_code.get(c, 0) + 1
    assert per_code == {c: 2 for c in ("LATCH_INFERRED", "MULTI_DRIVEN", "PART_DRIVEN", "UNDRIVEN", "UNUSED",
                                       "WIDTH_MISMATCH")}


def test_clean_design_has_no_messages():
    src = project(COUNTER.format(lim=6))
    mods = parse_project(src)
    assert lint_project(elaborate(mods, "top"), mods) == []


def test_lint_never_raises_on_elaboration_failure():
    src = project("module top(input a, output y);\n  wire p;\n  assign p = p & a;\n  assign y = p;\nendmodule\n")
    msgs = lint_project(None, parse_project(src))
    assert [m.code for m in msgs] == ["COMB_LOOP"]


def test_render_one_line_per_message():
    msgs = lint_file(LINT_DIR / "unused_1.v")
    assert render(msgs).splitlines() == [str(m) for m in msgs]


def test_parse_output_default_regex():
    out = "x/top.v:3:5: Warning: UNUSEDSIGNAL: Signal is not used: 't'\nnoise\ntop.v:7: error: something broke\n"
    msgs = parse_output(out, DEFAULT_REGEX, root="x")
    assert [(m.file, m.line, m.col, m.code, m.severity) for m in msgs] == [
        ("top.v", 3, 5, "UNUSEDSIGNAL", "warning"), ("top.v", 7, 0, "EXTERNAL", "error")]


def test_external_linter_subprocess(tmp_path):
    script = tmp_path / "fake_lint.py"
    script.write_text("import sys, os\n"
                      "for f in sys.argv[1:]:\n"
                      "    print(f'%Warning-WIDTH: {f}:2:3: width off')\n")
    src = project(COUNTER.format(lim=6))
    msgs = run_external_linter(src, [sys.executable, str(script)],
                               r"^%(?P<severity>\w+)-(?P<code>\w+): (?P<file>[^:]+):(?P<line>\d+):(?P<col>\d+): "
                               r"(?P<message>.*)$")
    assert [(m.file, m.line, m.code) for m in msgs] == [("top.v", 2, "WIDTH")]


def test_external_linter_failures_become_messages(tmp_path):
    src = project(COUNTER.format(lim=6))
    assert run_external_linter(src, None) == []
    msgs = run_external_linter(src, str(tmp_path / "does-not-exist"))
    assert [m.code for m in msgs] == ["LINT_TOOL_ERROR"]
