import json
import math
import shutil
from pathlib import Path

import pytest

from rtlmend.agents import RecordingBackend
from rtlmend.harness import (BUG_CLASSES, ConfigError, cmd_passk, cmd_repair, load_config, load_testbenches, main,
                             pass_at_k, synth_bench, write_bench)
from rtlmend.harness.cli import prepare
from rtlmend.waveform import compare, simulate, vcd_read, vcd_write

from .conftest import FIXTURES
from .support.designs import design
from .support.policy import ScriptedDebugger
from .support.scripted import Script

SYNTH = FIXTURES / "synth"


@pytest.fixture
def bench(tmp_path) -> Path:
    d = tmp_path / "bench"
    shutil.copytree(SYNTH / "IncorrectBinaryOp", d)
    return d


# -- configuration -------------------------------------------------------------------------------------------------

FULL = """
[project]
sources = ["design.v"]
top = "synth_top"
work_dir = "out"
seed = 9

[[testbench]]
name = "t"
golden = "golden.vcd"
stimulus = "stimulus.vcd"
reset = { signal = "rst", value = 1, cycles = 2 }

[budget]
max_ops_per_hypothesis = 5
max_tokens_total = 1000
max_wall_seconds = 60

[heuristic]
lambda1 = 40
base_b = 0

[search]
max_children_per_node = 2
sampling = "latest"
count_all_tools = true
summary_cap = 300

[smt]
enabled = false
solver_cmd = "z3 -in -T:5"
timeout_s = 5
horizon = 16
persist = true

[lint]
external_cmd = "verilator --lint-only"
parse_regex = "^(?P<file>[^:]+):(?P<line>\\\\d+): (?P<message>.*)$"

[llm]
backend = "replay"
replay_dir = "replay"
"""


def test_full_config_is_read(bench):
    (bench / "full.toml").write_text(FULL)
    cfg = load_config(bench / "full.toml")
    assert cfg.top == "synth_top" and cfg.seed == 9 and cfg.work_dir == bench.resolve() / "out"
    assert cfg.budget.max_ops_per_hypothesis == 5 and cfg.budget.max_wall_seconds == 60.0
    assert cfg.coeffs.lambda1 == 40.0 and cfg.coeffs.base_b == 0.0 and cfg.coeffs.lambda2 == 1.0
    assert cfg.max_children_per_node == 2 and cfg.sampling == "latest" and cfg.count_all_tools
    assert not cfg.smt_enabled and cfg.horizon == 16 and cfg.persist_smt
    assert cfg.lint_cmd.startswith("verilator") and "(?P<line>" in cfg.lint_regex
    assert cfg.llm_backend == "replay" and cfg.replay_dir == bench.resolve() / "replay"
    tb = cfg.testbenches[0]
    assert tb.reset.cycles == 2 and tb.name == "t"
    sc = cfg.search_config()
    assert sc.solver.work_dir == cfg.work_dir / "smt" and sc.rng_seed == 9


@pytest.mark.parametrize("body", [
    "[project]\ntop = 'x'\n[[testbench]]\ngolden = 'g.vcd'\n",
    "[project]\nsources = ['a.v']\ntop = 'x'\n",
    "[project]\nsources = ['a.v']\ntop = 'x'\n[[testbench]]\nname = 'no golden'\n",
    "[project]\nsources = ['a.v']\ntop = 'x'\n[[testbench]]\ngolden = 'g.vcd'\n[budget]\nmax_ops_per_hypothesis = 0\n",
    "[project]\nsources = ['a.v']\ntop = 'x'\n[[testbench]]\ngolden = 'g.vcd'\n[search]\nsampling = 'greedy'\n",
    "[project]\nsources = ['a.v']\ntop = 3\n[[testbench]]\ngolden = 'g.vcd'\n",
    "[project\n",
])
def test_bad_configs_are_rejected(tmp_path, body):
    (tmp_path / "c.toml").write_text(body)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.toml")


def test_missing_golden_exits_with_config_error(bench, capsys):
    (bench / "golden.vcd").unlink()
    assert main(["repair", "--config", str(bench / "config.toml"), "--replay", str(bench / "replay")]) == 2
    assert "golden" in capsys.readouterr().err
    assert main(["verify", "--config", str(bench / "config.toml"), "--patched-dir", str(bench)]) == 2
    assert main(["repair", "--config", str(bench / "nope.toml")]) == 2


def test_missing_stimulus_uses_design_inputs(bench):
    stim = vcd_read((bench / "stimulus.vcd").read_bytes())
    gold = vcd_read((bench / "golden.vcd").read_bytes())
    (bench / "golden.vcd").write_bytes(vcd_write(stim.merge(gold)))
    text = (bench / "config.toml").read_text().replace('stimulus = "stimulus.vcd"\n', "")
    (bench / "config.toml").write_text(text)
    cfg = load_config(bench / "config.toml")
    assert cfg.testbenches[0].stimulus is None
    _project, tbs = prepare(cfg)
    ts = design((bench / "design.v").read_text(), "synth_top")
    assert set(tbs[0].stimulus.signals) == set(ts.inputs)
    assert set(tbs[0].golden.signals) == set(ts.outputs)
    assert tbs[0].golden.signals == gold.restrict(ts.outputs).signals


# -- synthetic benchmarks ------------------------------------------------------------------------------------------

@pytest.mark.parametrize("cls", BUG_CLASSES)
def test_synth_bench_is_deterministic(tmp_path, cls):
    a, b = synth_bench(3, cls), synth_bench(3, cls)
    assert (a.reference, a.buggy, a.testbench, a.injection) == (b.reference, b.buggy, b.testbench, b.injection)
    write_bench(a, tmp_path / "a")
    write_bench(b, tmp_path / "b")
    for f in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("cls", BUG_CLASSES)
def test_injected_bug_fails_golden_and_reference_passes(cls):
    for seed in range(4):
        sb = synth_bench(seed, cls)
        tb = sb.testbench
        assert compare(simulate(design(sb.reference, "synth_top"), tb), tb.golden)[0]
        assert not compare(simulate(design(sb.buggy, "synth_top"), tb), tb.golden)[0]
        inj = sb.injection
        assert sb.buggy[inj.site.start:inj.site.start + len(inj.mutated)] == inj.mutated
        assert sb.reference[inj.site.start:inj.site.end] == inj.original


def test_synth_bench_rejects_unknown_class():
    with pytest.raises(ValueError):
        synth_bench(0, "OffByTwo")


def test_synth_bench_command(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["synth-bench", "--seed", "4", "--bug-class", "NegateIfCondition", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} >= {"design.v", "golden.vcd", "stimulus.vcd", "bug.json", "config.toml",
                                                "reference"}
    assert "NegateIfCondition" in capsys.readouterr().out
    # the generated config verifies the reference and rejects the buggy design
    assert main(["verify", "--config", str(out / "config.toml"), "--patched-dir", str(out / "reference")]) == 0
    assert main(["verify", "--config", str(out / "config.toml"), "--patched-dir", str(out)]) == 1


# -- repair and verify ---------------------------------------------------------------------------------------------

def test_repair_from_replay_and_verify(bench, capsys):
    work = bench / "work"
    code = main(["repair", "--config", str(bench / "config.toml"), "--replay", str(bench / "replay"),
                 "--work-dir", str(work)])
    assert code == 0
    assert "fixed with 1 patch(es)" in capsys.readouterr().out
    for name in ("patches.json", "report.json", "report.txt", "stats.json", "patched/design.v"):
        assert (work / name).is_file()
    report = json.loads((work / "report.json").read_text())
    assert report["outcome"] == "fixed"
    node_ids = [n["id"] for n in report["nodes"]]
    assert all((work / "transcripts" / f"node_{i}.json").is_file() for i in node_ids)
    assert all((work / "nodes" / f"node_{i}" / "node.json").is_file() for i in node_ids)
    assert main(["verify", "--config", str(bench / "config.toml"), "--patched-dir", str(work / "patched")]) == 0
    out = capsys.readouterr().out
    assert "random: PASS" in out
    assert main(["verify", "--config", str(bench / "config.toml"), "--patched-dir", str(bench)]) == 1
    out = capsys.readouterr().out
    assert "random: FAIL" in out and "signal" in out


def test_verify_reports_unparsable_design(bench, capsys):
    bad = bench / "bad"
    bad.mkdir()
    (bad / "design.v").write_text("module synth_top(input clk;\nendmodule\n")
    assert main(["verify", "--config", str(bench / "config.toml"), "--patched-dir", str(bad)]) == 1
    assert capsys.readouterr().out.startswith("error:")


def test_correct_design_gives_empty_patch_stack(bench):
    shutil.copy(bench / "reference" / "design.v", bench / "design.v")
    code = main(["repair", "--config", str(bench / "config.toml"), "--work-dir", str(bench / "w")], llm=Script())
    assert code == 0
    assert json.loads((bench / "w" / "patches.json").read_text()) == []


def test_unfixed_search_exits_one(bench, capsys):
    code = main(["repair", "--config", str(bench / "config.toml"), "--work-dir", str(bench / "w")], llm=Script())
    assert code == 1
    assert "not fixed: every hypothesis is exhausted" in capsys.readouterr().out
    assert json.loads((bench / "w" / "report.json").read_text())["outcome"] == "failed"


def test_diverging_replay_is_not_a_fix(bench):
    code = main(["repair", "--config", str(bench / "config.toml"), "--replay", str(SYNTH / "NegateIfCondition" /
                                                                                  "replay"),
                 "--work-dir", str(bench / "w")])
    assert code == 1
    stats = json.loads((bench / "w" / "stats.json").read_text())
    assert stats["step_failures"] == 3


def test_overrides_reach_the_search(bench):
    cfg = load_config(bench / "config.toml")
    code, out = cmd_repair(cfg.with_overrides(sampling="latest"), RecordingBackend(ScriptedDebugger(bench)),
                           bench / "w", max_expansions=1)
    assert code == 1 and out.reason == "expansion limit reached"
    with pytest.raises(SystemExit):
        main(["repair", "--config", str(bench / "config.toml"), "--sampling", "random"])
    assert main(["repair", "--config", str(bench / "config.toml"), "--max-ops", "0"], llm=Script()) in (1, 2)


# -- pass@k --------------------------------------------------------------------------------------------------------

def test_pass_at_k_estimator():
    assert pass_at_k(10, 8, 1) == pytest.approx(0.8)
    assert pass_at_k(10, 2, 3) == pytest.approx(1 - math.comb(8, 3) / math.comb(10, 3))
    assert pass_at_k(10, 8, 3) == 1.0
    assert pass_at_k(5, 0, 5) == 0.0
    with pytest.raises(ValueError):
        pass_at_k(3, 1, 4)


def _factory(bench, fixes):
    made = []

    def make():
        i = len(made)
        made.append(i)
        return RecordingBackend(ScriptedDebugger(bench)) if fixes(i) else Script()
    return make


@pytest.mark.parametrize("fixes,want", [(lambda i: True, 1.0), (lambda i: False, 0.0), (lambda i: i < 8, 0.8)])
def test_passk_protocol(bench, fixes, want):
    cfg = load_config(bench / "config.toml")
    res = cmd_passk(cfg, 1, _factory(bench, fixes), trials=10, work_dir=bench / "pk")
    assert res["trials"] == 10 and res["pass_at_1"] == pytest.approx(want)
    assert [r["seed"] for r in res["per_trial"]] == list(range(cfg.seed, cfg.seed + 10))
    saved = json.loads((bench / "pk" / "passk.json").read_text())
    assert saved["fixed"] == round(want * 10)
    assert all((bench / "pk" / f"trial_{i}" / "report.json").is_file() for i in range(10))


def test_passk_command(bench, capsys):
    code = main(["passk", "--config", str(bench / "config.toml"), "-k", "2", "--trials", "3",
                 "--work-dir", str(bench / "pk")], llm=RecordingBackend(ScriptedDebugger(bench)))
    assert code == 0
    out = capsys.readouterr().out
    assert "fixed 3/3; pass@1 = 1.000; pass@2 = 1.000" in out
    with pytest.raises(ValueError):
        cmd_passk(load_config(bench / "config.toml"), 3, Script, trials=2)


def test_loaded_testbenches_match_the_bench(bench):
    cfg = load_config(bench / "config.toml")
    tbs = load_testbenches(cfg)
    assert len(tbs) == 1 and tbs[0].name == "random" and tbs[0].n_cycles == 48


def test_seed_one_negated_condition_fails_golden():
    sb = synth_bench(1, "NegateIfCondition")
    assert sb.injection.bug_class == "NegateIfCondition"
    assert "if (!(" in sb.buggy or "if (!" in sb.buggy
    tb = sb.testbench
    ok, mism = compare(simulate(design(sb.buggy, "synth_top"), tb), tb.golden)
    assert not ok and mism
