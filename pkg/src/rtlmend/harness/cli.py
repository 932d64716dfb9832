"""Command-line entry points: repair, verify, synth-bench and passk."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..agents.backend import LlmBackend, LlmBackendError, make_backend
from ..agents.budget import Budget
from ..rtl.elaborate import elaborate
from ..rtl.parser import parse_project
from ..rtl.source import RtlError, SourceProject
from ..search import SearchFixed, render_tree, report_json, run_search
from ..search.report import tree_report
from ..waveform import Testbench, compare, simulate
from .config import ConfigError, ProjectConfig, load_config, load_testbenches
from .synth import BUG_CLASSES, ResampleExhausted, synth_bench, write_bench

log = logging.getLogger("rtlmend")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _inputs(project: SourceProject) -> Optional[dict[str, int]]:
    try:
        return elaborate(parse_project(project), project.top_module).inputs
    except RtlError:
        return None


def prepare(cfg: ProjectConfig) -> tuple[SourceProject, list[Testbench]]:
    cfg.check_files()
    project = cfg.project()
    return project, load_testbenches(cfg, _inputs(project))


def backend_for(cfg: ProjectConfig, replay: Optional[Path]) -> LlmBackend:
    if replay is not None:
        return make_backend("replay", replay)
    return make_backend(cfg.llm_backend, cfg.replay_dir)


def cmd_repair(cfg: ProjectConfig, llm: LlmBackend, work_dir: Optional[Path] = None,
               max_expansions: Optional[int] = None):
    """Run the search and write its artifacts. Returns (exit code, outcome)."""
    project, tbs = prepare(cfg)
    work = Path(work_dir or cfg.work_dir)
    work.mkdir(parents=True, exist_ok=True)
    outcome = run_search(project, tbs, cfg.search_config(work), llm, max_expansions)
    write_artifacts(work, outcome)
    return (EXIT_OK if outcome.ok else EXIT_FAIL), outcome


def write_artifacts(work: Path, outcome) -> None:
    patches = [p.to_json() for p in outcome.patches] if isinstance(outcome, SearchFixed) else []
    _dump(work / "patches.json", patches)
    (work / "report.json").write_text(report_json(outcome))
    (work / "report.txt").write_text(render_tree(outcome))
    _dump(work / "stats.json", outcome.stats.to_json())
    if isinstance(outcome, SearchFixed):
        outcome.project.write(work / "patched")
    (work / "transcripts").mkdir(exist_ok=True)
    (work / "nodes").mkdir(exist_ok=True)
    entries = {n["id"]: n for n in tree_report(outcome)["nodes"]}
    for n in outcome.tree.nodes:
        _dump(work / "transcripts" / f"node_{n.id}.json", n.state.transcript.to_json())
        d = work / "nodes" / f"node_{n.id}"
        n.state.project.write(d / "src")
        _dump(d / "node.json", {**entries[n.id], "patch_stack": [p.to_json() for p in n.state.patches]})


def cmd_verify(cfg: ProjectConfig, patched_dir: Path, out=None) -> int:
    out = out or sys.stdout
    for tb in cfg.testbenches:
        if not tb.golden.is_file():
            raise ConfigError(f"golden trace {tb.golden} not found")
    try:
        project = cfg.project(Path(patched_dir))
        ts = elaborate(parse_project(project), project.top_module)
    except RtlError as e:
        print(f"error: {e}", file=out)
        return EXIT_FAIL
    tbs = load_testbenches(cfg, ts.inputs)
    all_ok = True
    for tb in tbs:
        try:
            ok, mm = compare(simulate(ts, tb), tb.golden)
        except ValueError as e:
            print(f"{tb.name}: FAIL ({e})", file=out)
            all_ok = False
            continue
        print(f"{tb.name}: {'PASS' if ok else 'FAIL'} ({len(mm)} mismatching cell(s))", file=out)
        if not ok:
            all_ok = False
            print(f"  {'signal':<16} {'cycle':>6} {'got':>10} {'expected':>10}", file=out)
            for m in mm[:20]:
                got = "-" if m.got is None else hex(m.got)
                exp = "-" if m.expected is None else hex(m.expected)
                print(f"  {m.signal:<16} {m.cycle:>6} {got:>10} {exp:>10}", file=out)
            if len(mm) > 20:
                print(f"  ... {len(mm) - 20} more", file=out)
    return EXIT_OK if all_ok else EXIT_FAIL


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased estimate of the chance that at least one of k trials succeeds, from c successes in n."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if n - c < k:
        return 1.0
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)


def cmd_passk(cfg: ProjectConfig, k: int, llm_factory, trials: Optional[int] = None,
              work_dir: Optional[Path] = None) -> dict:
    """Run independent trials with seeds base+i; every trial gets a fresh backend and work directory."""
    if k < 1:
        raise ValueError("k must be at least 1")
    n = trials or k
    if n < k:
        raise ValueError("need at least k trials")
    work = Path(work_dir or cfg.work_dir)
    rows = []
    for i in range(n):
        tcfg = cfg.with_overrides(seed=cfg.seed + i)
        try:
            code, out = cmd_repair(tcfg, llm_factory(), work / f"trial_{i}")
            rows.append({"trial": i, "seed": tcfg.seed, "fixed": code == EXIT_OK,
                         "wall_seconds": round(out.stats.wall_seconds, 3), "tokens": out.stats.tokens,
                         "outcome": "fixed" if out.ok else out.reason})
        except LlmBackendError as e:
            rows.append({"trial": i, "seed": tcfg.seed, "fixed": False, "wall_seconds": 0.0, "tokens": 0,
                         "outcome": f"backend error: {e}"})
    c = sum(r["fixed"] for r in rows)
    res = {"k": k, "trials": n, "fixed": c, "fraction_fixed": c / n, "pass_at_1": pass_at_k(n, c, 1),
           f"pass_at_{k}": pass_at_k(n, c, k), "per_trial": rows}
    work.mkdir(parents=True, exist_ok=True)
    _dump(work / "passk.json", res)
    return res


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtlmend", description="Agentic repair of RTL designs against golden waveforms.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def overrides(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--work-dir", type=Path)
        p.add_argument("--replay", type=Path, help="replay LLM replies from this fixture directory")
        p.add_argument("--max-ops", type=int, help="operations per hypothesis")
        p.add_argument("--max-tokens", type=int)
        p.add_argument("--max-wall", type=float, help="seconds")
        p.add_argument("--solver", help="SMT solver command line")
        p.add_argument("--lint-cmd", help="external linter command")
        p.add_argument("--no-smt", action="store_true", help="hide the SMT repair tool from the agent")
        p.add_argument("--sampling", choices=("softmax", "latest"))

    p = sub.add_parser("repair", help="repair a design")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--max-expansions", type=int)
    overrides(p)
    p = sub.add_parser("verify", help="check a patched design against the golden traces")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--patched-dir", type=Path, required=True)
    p = sub.add_parser("synth-bench", help="generate a random design with one injected bug")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bug-class", choices=BUG_CLASSES, required=True)
    p.add_argument("--out", type=Path, required=True)
    p = sub.add_parser("passk", help="estimate pass@k over independent trials")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--trials", type=int, help="number of trials (default k)")
    overrides(p)
    return ap


def _apply_overrides(cfg: ProjectConfig, a) -> ProjectConfig:
    b = cfg.budget
    try:
        budget = Budget(a.max_ops or b.max_ops_per_hypothesis,
                        b.max_tokens_total if a.max_tokens is None else a.max_tokens,
                        b.max_wall_seconds if a.max_wall is None else a.max_wall)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg.with_overrides(seed=a.seed, work_dir=a.work_dir, budget=budget, solver_cmd=a.solver,
                              lint_cmd=a.lint_cmd, sampling=a.sampling, smt_enabled=False if a.no_smt else None)


def main(argv: Optional[Sequence[str]] = None, llm: Optional[LlmBackend] = None) -> int:
    """``llm`` replaces the configured backend (used by tests and embedding code)."""
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if a.cmd == "synth-bench":
            try:
                bench = synth_bench(a.seed, a.bug_class)
            except ResampleExhausted as e:
                print(f"error: {e}", file=sys.stderr)
                return EXIT_FAIL
            write_bench(bench, a.out)
            inj = bench.injection
            print(f"{a.out}: {inj.bug_class} on {inj.target} at {inj.site}")
            return EXIT_OK
        cfg = load_config(a.config)
        if a.cmd == "verify":
            return cmd_verify(cfg, a.patched_dir)
        cfg = _apply_overrides(cfg, a)
        if a.cmd == "repair":
            backend = llm or backend_for(cfg, a.replay)
            code, out = cmd_repair(cfg, backend, max_expansions=a.max_expansions)
            if out.ok:
                print(f"fixed with {len(out.patches)} patch(es); artifacts in {cfg.work_dir}")
            else:
                print(f"not fixed: {out.reason}; artifacts in {cfg.work_dir}")
            return code
        if a.cmd == "passk":
            factory = (lambda: llm) if llm is not None else (lambda: backend_for(cfg, a.replay))
            res = cmd_passk(cfg, a.k, factory, a.trials)
            for r in res["per_trial"]:
                print(f"trial {r['trial']} seed {r['seed']}: {r['outcome']} "
                      f"({r['wall_seconds']}s, {r['tokens']} tokens)")
            print(f"fixed {res['fixed']}/{res['trials']}; pass@1 = {res['pass_at_1']:.3f}; "
                  f"pass@{a.k} = {res[f'pass_at_{a.k}']:.3f}")
            return EXIT_OK
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LlmBackendError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
