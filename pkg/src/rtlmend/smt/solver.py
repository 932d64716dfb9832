"""Running an external SMT solver on instrumented designs and minimizing the repair."""

from __future__ import annotations

import logging
import shlex
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from ..rtl.elaborate import TransitionSystem
from ..rtl.source import SourceProject
from ..waveform.trace import Testbench
from .actions import RepairResult, SolverStats
from .bmc import SmtScript, encode_bmc
from .smtlib import SexpError, parse_model, parse_sexps, sym
from .templates import FreeVarMap, RepairTemplate, instrument

log = logging.getLogger(__name__)

DEFAULT_SOLVER = "z3 -in"
DEFAULT_TIMEOUT = 60.0


class SolverProcessError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    command: str = DEFAULT_SOLVER
    timeout_s: float = DEFAULT_TIMEOUT
    horizon: Optional[int] = None
    minimize: bool = True
    work_dir: Optional[Path] = None


@dataclass(frozen=True)
class CheckResult:
    status: str  # 'sat' | 'unsat' | 'timeout' | 'unknown'
    model: dict


def check(script: str, cmd: str = DEFAULT_SOLVER, timeout_s: float = DEFAULT_TIMEOUT) -> CheckResult:
    """Run one ``check-sat`` query; ``script`` must not contain one."""
    full = script + "(check-sat)\n(get-model)\n(exit)\n"
    try:
        proc = subprocess.run(shlex.split(cmd), input=full, capture_output=True, text=True, timeout=timeout_s)
    except subprocess.TimeoutExpired:
        return CheckResult("timeout", {})
    except OSError as e:
        raise SolverProcessError(f"cannot start solver {cmd!r}: {e}") from e
    out = proc.stdout.lstrip()
    first, _, rest = out.partition("\n")
    status = first.strip()
    if status == "sat":
        try:
            sexps = parse_sexps(rest)
        except SexpError as e:
            raise SolverProcessError(f"unreadable model: {e}") from e
        model = {}
        for s in sexps:
            if isinstance(s, list):
                model.update(parse_model(s))
        return CheckResult("sat", model)
    if status in ("unsat", "unknown"):
        return CheckResult(status, {})
    if status == "timeout":
        return CheckResult("timeout", {})
    raise SolverProcessError(f"solver failed (exit {proc.returncode}): {(proc.stderr or out).strip()[:400]}")


def _cardinality(flags: list[tuple[str, int]], k: int) -> str:
    """Assert that at most ``k`` change flags are set."""
    n = len(flags)
    w = max(1, n.bit_length())
    terms = []
    for name, fw in flags:
        t = sym(name) if fw == 1 else f"(ite (= {sym(name)} (_ bv0 {fw})) #b0 #b1)"
        terms.append(f"((_ zero_extend {w - 1}) {t})" if w > 1 else t)
    total = terms[0]
    for t in terms[1:]:
        total = f"(bvadd {total} {t})"
    return f"(assert (bvule {total} (_ bv{k} {w})))\n"


def solve(script: SmtScript, fmap: FreeVarMap, budget_s: Optional[float] = None,
          config: SolverConfig = SolverConfig()) -> RepairResult:
    """Solve an encoded instrumentation and decode the model into repair actions.

    On success the returned actions use the fewest change flags: after a
    first unconstrained check, at-most-k bounds are tried for k = 0, 1, ...
    An unsat or timed-out query gives a result with no actions.
    """
    budget = config.timeout_s if budget_s is None else budget_s
    kind = fmap.template.kind
    flags = [(f, fmap.vars[f].width) for f in fmap.change_flags.values()]
    t0 = time.monotonic()
    runs = 0

    def run(extra: str, tag: str) -> CheckResult:
        nonlocal runs
        runs += 1
        text = script.text + extra
        if config.work_dir is not None:
            config.work_dir.mkdir(parents=True, exist_ok=True)
            (config.work_dir / f"{kind}_{tag}.smt2").write_text(text + "(check-sat)\n")
        left = budget - (time.monotonic() - t0)
        if left <= 0:
            return CheckResult("timeout", {})
        return check(text, config.command, left)

    first = run("", "free")
    if first.status != "sat":
        return RepairResult(kind, (), _stats(t0, first.status, None, runs))
    best = first
    if config.minimize and flags:
        for k in range(len(flags) + 1):
            r = run(_cardinality(flags, k), f"k{k}")
            if r.status == "sat":
                best = r
                break
            if r.status != "unsat":
                log.info("minimization stopped at k=%d: %s", k, r.status)
                break
    model = dict(best.model)
    actions = fmap.decode(model)
    active = sum(1 for f, _ in flags if model.get(f, 0))
    return RepairResult(kind, actions, _stats(t0, "sat", active, runs), model)


def solve_repair(ts: TransitionSystem, tbs: Union[Testbench, Sequence[Testbench]], template: RepairTemplate,
                 config: SolverConfig = SolverConfig(), project: Optional[SourceProject] = None) -> RepairResult:
    """Instrument ``ts`` with ``template``, encode it against ``tbs`` and solve."""
    inst, fmap = instrument(ts, template, project)
    script = encode_bmc(inst, tbs, config.horizon)
    return solve(script, fmap, config.timeout_s, config)


def _stats(t0: float, result: str, active: Optional[int], runs: int) -> SolverStats:
    return SolverStats(round((time.monotonic() - t0) * 1000.0, 3), result, active, runs)


def describe_map(fmap: FreeVarMap) -> str:
    return ", ".join(f"{v.name}:{v.width}" for v in fmap.vars.values())
