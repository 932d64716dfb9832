"""Project configuration files (TOML) and testbench loading."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..agents.budget import DEFAULT_MAX_OPS, DEFAULT_MAX_TOKENS, DEFAULT_MAX_WALL, Budget
from ..rtl.source import SourceProject
from ..search import HeuristicCoeffs, SearchConfig
from ..smt import SolverConfig
from ..smt.solver import DEFAULT_SOLVER, DEFAULT_TIMEOUT
from ..waveform import ResetSpec, Testbench, VcdFormatError, vcd_read


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TestbenchSpec:
    __test__ = False  # not a pytest class

    golden: Path
    stimulus: Optional[Path] = None
    name: str = "tb"
    clock: Optional[str] = None
    reset: Optional[ResetSpec] = None


@dataclass(frozen=True)
class ProjectConfig:
    base_dir: Path
    sources: tuple[Path, ...]
    top: str
    testbenches: tuple[TestbenchSpec, ...]
    work_dir: Path
    seed: int = 0
    budget: Budget = field(default_factory=Budget)
    coeffs: HeuristicCoeffs = field(default_factory=HeuristicCoeffs)
    max_children_per_node: Optional[int] = 4
    sampling: str = "softmax"
    count_all_tools: bool = False
    summary_cap: int = 2000
    smt_enabled: bool = True
    solver_cmd: str = DEFAULT_SOLVER
    solver_timeout_s: float = DEFAULT_TIMEOUT
    horizon: Optional[int] = None
    persist_smt: bool = False
    lint_cmd: Optional[str] = None
    lint_regex: Optional[str] = None
    llm_backend: str = "live"
    replay_dir: Optional[Path] = None

    def check_files(self) -> None:
        for p in self.sources:
            if not p.is_file():
                raise ConfigError(f"source file {p} not found")
        for tb in self.testbenches:
            if not tb.golden.is_file():
                raise ConfigError(f"golden trace {tb.golden} not found")
            if tb.stimulus is not None and not tb.stimulus.is_file():
                raise ConfigError(f"stimulus trace {tb.stimulus} not found")

    def project(self, directory: Optional[Path] = None) -> SourceProject:
        """The design sources, optionally re-rooted at ``directory`` (same relative paths)."""
        if directory is None:
            return SourceProject.load(self.sources, self.top, root=self.base_dir)
        rel = [p.relative_to(self.base_dir) for p in self.sources]
        missing = [str(r) for r in rel if not (directory / r).is_file()]
        if missing:
            raise ConfigError(f"{directory} lacks {', '.join(missing)}")
        return SourceProject.load([directory / r for r in rel], self.top, root=directory)

    def search_config(self, work_dir: Optional[Path] = None) -> SearchConfig:
        smt_dir = (work_dir or self.work_dir) / "smt" if self.persist_smt else None
        solver = SolverConfig(self.solver_cmd, self.solver_timeout_s, self.horizon, True, smt_dir)
        return SearchConfig(self.coeffs, self.seed, self.budget, self.max_children_per_node, self.sampling, 3,
                            solver, self.lint_cmd, self.summary_cap, self.count_all_tools, self.smt_enabled,
                            self.lint_regex)

    def with_overrides(self, **kw) -> "ProjectConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _get(d: dict, key: str, typ, default=None, where: str = ""):
    if key not in d:
        return default
    v = d[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
        raise ConfigError(f"{where}{key} must be {typ.__name__}")
    return v


def load_config(path: Path) -> ProjectConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    base = path.parent.resolve()
    proj = raw.get("project", {})
    srcs = _get(proj, "sources", list, where="project.")
    top = _get(proj, "top", str, where="project.")
    if not srcs or top is None:
        raise ConfigError("project.sources and project.top are required")
    tbs = []
    for i, t in enumerate(raw.get("testbench", [])):
        where = f"testbench[{i}]."
        golden = _get(t, "golden", str, where=where)
        if golden is None:
            raise ConfigError(f"{where}golden is required")
        stim = _get(t, "stimulus", str, where=where)
        reset = None
        if "reset" in t:
            r = t["reset"]
            reset = ResetSpec(_get(r, "signal", str, "rst", where), _get(r, "value", int, 1, where),
                              _get(r, "cycles", int, 1, where))
        tbs.append(TestbenchSpec(base / golden, base / stim if stim else None,
                                 _get(t, "name", str, f"tb{i}", where), _get(t, "clock", str, where=where), reset))
    if not tbs:
        raise ConfigError("at least one [[testbench]] is required")
    b = raw.get("budget", {})
    try:
        budget = Budget(_get(b, "max_ops_per_hypothesis", int, DEFAULT_MAX_OPS, "budget."),
                        _get(b, "max_tokens_total", int, DEFAULT_MAX_TOKENS, "budget."),
                        _get(b, "max_wall_seconds", float, DEFAULT_MAX_WALL, "budget."))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    h = raw.get("heuristic", {})
    dc = HeuristicCoeffs()
    coeffs = HeuristicCoeffs(*(_get(h, k, float, getattr(dc, k), "heuristic.")
                               for k in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "base_b")))
    s = raw.get("search", {})
    smt = raw.get("smt", {})
    lint = raw.get("lint", {})
    llm = raw.get("llm", {})
    replay = _get(llm, "replay_dir", str, where="llm.")
    cfg = ProjectConfig(
        base_dir=base,
        sources=tuple(base / p for p in srcs),
        top=top,
        testbenches=tuple(tbs),
        work_dir=base / _get(proj, "work_dir", str, "work", "project."),
        seed=_get(proj, "seed", int, 0, "project."),
        budget=budget,
        coeffs=coeffs,
        max_children_per_node=_get(s, "max_children_per_node", int, 4, "search."),
        sampling=_get(s, "sampling", str, "softmax", "search."),
        count_all_tools=_get(s, "count_all_tools", bool, False, "search."),
        summary_cap=_get(s, "summary_cap", int, 2000, "search."),
        smt_enabled=_get(smt, "enabled", bool, True, "smt."),
        solver_cmd=_get(smt, "solver_cmd", str, DEFAULT_SOLVER, "smt."),
        solver_timeout_s=_get(smt, "timeout_s", float, DEFAULT_TIMEOUT, "smt."),
        horizon=_get(smt, "horizon", int, None, "smt."),
        persist_smt=_get(smt, "persist", bool, False, "smt."),
        lint_cmd=_get(lint, "external_cmd", str, None, "lint.") or None,
        lint_regex=_get(lint, "parse_regex", str, None, "lint.") or None,
        llm_backend=_get(llm, "backend", str, "live", "llm."),
        replay_dir=base / replay if replay else None,
    )
    if cfg.sampling not in ("softmax", "latest"):
        raise ConfigError(f"search.sampling must be 'softmax' or 'latest'")
    return cfg


def load_testbenches(cfg: ProjectConfig, inputs: Optional[dict[str, int]] = None) -> list[Testbench]:
    """Read every testbench. Golden signals are those absent from the stimulus."""
    out = []
    for spec in cfg.testbenches:
        try:
            golden = vcd_read(spec.golden.read_bytes(), spec.clock)
            stim = vcd_read(spec.stimulus.read_bytes(), spec.clock) if spec.stimulus else None
        except (OSError, VcdFormatError) as e:
            raise ConfigError(f"testbench {spec.name}: {e}") from e
        if stim is None:
            if inputs is None:
                raise ConfigError(f"testbench {spec.name}: no stimulus file and no design inputs to pick")
            names = [n for n in golden.signals if n in inputs]
            stim = golden.restrict(names)
        outs = [n for n in golden.signals if n not in stim.signals]
        if stim.n_cycles != golden.n_cycles:
            raise ConfigError(f"testbench {spec.name}: stimulus has {stim.n_cycles} cycles, golden has "
                              f"{golden.n_cycles}")
        out.append(Testbench(stim, golden.restrict(outs), spec.reset, spec.name))
    return out


def write_config(path: Path, sources: list[str], top: str, testbenches: list[dict], extra: str = "") -> None:
    """Write a minimal config file; ``testbenches`` holds name/stimulus/golden entries."""
    lines = ["[project]", f"sources = [{', '.join(repr_toml(s) for s in sources)}]", f"top = {repr_toml(top)}",
             'work_dir = "work"', "seed = 0", ""]
    for tb in testbenches:
        lines.append("[[testbench]]")
        for k, v in tb.items():
            lines.append(f"{k} = {repr_toml(v)}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + extra)


def repr_toml(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'
