"""Stochastic tree search over hypotheses."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..agents.backend import LlmBackend, LlmBackendError
from ..agents.budget import Budget, Meter
from ..agents.main import (AgentEnv, BudgetExhausted, Fixed, NewHypothesis, OutOfPatience, initial_state,
                           main_agent_step)
from ..agents.tools import Workspace
from ..rtl.source import Patch, SourceProject
from ..smt import SolverConfig
from ..waveform import Testbench
from .heuristic import HeuristicCoeffs
from .sampling import EmptyTree, sample_index
from .tree import HypothesisNode, HypothesisTree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    coeffs: HeuristicCoeffs = field(default_factory=HeuristicCoeffs)
    rng_seed: int = 0
    budget: Budget = field(default_factory=Budget)
    max_children_per_node: Optional[int] = 4
    sampling: str = "softmax"  # 'softmax' | 'latest' (no tree: always continue the newest node)
    max_step_failures: int = 3
    solver: SolverConfig = field(default_factory=SolverConfig)
    lint_cmd: Optional[str] = None
    summary_cap: int = 2000
    count_all_tools: bool = False
    smt_enabled: bool = True
    lint_regex: Optional[str] = None

    def __post_init__(self):
        if self.sampling not in ("softmax", "latest"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass
class SearchStats:
    wall_seconds: float = 0.0
    tokens: int = 0
    llm_calls: int = 0
    nodes_created: int = 0
    expansions: int = 0
    step_failures: int = 0
    sampled: list[int] = field(default_factory=list)
    winning_path: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"wall_seconds": round(self.wall_seconds, 3), "tokens": self.tokens, "llm_calls": self.llm_calls,
                "nodes_created": self.nodes_created, "expansions": self.expansions,
                "step_failures": self.step_failures, "winning_path": self.winning_path}


@dataclass(frozen=True)
class SearchFixed:
    project: SourceProject
    patches: tuple[Patch, ...]
    stats: SearchStats
    tree: HypothesisTree
    node: Optional[int]

    ok = True


@dataclass(frozen=True)
class SearchFailed:
    reason: str
    stats: SearchStats
    tree: HypothesisTree

    ok = False


SearchOutcome = Union[SearchFixed, SearchFailed]


def sample_node(tree: HypothesisTree, rng: np.random.Generator) -> HypothesisNode:
    """Draw an open node with probability proportional to exp(f)."""
    pool = tree.open_nodes()
    if not pool:
        raise EmptyTree("no open node to expand")
    return pool[sample_index([n.f_value for n in pool], rng)]


def verify(project: SourceProject, tbs: list[Testbench]) -> bool:
    return Workspace(project, tbs).simulate_all().all_pass


@dataclass(frozen=True)
class Expansion:
    kind: str  # 'child' | 'fixed' | 'exhausted' | 'budget'
    child: Optional[int] = None
    fixed_state: object = None


def expand(tree: HypothesisTree, node: HypothesisNode, env: AgentEnv,
           max_children: Optional[int] = None) -> Expansion:
    """Resume the agent at ``node`` and record what it produced.

    Raises LlmBackendError; the node is then left open for a retry.
    """
    if node.status != "open":
        raise ValueError(f"node {node.id} is {node.status}")
    node.status = "expanding"
    try:
        out = main_agent_step(node.state, env)
    except LlmBackendError:
        node.status = "open"
        raise
    node.status = "open"
    if isinstance(out, Fixed):
        return Expansion("fixed", fixed_state=out.state)
    if isinstance(out, BudgetExhausted):
        return Expansion("budget")
    if isinstance(out, NewHypothesis):
        child = tree.add(out.state, out.hypothesis, node.id)
        if max_children is not None and len(node.children) >= max_children:
            node.status = "exhausted"
        return Expansion("child", child.id)
    assert isinstance(out, OutOfPatience)
    node.status = "exhausted"
    if out.forced is not None:
        child = tree.add(out.state, out.forced, node.id)
        return Expansion("exhausted", child.id)
    return Expansion("exhausted")


def run_search(root: SourceProject, tbs: list[Testbench], config: SearchConfig, llm: LlmBackend,
               max_expansions: Optional[int] = None) -> SearchOutcome:
    meter = Meter(llm, config.budget)
    env = AgentEnv(meter, list(tbs), config.solver, config.lint_cmd, config.summary_cap, config.count_all_tools,
                   config.smt_enabled, config.lint_regex)
    tree = HypothesisTree(config.coeffs)
    stats = SearchStats()

    def done(stats: SearchStats) -> SearchStats:
        stats.wall_seconds = meter.elapsed
        stats.tokens = meter.tokens
        stats.llm_calls = meter.calls
        stats.nodes_created = len(tree)
        return stats

    if not tbs:
        raise ValueError("at least one testbench is required")
    if verify(root, tbs):
        return SearchFixed(root, (), done(stats), tree, None)
    if meter.exhausted():
        return SearchFailed("budget exhausted before any expansion", done(stats), tree)
    rng = np.random.default_rng(config.rng_seed)
    tree.add(initial_state(root, env), None, None)
    failures = 0
    while True:
        if meter.exhausted():
            return SearchFailed("budget exhausted", done(stats), tree)
        if max_expansions is not None and stats.expansions >= max_expansions:
            return SearchFailed("expansion limit reached", done(stats), tree)
        try:
            if config.sampling == "latest":
                pool = tree.open_nodes()
                if not pool:
                    raise EmptyTree("no open node to expand")
                node = pool[-1]
            else:
                node = sample_node(tree, rng)
        except EmptyTree:
            return SearchFailed("every hypothesis is exhausted", done(stats), tree)
        stats.sampled.append(node.id)
        stats.expansions += 1
        try:
            ex = expand(tree, node, env, config.max_children_per_node)
        except LlmBackendError as e:
            stats.step_failures += 1
            failures += 1
            log.warning("expansion of node %d failed: %s", node.id, e)
            if failures >= config.max_step_failures:
                return SearchFailed(f"agent backend failed: {e}", done(stats), tree)
            continue
        failures = 0
        if ex.kind == "budget":
            return SearchFailed("budget exhausted", done(stats), tree)
        if ex.kind == "fixed":
            st = ex.fixed_state
            if verify(st.project, tbs):
                final = tree.add(st, node.hypothesis, node.id)
                final.status = "exhausted"
                stats.winning_path = [{"node": n.id, "f": n.f_value, **n.features.to_json()}
                                      for n in tree.path(final.id)]
                return SearchFixed(st.project, st.patches, done(stats), tree, final.id)
            log.warning("node %d claimed a fix that does not verify", node.id)
