"""The hypothesis tree: an append-only set of resumable agent states."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..agents.main import Hypothesis, NodeState
from .heuristic import HeuristicCoeffs, NodeFeatures, heuristic_value

STATUSES = ("open", "expanding", "exhausted")


@dataclass
class HypothesisNode:
    id: int
    hypothesis: Optional[Hypothesis]
    state: NodeState
    features: NodeFeatures
    f_value: float
    parent: Optional[int] = None
    status: str = "open"
    children: list[int] = field(default_factory=list)

    @property
    def code_snapshot(self):
        return self.state.project

    @property
    def transcript_snapshot(self):
        return self.state.transcript


def features_of(state: NodeState) -> NodeFeatures:
    c = state.counters
    return NodeFeatures(c.tb_passed, c.tb_total, c.n_queries, c.n_compile_errors, c.n_tokens, len(state.patches))


@dataclass
class HypothesisTree:
    coeffs: HeuristicCoeffs = field(default_factory=HeuristicCoeffs)
    nodes: list[HypothesisNode] = field(default_factory=list)

    def add(self, state: NodeState, hypothesis: Optional[Hypothesis], parent: Optional[int]) -> HypothesisNode:
        feat = features_of(state)
        node = HypothesisNode(len(self.nodes), hypothesis, state, feat, heuristic_value(feat, self.coeffs), parent)
        self.nodes.append(node)
        if parent is not None:
            self.nodes[parent].children.append(node.id)
        return node

    def open_nodes(self) -> list[HypothesisNode]:
        return [n for n in self.nodes if n.status == "open"]

    def path(self, node_id: int) -> list[HypothesisNode]:
        out = []
        cur: Optional[int] = node_id
        while cur is not None:
            out.append(self.nodes[cur])
            cur = self.nodes[cur].parent
        return out[::-1]

    def __len__(self) -> int:
        return len(self.nodes)
