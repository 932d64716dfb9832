"""Stochastic tree-of-thoughts search over repair hypotheses."""

from .engine import (Expansion, SearchConfig, SearchFailed, SearchFixed, SearchOutcome, SearchStats, expand,
                     run_search, sample_node, verify)
from .heuristic import HeuristicCoeffs, HeuristicDomainError, NodeFeatures, heuristic_value
from .report import render_tree, report_json, tree_report
from .sampling import EmptyTree, sample_index, softmax
from .tree import HypothesisNode, HypothesisTree, features_of
