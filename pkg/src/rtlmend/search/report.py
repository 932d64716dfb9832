"""Machine-readable and text renderings of a finished search."""

from __future__ import annotations

import json

from .engine import SearchFixed, SearchOutcome
from .tree import HypothesisTree


def _f(x: float) -> float:
    return round(x, 9)


def tree_report(outcome: SearchOutcome) -> dict:
    """Everything about the tree and the outcome except timing, so equal runs give equal reports."""
    tree: HypothesisTree = outcome.tree
    nodes = []
    for n in tree.nodes:
        nodes.append({
            "id": n.id,
            "parent": n.parent,
            "hypothesis": None if n.hypothesis is None else {"id": n.hypothesis.id, "text": n.hypothesis.text},
            "status": n.status,
            "f": _f(n.f_value),
            "features": n.features.to_json(),
            "patches": len(n.state.patches),
            "children": list(n.children),
        })
    out = {
        "outcome": "fixed" if isinstance(outcome, SearchFixed) else "failed",
        "coeffs": tree.coeffs.to_json(),
        "nodes": nodes,
        "sampled": list(outcome.stats.sampled),
        "expansions": outcome.stats.expansions,
    }
    if isinstance(outcome, SearchFixed):
        out["solution_node"] = outcome.node
        out["patches"] = [p.to_json() for p in outcome.patches]
    else:
        out["reason"] = outcome.reason
    return out


def report_json(outcome: SearchOutcome) -> str:
    return json.dumps(tree_report(outcome), indent=2, sort_keys=True) + "\n"


def render_tree(outcome: SearchOutcome) -> str:
    tree = outcome.tree
    lines = []
    if isinstance(outcome, SearchFixed):
        lines.append(f"outcome: fixed with {len(outcome.patches)} patch(es)")
    else:
        lines.append(f"outcome: failed ({outcome.reason})")

    def walk(i: int, prefix: str, last: bool, root: bool) -> None:
        n = tree.nodes[i]
        text = "root" if n.hypothesis is None else f"#{n.hypothesis.id} {n.hypothesis.text}"
        if len(text) > 72:
            text = text[:69] + "..."
        ft = n.features
        tag = " *" if isinstance(outcome, SearchFixed) and outcome.node == n.id else ""
        line = (f"n{n.id} [{n.status}] f={n.f_value:.4f} tb={ft.tb_passed}/{ft.tb_total} q={ft.n_queries} "
                f"ce={ft.n_compile_errors} tok={ft.n_tokens} p={ft.n_patches}{tag}: {text}")
        lines.append(line if root else prefix + ("`-- " if last else "|-- ") + line)
        kids = n.children
        for k, c in enumerate(kids):
            walk(c, prefix if root else prefix + ("    " if last else "|   "), k == len(kids) - 1, False)

    if tree.nodes:
        walk(0, "", True, True)
    return "\n".join(lines) + "\n"
