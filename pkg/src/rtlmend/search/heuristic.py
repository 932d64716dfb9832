"""Node features and the heuristic that scores a hypothesis node."""

from __future__ import annotations

from dataclasses import asdict, dataclass


class HeuristicDomainError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class NodeFeatures:
    tb_passed: int = 0
    tb_total: int = 1
    n_queries: int = 0
    n_compile_errors: int = 0
    n_tokens: int = 0
    n_patches: int = 0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{k} cannot be negative")
        if self.tb_passed > self.tb_total:
            raise ValueError("tb_passed exceeds tb_total")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HeuristicCoeffs:
    lambda1: float = 50.0  # fraction of passing testbenches
    lambda2: float = 1.0  # context queries
    lambda3: float = 5.0  # compile errors
    lambda4: float = 0.0005  # tokens
    lambda5: float = 3.0  # patches
    base_b: float = 10.0

    def to_json(self) -> dict:
        return asdict(self)


def heuristic_value(feat: NodeFeatures, coeffs: HeuristicCoeffs = HeuristicCoeffs()) -> float:
    if feat.tb_total <= 0:
        raise HeuristicDomainError("no testbenches to normalize by")
    c = coeffs
    return (c.lambda1 * feat.tb_passed / feat.tb_total + c.lambda2 * feat.n_queries
            - c.lambda3 * feat.n_compile_errors - c.lambda4 * feat.n_tokens
            - c.lambda5 * feat.n_patches + c.base_b)
