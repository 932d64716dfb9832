"""Operation, token and wall-clock budgets, and the metered chat call every agent goes through."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .backend import LlmBackend, Reply
from .transcript import AgentTranscript

DEFAULT_MAX_OPS = 12
DEFAULT_MAX_TOKENS = 2_000_000
DEFAULT_MAX_WALL = 1800.0


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Budget:
    max_ops_per_hypothesis: int = DEFAULT_MAX_OPS
    max_tokens_total: int = DEFAULT_MAX_TOKENS
    max_wall_seconds: float = DEFAULT_MAX_WALL

    def __post_init__(self):
        # a zero token or time budget is allowed and means nothing may be spent
        if self.max_ops_per_hypothesis < 1:
            raise ValueError("max_ops_per_hypothesis must be positive")
        if self.max_tokens_total < 0 or self.max_wall_seconds < 0:
            raise ValueError("budgets cannot be negative")


@dataclass
class Meter:
    """Charges every LLM call against the global budget."""

    llm: LlmBackend
    budget: Budget
    clock: Callable[[], float] = time.monotonic
    tokens: int = 0
    calls: int = 0
    started: float = field(default=-1.0)

    def __post_init__(self):
        if self.started < 0:
            self.started = self.clock()

    @property
    def elapsed(self) -> float:
        return self.clock() - self.started

    def exhausted(self) -> bool:
        return self.tokens >= self.budget.max_tokens_total or self.elapsed >= self.budget.max_wall_seconds

    def check(self) -> None:
        if self.tokens >= self.budget.max_tokens_total:
            raise BudgetExceeded(f"token budget of {self.budget.max_tokens_total} used up")
        if self.elapsed >= self.budget.max_wall_seconds:
            raise BudgetExceeded(f"time budget of {self.budget.max_wall_seconds}s used up")

    def chat(self, transcript: AgentTranscript, tools: list[dict]) -> Reply:
        self.check()
        reply = self.llm.chat(transcript.agent_kind, list(transcript.messages), tools)
        self.calls += 1
        self.tokens += reply.tokens
        transcript.charge(reply.tokens)
        return reply
