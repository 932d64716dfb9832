"""LLM-facing layer: chat backends, the main agent and its two sub-agents."""

from .backend import (ENV_KEY, ENV_MODEL, ENV_URL, LiveBackend, LlmBackend, LlmBackendError, RecordingBackend,
                      ReplayBackend, ReplayDivergence, Reply, TransportError, make_backend, parse_tool_text,
                      tool_text)
from .budget import Budget, BudgetExceeded, Meter
from .main import (AgentEnv, BudgetExhausted, Counters, Fixed, Hypothesis, NewHypothesis, NodeState,
                   OutOfPatience, StepOutcome, initial_state, main_agent_step)
from .subagents import ContextAgent, LintFixResult, NewPatch, Question, Suppress, lint_fix_agent
from .tools import TOOLS_BY_KIND, PatchArgsError, SimReport, Workspace, patch_from_args, run_tool, tool_schemas
from .transcript import AgentTranscript, Message, ToolCall, TranscriptError
