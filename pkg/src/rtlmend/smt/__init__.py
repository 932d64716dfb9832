"""Template-guided repair through bounded model checking and an external SMT solver."""

from .actions import (GuardCondition, Literal, MakeCombinational, MakeRegistered, OverwriteUnder, RepairAction,
                      RepairResult, RewriteLiteral, SolverStats, actions_to_prompt)
from .bmc import HorizonError, SmtScript, default_horizon, encode_bmc
from .fallback import FallbackError, mechanical_patch
from .solver import SolverConfig, SolverProcessError, check, solve, solve_repair
from .templates import (TEMPLATE_KINDS, FreeVar, FreeVarMap, RepairTemplate, TargetNotFound, condition_sites,
                        instrument, literal_sites, resolve_targets)
