"""Structural lint checks and the external linter wrapper."""

from .checks import LintMessage, guess_top, lint_project, render
from .external import DEFAULT_REGEX, parse_output, run_external_linter

__all__ = ["DEFAULT_REGEX", "LintMessage", "guess_top", "lint_project", "parse_output", "render",
           "run_external_linter"]
