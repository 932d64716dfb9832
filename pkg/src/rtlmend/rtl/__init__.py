"""Verilog subset front end: parsing, patching, widths and elaboration."""

from .ast import AstModule
from .elaborate import DesignInfo, TransitionSystem, analyze, elaborate, order_comb
from .parser import parse_project, parse_text
from .printer import print_modules
from .source import (CombinationalLoop, Diagnostic, Edit, ElaborationError, HierarchyError, MultipleDrivers,
                     ParseError, Patch, RangeError, ReparseError, RtlError, SourceProject, Span,
                     UnsupportedFeature, WidthError, apply_edits, apply_patch, replace_text_patch)
from .widths import infer_widths

__all__ = [
    "AstModule", "CombinationalLoop", "DesignInfo", "Diagnostic", "Edit", "ElaborationError", "HierarchyError",
    "MultipleDrivers", "ParseError", "Patch", "RangeError", "ReparseError", "RtlError", "SourceProject", "Span",
    "TransitionSystem", "UnsupportedFeature", "WidthError", "analyze", "apply_edits", "apply_patch", "elaborate",
    "infer_widths", "order_comb", "parse_project", "parse_text", "print_modules", "replace_text_patch",
]
