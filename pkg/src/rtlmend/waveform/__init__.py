"""Simulation, traces, value change dumps and the waveform diff viewer."""

from .diff import DiffReport, WindowError, diff_view
from .sim import run_and_compare, simulate
from .table import TableFormatError, read_table, write_table
from .trace import Mismatch, ResetSpec, ShapeError, StimulusError, Testbench, WaveformTrace, compare
from .vcd import VcdFormatError, vcd_read, vcd_write

__all__ = [
    "DiffReport", "Mismatch", "ResetSpec", "ShapeError", "StimulusError", "TableFormatError", "Testbench",
    "VcdFormatError", "WaveformTrace", "WindowError", "compare", "diff_view", "read_table", "run_and_compare",
    "simulate", "vcd_read", "vcd_write", "write_table",
]
