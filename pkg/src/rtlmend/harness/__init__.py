"""Configuration, synthetic benchmarks and the command-line interface."""

from .cli import cmd_passk, cmd_repair, cmd_verify, main, pass_at_k
from .config import ConfigError, ProjectConfig, TestbenchSpec, load_config, load_testbenches
from .synth import BUG_CLASSES, BugInjection, GenParams, ResampleExhausted, SynthBench, synth_bench, write_bench

__all__ = [
    "BUG_CLASSES", "BugInjection", "ConfigError", "GenParams", "ProjectConfig", "ResampleExhausted", "SynthBench",
    "TestbenchSpec", "cmd_passk", "cmd_repair", "cmd_verify", "load_config", "load_testbenches", "main",
    "pass_at_k", "synth_bench", "write_bench",
]
