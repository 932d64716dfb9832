"""Regenerate the synthetic benchmarks and their replay fixtures.

    python3 -m tests.support.record_fixtures

Run from the repository root after changing the generator, the prompts or
the agent loop (any of these shifts the recorded conversations).
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from rtlmend.agents.backend import RecordingBackend
from rtlmend.harness import BUG_CLASSES, cmd_repair, load_config, synth_bench, write_bench

from .policy import ScriptedDebugger

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "synth"
SEED = 1


def record(bug_class: str, seed: int = SEED, root: Path = FIXTURES) -> Path:
    out = root / bug_class
    if out.exists():
        shutil.rmtree(out)
    write_bench(synth_bench(seed, bug_class), out)
    rec = RecordingBackend(ScriptedDebugger(out))
    with tempfile.TemporaryDirectory() as work:
        code, outcome = cmd_repair(load_config(out / "config.toml"), rec, Path(work))
    if code != 0:
        raise RuntimeError(f"{bug_class}: scripted run failed: {outcome.reason}")
    rec.save(out / "replay")
    return out


def main() -> None:
    for c in BUG_CLASSES:
        print(record(c))


if __name__ == "__main__":
    main()
