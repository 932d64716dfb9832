import shutil
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def needs_z3():
    if shutil.which("z3") is None:
        pytest.skip("z3 executable not installed")


requires_z3 = pytest.mark.skipif(shutil.which("z3") is None, reason="z3 executable not installed")


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
