import numpy as np
import pytest

from rdcnn import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    """Each available kernel backend (compiled core and numpy fallback)."""
    return _backend.load(request.param)


@pytest.fixture
def rs():
    return np.random.default_rng(20240601)


# Acceptance verdicts, one line per criterion, echoed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
