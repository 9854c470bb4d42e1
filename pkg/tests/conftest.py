import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from roofbench.poly import Polynomial  # noqa: E402
from roofbench.roof import RoofProblem  # noqa: E402
from roofbench.variety import Variety  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def circle():
    return Variety.from_strings(["x1^2 + x2^2 - 1"], 2, 1)


@pytest.fixture
def circle_x3(circle):
    return RoofProblem(circle, Polynomial.parse("x1^3", 2), "convex")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
