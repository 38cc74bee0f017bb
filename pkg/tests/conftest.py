import numpy as np
import pytest

from coltkf.censored_moments import CensorBand
from coltkf.gaussian_core import GaussianSpec

EXAMPLE_MEAN = [1.0, 1.0, 1.0]
EXAMPLE_COV = [[2.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 2.0]]

_acceptance_lines = []


@pytest.fixture
def example_spec():
    return GaussianSpec(EXAMPLE_MEAN, EXAMPLE_COV)


@pytest.fixture
def example_band():
    return CensorBand(0.5, 2.0)


@pytest.fixture
def record_criterion():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _acceptance_lines.append(line)
        print(line)
        return ok

    return record


def random_psd(rng, n):
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.1 * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
