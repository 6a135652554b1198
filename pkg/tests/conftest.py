import numpy as np
import pytest

from ratiohurst.estimator import VarianceTable

_acceptance_lines: list[str] = []


@pytest.fixture
def record():
    """Record one acceptance line; the terminal summary prints them all."""

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        _acceptance_lines.append(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
        print(_acceptance_lines[-1])
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def table():
    return VarianceTable()


def bm_path(n, rng):
    """Brownian motion on i/n built directly from independent increments."""
    return np.concatenate([[0.0], np.cumsum(rng.standard_normal(n))]) / np.sqrt(n)
