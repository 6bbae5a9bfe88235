import numpy as np
import pytest

from ruelle.lattice import validate_hyperbolic

_CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def example_m():
    return validate_hyperbolic([[3, 1], [2, 1]])


@pytest.fixture(scope="session")
def cat_m():
    return validate_hyperbolic([[2, 1], [1, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL line per acceptance criterion (also echoed in the terminal summary)."""

    def record(num: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {num:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _CRITERIA[num] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])
