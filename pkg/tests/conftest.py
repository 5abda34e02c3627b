import numpy as np
import pytest

from fbbai.core import BanditInstance


@pytest.fixture
def inst1():
    return BanditInstance.bernoulli([0.5, 0.45, 0.3])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
