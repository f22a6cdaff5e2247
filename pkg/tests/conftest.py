import numpy as np
import pytest

from prommask.phantom import make_family, sample_family

# (criterion number, passed, detail) recorded by test_acceptance
ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    """Eight 16x16 concentric phantoms as ``(kspace, targets)`` stacks."""
    items = sample_family(make_family("concentric", seed=3), 8, (16, 16))
    return np.stack([k for k, _ in items]), np.stack([t for _, t in items])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
