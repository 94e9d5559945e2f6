"""Shared fixtures plus the acceptance-criterion result banner."""

import numpy as np
import pytest

from oct_triage.domain import BScan

# Populated by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(index: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {index}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def random_bscan():
    def make(height=32, width=32, seed=0, index=0):
        rng = np.random.default_rng(seed)
        return BScan(
            pixels=rng.integers(0, 256, size=(height, width), dtype=np.uint8), index=index
        )

    return make
