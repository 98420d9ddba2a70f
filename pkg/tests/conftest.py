import numpy as np
import pytest

VERDICTS: list[tuple[str, bool, str]] = []


def record_verdict(name: str, passed: bool, detail: str):
    """Collect acceptance verdicts; printed in the terminal summary."""
    VERDICTS.append((name, passed, detail))


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in VERDICTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
