import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_emissions(rng, T, K, sharp=1.0):
    logits = rng.normal(scale=sharp, size=(T, K))
    return logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    """Remember a pass/fail line for the end-of-run summary and echo it."""
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
