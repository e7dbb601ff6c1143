from __future__ import annotations

import numpy as np
import pytest

from easta.model import DriveSchedule, build_path, random_gapped_path
from easta.protocol import run_protocol


@pytest.fixture(scope="session")
def qubit():
    """Default two-level protocol: B=1, tau=1, cosine-squared, K=2000."""
    return run_protocol(build_path(DriveSchedule(), 2000))


@pytest.fixture(scope="session")
def constant():
    return run_protocol(build_path(DriveSchedule(kind="constant"), 400))


@pytest.fixture(scope="session")
def random_protocols():
    cache = {}

    def get(dim: int, seed: int = 0, steps: int = 800):
        key = (dim, seed, steps)
        if key not in cache:
            cache[key] = run_protocol(random_gapped_path(dim, 1.0, seed=seed, steps=steps))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
