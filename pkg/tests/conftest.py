from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfcrate.model import builtin_model  # noqa: E402
from mfcrate.nparticle import NParticleProblem, solve_hjb  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quad_mean():
    return builtin_model("quadratic-mean")


@pytest.fixture(scope="session")
def benchmark_solves(quad_mean):
    """Tensor solves of the benchmark model on 201-point axes, cached per N."""
    cache: dict = {}

    def get(N: int, n_points: int = 201):
        key = (N, n_points)
        if key not in cache:
            cache[key] = solve_hjb(NParticleProblem.auto(quad_mean, N, n_points))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
