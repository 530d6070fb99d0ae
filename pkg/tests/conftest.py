import numpy as np
import pytest

from vam.distance import DistanceSpec
from vam.interp import SampleSet
from vam.portfolio import generate_random_portfolio

ACCEPTANCE_LINES: list[str] = []


def random_sample(seed: int, n: int, values=(-1.0, -0.1), spec: DistanceSpec | None = None) -> SampleSet:
    """n random contracts with uniform pseudo-deltas, k-prototype distance."""
    rng = np.random.default_rng(seed)
    contracts = generate_random_portfolio(n, seed=int(rng.integers(2**32)))
    z = rng.uniform(*values, size=n)
    return SampleSet(contracts, z, spec or DistanceSpec())


@pytest.fixture
def sample_factory():
    return random_sample


@pytest.fixture(scope="session")
def small_portfolio():
    return generate_random_portfolio(60, seed=11)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
