import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from risksharing.battery import make_battery
from risksharing.prob_core import Permutation, Pool, ProbSpace, make_pool

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def dyadic_spaces(draw, min_atoms=1, max_atoms=8):
    """Weights built by repeatedly halving an atom, so every weight is a power of two."""
    m = draw(st.integers(min_atoms, max_atoms))
    weights = [1.0]
    while len(weights) < m:
        k = draw(st.integers(0, len(weights) - 1))
        half = weights[k] / 2
        weights[k : k + 1] = [half, half]
    return ProbSpace(np.array(weights))


@st.composite
def int_pools(draw, min_n=1, max_n=5, min_atoms=1, max_atoms=8, hi=100):
    """Integer losses on a dyadic space: means and covariances are exact in binary."""
    space = draw(dyadic_spaces(min_atoms, max_atoms))
    n = draw(st.integers(min_n, max_n))
    cells = st.integers(0, hi).map(float)
    losses = draw(st.lists(st.lists(cells, min_size=space.atom_count, max_size=space.atom_count), min_size=n, max_size=n))
    return Pool(space, np.array(losses))


@st.composite
def real_pools(draw, min_n=1, max_n=5, min_atoms=1, max_atoms=8, hi=100.0):
    m = draw(st.integers(min_atoms, max_atoms))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m))
    weights = np.array(raw) / np.sum(raw)
    weights[-1] = 1.0 - weights[:-1].sum()
    n = draw(st.integers(min_n, max_n))
    cells = st.floats(0.0, hi, allow_nan=False, allow_infinity=False)
    losses = draw(st.lists(st.lists(cells, min_size=m, max_size=m), min_size=n, max_size=n))
    return Pool(ProbSpace(weights), np.array(losses))


@st.composite
def pools_with_perm(draw, pools=None):
    pool = draw(pools if pools is not None else int_pools())
    mapping = draw(st.permutations(range(pool.n)))
    return pool, Permutation(tuple(mapping))


@pytest.fixture
def pool_a():
    """Two participants, three atoms; S = (2, 6, 10)."""
    return make_pool([[0, 4, 8], [2, 2, 2]], [0.5, 0.25, 0.25])


@pytest.fixture
def pool_b():
    """Both rows with non-zero covariance against S."""
    return make_pool([[0, 4, 8], [1, 2, 3]], [0.5, 0.25, 0.25])


@pytest.fixture
def tied_pool():
    return make_pool([[1, 3], [3, 1]], [0.5, 0.5])


@pytest.fixture(scope="session")
def battery():
    return make_battery(seed=0)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(test_acceptance.RESULTS):
        status, text = test_acceptance.RESULTS[num]
        terminalreporter.write_line(f"criterion {num}: {status} {text}")
