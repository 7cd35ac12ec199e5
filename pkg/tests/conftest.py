import pytest
from hypothesis import HealthCheck, settings

from esharing import cases
from esharing.network import LineSpec, build_network

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def two_f5():
    """Two prosumers on one line with transfer limit 5."""
    return cases.two_prosumer_line(5.0)


@pytest.fixture
def two_f10():
    """Two prosumers on one line with transfer limit 10."""
    return cases.two_prosumer_line(10.0)


@pytest.fixture
def chain_f03():
    """Three identical-cost prosumers on a path, leaf line capped at 0.3."""
    return cases.three_bus_chain(1.0, (1.0, 1.0, 0.0), 0.3)


@pytest.fixture
def chain_f027():
    """Same chain with the cap tightened to 0.27."""
    return cases.three_bus_chain(1.0, (1.0, 1.0, 0.0), 0.27)


@pytest.fixture
def triangle_net():
    """Three-bus loop, the smallest non-radial network."""
    return build_network(3, [LineSpec(1, 2), LineSpec(2, 3), LineSpec(1, 3)])


def random_tree(rng, size):
    """Random labelled tree on ``size`` buses with random positive weights."""
    lines = []
    for child in range(2, size + 1):
        parent = int(rng.integers(1, child))
        weight = float(rng.uniform(0.5, 2.0))
        lines.append(LineSpec(parent, child, weight))
    return build_network(size, lines)


def balanced_vector(rng, size, scale=10.0):
    q = rng.uniform(-scale, scale, size)
    return q - q.mean()
