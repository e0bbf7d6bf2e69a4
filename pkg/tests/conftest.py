import numpy as np
import pytest

from geodesic_lab import build_system, octagon_group
from geodesic_lab.product_dynamics import ProductPoint, haar_samples


@pytest.fixture(scope="session")
def group():
    return octagon_group()


@pytest.fixture(scope="session")
def system():
    return build_system(check_supports=3000)


@pytest.fixture(scope="session")
def random_points(system):
    rng = np.random.default_rng(101)
    surfs = haar_samples(system.group, 200, rng)
    zs = rng.random(200)
    return [ProductPoint(s, float(z)) for s, z in zip(surfs, zs)]
