import numpy as np
import pytest

from variational.grid import DomainSpec, build_grid


@pytest.fixture
def grid_1d():
    return build_grid(DomainSpec.unit(1), 65)


@pytest.fixture
def grid_2d():
    return build_grid(DomainSpec.unit(2), 17)


@pytest.fixture
def dirichlet_1d():
    return build_grid(DomainSpec.unit(1, "dirichlet"), 65)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
