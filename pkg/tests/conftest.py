import os
import sys

import numpy as np
import pytest
from hypothesis import settings

from spinlsi.gibbs import ChainMeasure
from spinlsi.grid import GridFunction, build_grid
from spinlsi.model import BoundaryCondition, LatticeModel

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(2.5, 6)


@pytest.fixture(scope="session")
def small_chain(small_grid):
    """Four sites, fixed boundary on one side, free on the other."""
    model = LatticeModel.uniform(4, 0.3, t=4, r=2, boundary=BoundaryCondition(left=0.5))
    return ChainMeasure(model, small_grid)


def random_function(grid, sites, rng, positive=False):
    """Rough random function of consecutive ``sites`` (node values i.i.d.)."""
    sites = list(sites)
    vals = rng.normal(size=(grid.m,) * len(sites))
    if positive:
        vals = np.exp(0.5 * vals)
    return GridFunction.from_values(grid, sites[0], vals)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
