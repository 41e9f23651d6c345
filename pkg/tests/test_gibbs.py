import itertools

import numpy as np
import pytest

from conftest import random_function
from spinlsi.errors import BudgetError, ConfigurationError, NumericalDegeneracyError
from spinlsi.gibbs import (
    ChainMeasure,
    Measure,
    Specification,
    components,
    conditional_expectation,
    dlr_residual,
    local_spec,
    specification_energy,
    window,
)
from spinlsi.grid import GridFunction, build_grid
from spinlsi.model import BoundaryCondition, LatticeModel


@pytest.fixture(scope="module")
def five():
    grid = build_grid(2.5, 8)
    model = LatticeModel.uniform(5, 0.1, t=4, r=2, boundary=BoundaryCondition(left=0.3, right=-0.7))
    return model, grid, Specification(model, grid)


def test_components():
    assert components([5, 1, 2, 4, 7]) == [(1, 2), (4, 5), (7, 7)]
    assert components([]) == []


def test_window_clipping():
    assert window(9, 5) == (3, 7)
    assert window(9, 1) == (1, 3)
    assert window(4, 4) == (2, 4)
    with pytest.raises(ValueError):
        window(3, 7)


def test_local_density_is_boltzmann_weight(five):
    model, grid, spec = five
    omega = {1: grid.nodes[2], 4: grid.nodes[5]}
    loc = local_spec(model, grid, [2, 3], omega, spec)
    assert loc.boundary_sites == ()
    x = grid.nodes
    w = np.empty((grid.m, grid.m))
    for i, j in itertools.product(range(grid.m), repeat=2):
        w[i, j] = np.exp(-specification_energy(model, [2, 3], [x[i], x[j]], omega))
    Z = np.sum(w * np.outer(grid.weights, grid.weights))
    assert np.allclose(loc.density, w / Z, rtol=1e-11)
    assert loc.Z == pytest.approx(Z, rel=1e-11)
    assert loc.mass.sum() == pytest.approx(1.0, abs=1e-13)
    mu = loc.measure()
    assert mu.sites == range(2, 4)


def test_local_spec_with_free_neighbours_is_a_kernel(five):
    model, grid, spec = five
    loc = spec.local([3])
    assert loc.boundary_sites == (2, 4)
    assert np.allclose(loc.mass.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        loc.measure()
    f = GridFunction.coordinate(grid, 3) ** 2
    a = conditional_expectation(loc, f)
    b = spec.expect([3], f)
    assert np.allclose(a.aligned(2, 4), b.aligned(2, 4), atol=1e-13)


def test_dlr_identity(five, rng):
    model, grid, spec = five
    worst = 0.0
    for _ in range(15):
        lo = int(rng.integers(1, 5))
        hi = int(rng.integers(lo, 6))
        block = list(range(lo, hi + 1))
        inner = sorted(rng.choice(block, size=int(rng.integers(1, len(block) + 1)), replace=False))
        omega = {s: float(rng.uniform(-2, 2)) for s in (lo - 1, hi + 1) if 1 <= s <= 5}
        f = random_function(grid, range(max(1, lo - 1), min(5, hi + 1) + 1), rng)
        worst = max(worst, dlr_residual(model, grid, block, inner, f, omega, spec))
    assert worst <= 1e-10
    with pytest.raises(ValueError):
        dlr_residual(model, grid, [2], [3], GridFunction.coordinate(grid, 2))


def test_chain_measure_is_consistent(five, rng):
    model, grid, spec = five
    nu = ChainMeasure(model, grid, spec)
    assert nu.marginal(1, 5).sum() == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(nu.marginal(2, 4).sum(axis=(0, 2)), nu.marginal(3, 3), atol=1e-14)
    f = random_function(grid, [2, 3, 4], rng)
    # nu E^{Lambda} f = nu f for any block
    for block in ([3], [2, 3], [1, 2, 3, 4, 5], [2, 4]):
        assert nu.expect(spec.expect(block, f)) == pytest.approx(nu.expect(f), abs=1e-12)
    assert nu.window_marginal(3).n_sites == 5
    assert nu.lq_norm(GridFunction.constant(grid, -2.0), 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        nu.marginal(0, 2)


def test_zero_coupling_gives_product_measure():
    grid = build_grid(2.0, 7)
    model = LatticeModel.uniform(3, 0.0, t=4)
    nu = ChainMeasure(model, grid)
    one = nu.marginal(2, 2)
    assert np.allclose(nu.marginal(1, 3), np.multiply.outer(np.multiply.outer(one, one), one))
    site = Measure.from_log_density(grid, lambda x: -np.abs(x) ** 4)
    assert np.allclose(site.mass, one)
    assert site.product(site).n_sites == 2


def test_measure_validation():
    grid = build_grid(1.0, 4)
    with pytest.raises(ValueError):
        Measure(grid, 1, np.ones(3))
    with pytest.raises(NumericalDegeneracyError):
        Measure(grid, 1, np.zeros(4))
    mu = Measure(grid, 2, np.ones(4))
    with pytest.raises(ValueError):
        mu.expect(GridFunction.coordinate(grid, 1))
    assert mu.expect(GridFunction.coordinate(grid, 2)) == pytest.approx(0.0, abs=1e-15)


def test_specification_rejects_bad_sites(five):
    _, grid, spec = five
    with pytest.raises(ConfigurationError):
        spec.expect([6], GridFunction.coordinate(grid, 5))


def test_budget_is_enforced():
    grid = build_grid(2.0, 6, element_budget=6**3)
    nu = ChainMeasure(LatticeModel.uniform(5, 0.1), grid)
    with pytest.raises(BudgetError):
        nu.marginal(1, 4)
