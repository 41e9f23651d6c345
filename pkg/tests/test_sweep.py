import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from conftest import random_function
from spinlsi.errors import BudgetError, PartitionError
from spinlsi.gibbs import ChainMeasure
from spinlsi.grid import GridFunction, build_grid
from spinlsi.model import BoundaryCondition, LatticeModel
from spinlsi.sweep import (
    SweepPartition,
    apply_P,
    block_expectation,
    entropy_telescope_residual,
    fit_rate,
    gradient_decay,
    iterate_sweep,
    proposition22_margin,
)


@pytest.fixture(scope="module")
def chain():
    grid = build_grid(2.5, 6)
    return ChainMeasure(LatticeModel.uniform(4, 0.2, boundary=BoundaryCondition(left=0.0)), grid)


def test_partition():
    p = SweepPartition.even_odd(5)
    assert p.gamma0 == (2, 4) and p.gamma1 == (1, 3, 5)
    assert p.block(0) == p.gamma0 and p.block(1) == p.gamma1
    with pytest.raises(PartitionError):
        SweepPartition((2, 3), (1,))
    with pytest.raises(PartitionError):
        SweepPartition((2, 4), (4,))


def test_block_expectation_rejects_adjacent_sites(chain):
    with pytest.raises(PartitionError):
        block_expectation(chain, [1, 2], GridFunction.coordinate(chain.grid, 1))


def test_P_fixes_constants_and_preserves_nu(chain, rng):
    part = SweepPartition.even_odd(4)
    c = GridFunction.constant(chain.grid, 2.5)
    assert apply_P(chain, part, c).scalar() == 2.5
    f = random_function(chain.grid, range(1, 5), rng)
    assert chain.expect(apply_P(chain, part, f)) == pytest.approx(chain.expect(f), abs=1e-12)
    # the odd spins are integrated last, so P f is a function of the even ones
    assert all(s % 2 == 0 for s in apply_P(chain, part, f).dependent_sites())


def test_iterates_match_oracle(chain, rng):
    P = O.joint(chain.model, chain.grid)
    f = random_function(chain.grid, range(1, 5), rng)
    tr = iterate_sweep(chain, f, n_max=4)
    F = O.dense(f, 4)
    mean = O.expect(P, F)
    for n in range(4):
        F = O.sweep(P, F)
        d = np.sqrt(O.expect(P, (F - mean) ** 2))
        assert tr.distances[n] == pytest.approx(d, rel=1e-8, abs=1e-12)
        assert np.max(np.abs(O.dense(tr.iterates[n + 1], 4) - F)) < 1e-10
    assert len(tr.half_distances) == 4
    assert tr.entropy_residual < 1e-10


def test_zero_coupling_is_exact_after_one_sweep(rng):
    grid = build_grid(2.0, 6)
    nu = ChainMeasure(LatticeModel.uniform(4, 0.0), grid)
    f = random_function(grid, range(1, 5), rng)
    tr = iterate_sweep(nu, f, n_max=5, tol=1e-13)
    assert len(tr.distances) == 1 and tr.distances[0] < 1e-13
    assert (tr.iterates[1] - nu.expect(f)).max_abs() < 1e-10
    assert tr.fitted_rate == 0.0


def test_convergence_is_monotone(chain, rng):
    f = random_function(chain.grid, range(1, 5), rng)
    tr = iterate_sweep(chain, f, n_max=8)
    assert tr.monotone and 0 < tr.fitted_rate < 1
    rows = tr.rows()
    assert rows[0][0] == 1 and np.isnan(rows[0][2])
    assert all(r < 1 for r in tr.ratios[1:])


def test_budget_truncates_trace(rng):
    grid = build_grid(2.0, 5, element_budget=5**3)
    nu = ChainMeasure(LatticeModel.uniform(5, 0.1), grid)
    f = GridFunction.from_callable(grid, [1, 2, 3], lambda a, b, c: a * b + c)
    tr = iterate_sweep(nu, f, n_max=3)
    assert tr.truncated and tr.notes
    assert np.isnan(tr.entropy_residual)
    with pytest.raises(ValueError):
        iterate_sweep(nu, f, n_max=0)
    del rng


@given(rho=st.floats(0.01, 0.95), c=st.floats(0.1, 10), n=st.integers(4, 30))
def test_fit_rate_recovers_geometric_sequences(rho, c, n):
    d = c * rho ** np.arange(1, n + 1)
    assert fit_rate(d) == pytest.approx(rho, rel=1e-6)


def test_fit_rate_edge_cases():
    assert fit_rate([]) == 0.0
    assert fit_rate([0.0, 0.0]) == 0.0
    assert fit_rate([1.0, 1e-20]) == 0.0


def test_entropy_identity(chain, rng):
    part = SweepPartition.even_odd(4)
    for _ in range(5):
        f = random_function(chain.grid, range(1, 5), rng, positive=True)
        assert entropy_telescope_residual(chain, part, f, 2.0) < 1e-10
        assert entropy_telescope_residual(chain, part, f, 1.5) < 1e-10
    with pytest.raises(ValueError):
        entropy_telescope_residual(chain, part, GridFunction.constant(chain.grid, 0.0))


def test_sweeping_bound_and_gradient_decay(chain, rng):
    part = SweepPartition.even_odd(4)
    f = random_function(chain.grid, range(1, 5), rng, positive=True)
    big = proposition22_margin(chain, part, f, 2.0, 1e3, 1e3)
    small = proposition22_margin(chain, part, f, 2.0, 0.0, 0.0)
    assert big > 0 and small <= 0
    assert proposition22_margin(chain, part, f, 2.0, 1e3, 1e3, "01") > 0
    with pytest.raises(ValueError):
        proposition22_margin(chain, part, f, 2.0, 1, 1, "00")
    decay = gradient_decay(chain, part, f, 2.0, 4)
    assert len(decay) == 4 and decay[-1] < decay[0]
