import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinlsi.errors import ConfigurationError, ConfigurationIncompleteError
from spinlsi.model import (
    BoundaryCondition,
    InteractionSpec,
    LatticeModel,
    PhaseSpec,
    admissible_example,
    grad_interaction,
    hamiltonian,
)


@pytest.mark.parametrize("t,r,q,expected", [
    (4, 2, 2, True),
    (2, 2, 2, False),
    (1.5, 1, 2, False),
    (3, 1.5, 1.5, True),  # 3 >= 3 and max(1.5, 0.75) < 3
    (3, 3, 1.5, False),
    (2.9, 1.5, 1.5, False),
])
def test_admissibility_truth_table(t, r, q, expected):
    assert admissible_example(t, r, q) is expected


@given(t=st.floats(1, 8), r=st.floats(1, 6), q=st.floats(1.01, 2))
def test_admissibility_formula(t, r, q):
    p = q / (q - 1)
    assert admissible_example(t, r, q) == (t >= p and max(r, (r - 1) * q) < t)


def test_admissibility_rejects_bad_q():
    with pytest.raises(ValueError):
        admissible_example(4, 2, 2.5)


def test_conjugate_exponent():
    m = LatticeModel.uniform(3, 0.1, q=1.5)
    assert 1 / m.p + 1 / m.q == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kw", [
    dict(n_sites=0), dict(n_sites=3, q=1.0), dict(n_sites=3, q=2.1), dict(n_sites=3, j_max=1.0),
    dict(n_sites=3, couplings={(1, 3): 0.1}), dict(n_sites=3, couplings={(1, 2): 0.995}),
    dict(n_sites=3, edge_convention="sideways"),
])
def test_invalid_models(kw):
    with pytest.raises(ConfigurationError):
        LatticeModel(**kw)


def test_uniform_couplings():
    m = LatticeModel.uniform(3, 0.2)
    assert m.coupling(1, 2) == m.coupling(2, 1) == m.coupling(0, 1) == m.coupling(4, 3) == 0.2
    assert m.coupling(1, 3) == 0.0
    assert m.max_coupling() == 0.2
    assert m.scaled_couplings(0.5).max_coupling() == pytest.approx(0.1)


def test_hamiltonian_counts_each_orientation():
    m = LatticeModel.uniform(2, 0.5, t=4, r=2)
    x = [1.0, -0.5]
    phases = 1.0 + 0.5**4
    pair = 0.5 * 1.5**2
    assert hamiltonian(m, [1, 2], x) == pytest.approx(phases + 2 * pair)
    per_edge = LatticeModel.uniform(2, 0.5, t=4, r=2, edge_convention="per_edge")
    assert hamiltonian(per_edge, [1, 2], x) == pytest.approx(phases + pair)


def test_hamiltonian_boundary_and_exterior():
    m = LatticeModel.uniform(3, 0.5, t=2, r=2, boundary=BoundaryCondition(left=1.0))
    # block {1}: phase, (1,0) to the fixed left spin, (1,2) to omega_2
    e = hamiltonian(m, [1], [0.0], {2: 2.0})
    assert e == pytest.approx(0.0 + 0.5 * 1.0 + 0.5 * 4.0)
    with pytest.raises(ConfigurationIncompleteError):
        hamiltonian(m, [2], [0.0], {1: 0.0})  # site 3 missing
    # free right boundary contributes nothing
    assert hamiltonian(m, [3], [1.0], {2: 1.0}) == pytest.approx(1.0)


def test_hamiltonian_rejects_foreign_sites():
    m = LatticeModel.uniform(2, 0.1)
    with pytest.raises(ConfigurationError):
        hamiltonian(m, [3], [0.0])
    with pytest.raises(ValueError):
        hamiltonian(m, [1, 2], [0.0])


@given(x=st.floats(-3, 3), y=st.floats(-3, 3), r=st.floats(1.2, 4))
def test_interaction_gradient_matches_difference_quotient(x, y, r):
    V = InteractionSpec("power_difference", r)
    if abs(x - y) < 1e-2:
        return
    h = 1e-6
    fd1 = (V(x + h, y) - V(x - h, y)) / (2 * h)
    fd2 = (V(x, y + h) - V(x, y - h)) / (2 * h)
    assert grad_interaction(V, 1, x, y) == pytest.approx(fd1, rel=1e-5, abs=1e-7)
    assert grad_interaction(V, 2, x, y) == pytest.approx(fd2, rel=1e-5, abs=1e-7)


@given(x=st.floats(-3, 3), t=st.floats(2, 6))
def test_phase_gradient(x, t):
    ph = PhaseSpec("power", t)
    h = 1e-6
    assert ph.grad(x) == pytest.approx((ph(x + h) - ph(x - h)) / (2 * h), rel=1e-5, abs=1e-6)


def test_check_on_grid_rejects_boundary_outside():
    m = LatticeModel.uniform(2, 0.1, boundary=BoundaryCondition(right=5.0))
    with pytest.raises(ConfigurationError):
        m.check_on_grid(np.linspace(-2, 2, 5))
