import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from spinlsi.errors import ConfigurationError, DivergenceError, DomainError, OracleFailure
from spinlsi.constants import (
    CONDITIONS,
    FORMULAS,
    ConstantInputs,
    condition_slacks,
    derive_ledger,
    feasibility_thresholds,
    recursion_oracle,
    tail_bound,
)

BASE = ConstantInputs(c=1.0, C=1.0, K=1.0, eps=0.05, J=1e-8, q=2.0)


def test_basic_constants():
    L = derive_ledger(BASE)
    assert L.hat_c == pytest.approx(4 / math.log(2), abs=1e-9)
    assert L.c1 == 256 and L.c0 == 256 and L.p == 2
    assert FORMULAS["hat_c"] == "4c/ln 2" and FORMULAS["c1"] == "2^(4q)"
    L15 = derive_ledger(replace(BASE, q=1.5))
    assert L15.c1 == pytest.approx(2**6)
    assert L15.c0 == pytest.approx(2**6 * 2 ** (1.5 / 3) * 1.5)


@given(c=st.floats(0.1, 5), C=st.floats(0.1, 5), K=st.floats(0.1, 5), eps=st.floats(0.01, 1),
       J=st.floats(0, 0.3), q=st.floats(1.1, 2), D=st.floats(1, 1e4), T=st.floats(1, 1e4))
def test_assembly_against_direct_evaluation(c, C, K, eps, J, q, D, T):
    L = derive_ledger(ConstantInputs(c, C, K, eps, J, q, D=D, T=T))
    p = q / (q - 1)
    hc, c1, c0 = 4 * c / math.log(2), 2 ** (4 * q), 64 * 2 ** (q / p) * q
    g = J ** (q - 1) / (1 - J ** (q - 1))
    R = c1 + c1 / q**q * (c0**q * C * D / eps + c0**q * hc * K / eps)
    assert L.R == pytest.approx(R, rel=1e-12)
    assert L.C1 == pytest.approx(R * (1 + 4 * J**q + 8 * J**q / (1 - J ** (q - 1))), rel=1e-12)
    assert L.C2 == pytest.approx(R * J**q * (4 + 8 / (1 - J ** (q - 1))), rel=1e-12, abs=1e-300)
    D2 = J**q * (2 * hc * c1 * K / eps + 2 * c1 * C * D / eps * (1 + g))
    assert L.D2 == pytest.approx(D2, rel=1e-12, abs=1e-300)
    assert L.D1 == pytest.approx(c1 * q + D * J**q * c1 * C / eps * (3 + 2 * g), rel=1e-12)
    assert L.K_prime == pytest.approx(c1 * C / eps)
    if L.C2 < 1:
        assert L.A == pytest.approx(1 / (1 - L.C2**2))
        assert L.frak_c >= c * L.A
    else:
        assert L.A is None and not L.feasible


def test_zero_coupling_uses_limiting_branch():
    L = derive_ledger(replace(BASE, J=0.0))
    assert L.C2 == 0 and L.frak_c_divergent
    assert L.frak_c == pytest.approx(L.inputs.c * L.A)


def test_table_lists_inputs_and_formulas():
    names = [r[0] for r in derive_ledger(BASE).table()]
    assert "input.C" in names and "frak_c" in names and "D1" in names
    assert len(names) == len(set(names))


@pytest.mark.parametrize("kw", [dict(c=0), dict(eps=-1), dict(J=1.0), dict(q=2.5), dict(D=-1.0),
                                dict(K=math.inf)])
def test_input_validation(kw):
    with pytest.raises(ConfigurationError):
        derive_ledger(replace(BASE, **kw))


def test_feasibility_threshold():
    rep = feasibility_thresholds(derive_ledger(BASE))
    Js = rep.J_star
    assert 0 < Js < 1e-6
    below = condition_slacks(derive_ledger(replace(BASE, J=Js * (1 - 1e-6))))
    assert all(v > 0 for v in below.values())
    above = feasibility_thresholds(derive_ledger(replace(BASE, J=Js * (1 + 1e-3))))
    assert not above.all_pass
    assert set(dict((k, s) for k, s, _ in rep.rows())) == set(CONDITIONS)


def test_D2_C2_monotone_in_J():
    Js = np.arange(0, 0.2, 1e-3)
    D2 = [derive_ledger(replace(BASE, J=float(J), D=50.0, T=50.0)).D2 for J in Js]
    C2 = [derive_ledger(replace(BASE, J=float(J), D=50.0, T=50.0)).C2 for J in Js]
    assert np.all(np.diff(D2) > 0) and np.all(np.diff(C2) > 0)


def test_tail_bound_values():
    assert tail_bound([1, 0, 0], 0.5, 2) == pytest.approx(4 / 3)
    assert tail_bound([], 0.5, 2) == 0.0
    assert tail_bound([2.0], 0.0, 2) == 2.0
    # eventually constant G: the full geometric series
    assert tail_bound([1.0], 0.25, 2, eventually_constant=True) == pytest.approx(
        1 / (1 - 0.25) / (1 - 0.25**2))
    with pytest.raises(DomainError):
        tail_bound([-1.0], 0.5, 2)
    with pytest.raises(DomainError):
        tail_bound([1.0], 0.5, 2, K_prime=10.0)


def _banded(G, a, n_cut, cap):
    g = np.zeros(n_cut)
    g[: len(G)] = G
    g[-1] += a * cap
    ab = np.zeros((3, n_cut))
    ab[0, 1:] = -a
    ab[1, :] = 1
    ab[2, :-1] = -a
    return scipy.linalg.solve_banded((1, 1), ab, g)


@pytest.mark.parametrize("a_target", [0.05, 0.2, 0.45])
def test_recursion_oracle_matches_banded_solve(a_target, rng):
    J, q = 0.9, 2.0
    Kp = a_target / J**q
    G = rng.uniform(0, 1, size=6)
    got = recursion_oracle(G, J, q, Kp, n_cut=40)
    cap = G.max() / (1 - 2 * a_target)
    assert np.allclose(got, _banded(G, a_target, 40, cap), atol=1e-12)


def test_recursion_oracle_errors():
    # the tail condition forces J^q K' <= 1/2, with equality only at J = 1
    with pytest.raises(DivergenceError):
        recursion_oracle([1.0], 1.0, 2.0, 0.5)
    with pytest.raises(OracleFailure):
        recursion_oracle([1.0], 0.5, 2.0, 1.0, n_cut=200, max_sweeps=3)
    assert np.array_equal(recursion_oracle([1.0, 2.0], 0.5, 2.0, 0.0), np.r_[1.0, 2.0, np.zeros(48)])


@given(seed=st.integers(0, 2**32 - 1))
def test_tail_bound_dominates_recursion(seed):
    r = np.random.default_rng(seed)
    q = r.uniform(1.1, 2.0)
    J = r.uniform(0.01, 0.6)
    kmax = 1 / (J + J ** (2 * q - 1))
    Kp = r.uniform(0, min(kmax, 0.49 / J**q))
    G = r.uniform(0, 1, size=r.integers(1, 8)) * (r.uniform(size=1) < 0.8)
    oracle = recursion_oracle(G, J, q, Kp)
    assert tail_bound(G, J, q, Kp) >= oracle[0] * (1 - 1e-12)
