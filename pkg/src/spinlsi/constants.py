"""Closed-form constants of the LSq proof, smallness conditions on ``J`` and the tail recursion.

All arithmetic is plain floating point.  Every derived quantity of a
:class:`ConstantLedger` is accompanied by a formula identifier in
``ledger.formulas`` so a table of the ledger doubles as a record of how each
number was obtained.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, OracleFailure

__all__ = [
    "ConstantInputs",
    "ConstantLedger",
    "derive_ledger",
    "FeasibilityReport",
    "feasibility_thresholds",
    "condition_slacks",
    "tail_bound",
    "recursion_oracle",
    "CONDITIONS",
]

FORMULAS = {
    "p": "q/(q-1)",
    "hat_c": "4c/ln 2",
    "c1": "2^(4q)",
    "c0": "2^6 * 2^(q/p) * q",
    "K_prime": "c1 C/eps",
    "T": "max{2 Jh C c1^2/eps, Jh c1 Jt, Jh c1^2 Jt, 2 c1 K (c1+2) Jh/(eps(1-J^(q-1)))}"
         "  with Jh = 1/(1-J^(2q-2)), Jt = 1/(1-J^(q-1))",
    "D": "max{2 c1, 2 + hat_c a, 2(J^q c1 C T/eps + c1^2), 2 J c1 C T/eps}"
         "  with a = 2J^q(T J^q c1 C/eps + 3 c1 c K/eps + 2 c1^2 c K/eps)",
    "D1": "c1 q + 3 D J^q c1 C/eps + 2 D J^q c1 C/eps * J^(q-1)/(1-J^(q-1))",
    "D2": "J^q(2 hat_c c1 K/eps + 2 c1 C D/eps + 2 D c1 C/eps * J^(q-1)/(1-J^(q-1)))",
    "R": "c1 + (c1/q^q)(c0^q C D/eps + c0^q hat_c K/eps)",
    "C1": "R + 4 R J^q + 8 R J^q/(1-J^(q-1))",
    "C2": "R J^q (4 + 8/(1-J^(q-1)))",
    "A": "sum_k C2^(2k) = 1/(1-C2^2)",
    "frak_c": "max{c A (C1/C2 + C2 + C1), c A}",
}

D1_FORMULA_NOTE = (
    "D1 is read off the coefficient block of grad_{Gi} f in the final inequality chain: "
    "c1 q from the pointwise bound, 3 D J^q c1 C/eps from the three near windows and "
    "2 D J^q c1 C/eps * J^(q-1)/(1-J^(q-1)) from the geometric sum over far windows."
)


@dataclass(frozen=True)
class ConstantInputs:
    """Hypothesis constants.  ``D`` and ``T`` default to the assembled proof values."""

    c: float
    C: float
    K: float
    eps: float
    J: float
    q: float = 2.0
    D: float | None = None
    T: float | None = None

    def validate(self) -> None:
        for name in ("c", "C", "K", "eps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {v}")
        if not (0 <= self.J < 1):
            raise ConfigurationError(f"J must lie in [0, 1), got {self.J}")
        if not (1 < self.q <= 2):
            raise ConfigurationError(f"q must lie in (1, 2], got {self.q}")
        for name in ("D", "T"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class ConstantLedger:
    inputs: ConstantInputs
    p: float
    hat_c: float
    c0: float
    c1: float
    K_prime: float
    T: float
    D: float
    D1: float
    D2: float
    R: float
    C1: float
    C2: float
    A: float | None
    frak_c: float | None
    frak_c_branches: tuple[float, float]
    frak_c_divergent: bool
    feasible: bool
    assembly: dict = field(default_factory=dict)
    formulas: dict = field(default_factory=lambda: dict(FORMULAS))
    D1_formula_note: str = D1_FORMULA_NOTE

    def table(self) -> list[tuple[str, str, str]]:
        """``(name, value, formula)`` rows, inputs first."""
        rows = [(f"input.{k}", _fmt(v), "input") for k, v in asdict(self.inputs).items()]
        for name in ("p", "hat_c", "c0", "c1", "K_prime", "T", "D", "D1", "D2",
                     "R", "C1", "C2", "A", "frak_c"):
            rows.append((name, _fmt(getattr(self, name)), self.formulas[name]))
        rows.append(("frak_c_ratio_branch", _fmt(self.frak_c_branches[0]), "c A (C1/C2 + C2 + C1)"))
        rows.append(("frak_c_limit_branch", _fmt(self.frak_c_branches[1]), "c A"))
        rows.append(("frak_c_divergent", str(self.frak_c_divergent), "C2 = 0 makes C1/C2 infinite"))
        rows.append(("feasible", str(self.feasible), "C2 < 1 and D2 < 1"))
        for k, v in self.assembly.items():
            rows.append((f"assembly_{k}", v, "source of the value"))
        return rows


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _default_T(c1: float, C: float, K: float, eps: float, J: float, q: float) -> float:
    Jh = 1.0 / (1.0 - J ** (2 * q - 2))
    Jt = 1.0 / (1.0 - J ** (q - 1))
    return max(
        2 * Jh * C * c1**2 / eps,
        Jh * c1 * Jt,
        Jh * c1**2 * Jt,
        2 * c1 * K * (c1 + 2) * Jh / (eps * (1 - J ** (q - 1))),
    )


def _default_D(c1: float, c: float, hat_c: float, C: float, K: float, eps: float,
               J: float, q: float, T: float) -> float:
    Jq = J**q
    a = 2 * Jq * (T * Jq * c1 * C / eps + 3 * c1 * c * K / eps + 2 * c1**2 * c * K / eps)
    return max(
        2 * c1,
        2 + hat_c * a,
        2 * (Jq * c1 * C * T / eps + c1**2),
        2 * J * c1 * C * T / eps,
    )


def derive_ledger(inputs: ConstantInputs) -> ConstantLedger:
    """Evaluate every closed-form constant for the given hypothesis constants.

    Infeasible inputs (``C2 >= 1`` or ``D2 >= 1``) give a ledger with
    ``feasible=False`` and ``A``/``frak_c`` undefined instead of raising.
    """
    inputs.validate()
    c, C, K, eps, J, q = inputs.c, inputs.C, inputs.K, inputs.eps, inputs.J, inputs.q
    p = q / (q - 1)
    hat_c = 4 * c / math.log(2)
    c1 = 2.0 ** (4 * q)
    c0 = 2.0**6 * 2.0 ** (q / p) * q
    K_prime = c1 * C / eps
    assembly = {}
    if inputs.T is None:
        T = _default_T(c1, C, K, eps, J, q)
        assembly["T"] = "default: coefficient maximum after the 1/2-absorption step, times 2"
    else:
        T = float(inputs.T)
        assembly["T"] = "input"
    if inputs.D is None:
        D = _default_D(c1, c, hat_c, C, K, eps, J, q, T)
        assembly["D"] = "default: coefficient maximum after the 1/2-absorption step, times 2"
    else:
        D = float(inputs.D)
        assembly["D"] = "input"

    Jq = J**q
    geo = J ** (q - 1) / (1 - J ** (q - 1))
    D2 = Jq * (2 * hat_c * c1 * K / eps + 2 * c1 * C * D / eps + D * 2 * c1 * C / eps * geo)
    D1 = c1 * q + 3 * D * Jq * c1 * C / eps + 2 * D * Jq * c1 * C / eps * geo
    R = c1 + (c1 / q**q) * (c0**q * C * D / eps + c0**q * hat_c * K / eps)
    C1 = R + 4 * R * Jq + 8 * R * Jq / (1 - J ** (q - 1))
    C2 = R * Jq * (4 + 8 / (1 - J ** (q - 1)))

    feasible = C2 < 1 and D2 < 1
    if C2 < 1:
        A = 1.0 / (1.0 - C2**2)
        limit = c * A
        ratio = c * A * (C1 / C2 + C2 + C1) if C2 > 0 else math.inf
        divergent = not math.isfinite(ratio)
        # the C1/C2 branch blows up as C2 -> 0; report the limiting branch then
        frak = limit if divergent else max(ratio, limit)
    else:
        A, frak, limit, ratio, divergent = None, None, math.inf, math.inf, False
    return ConstantLedger(
        inputs=inputs, p=p, hat_c=hat_c, c0=c0, c1=c1, K_prime=K_prime, T=T, D=D,
        D1=D1, D2=D2, R=R, C1=C1, C2=C2, A=A, frak_c=frak,
        frak_c_branches=(ratio, limit), frak_c_divergent=divergent,
        feasible=feasible, assembly=assembly,
    )


# ---------------------------------------------------------------------------
# smallness conditions on J
# ---------------------------------------------------------------------------

CONDITIONS = ("i_tail", "ii_D2", "iii_C2", "iv_sqrtD2", "v_absorb")


def condition_slacks(ledger: ConstantLedger) -> dict[str, float]:
    """Slack of each condition; a condition holds iff its slack is positive
    (nonnegative for the non-strict ``i_tail``)."""
    inp = ledger.inputs
    J, q, C, eps = inp.J, inp.q, inp.C, inp.eps
    c1, Kp, T = ledger.c1, ledger.K_prime, ledger.T
    Jq = J**q
    tail = J * Kp + Jq * Kp * J ** (q - 1)
    return {
        "i_tail": min(1.0 - J, 1.0 - tail),
        "ii_D2": 1.0 - ledger.D2,
        "iii_C2": 1.0 - ledger.C2,
        "iv_sqrtD2": 0.5 - 2.0**q * math.sqrt(ledger.D2),
        "v_absorb": 0.5 - Jq * (2 * C * c1**2 / eps + Jq * c1 * C * T / eps + C * c1 / eps),
    }


def _passes(slacks: dict[str, float]) -> dict[str, bool]:
    return {k: (v >= 0 if k == "i_tail" else v > 0) for k, v in slacks.items()}


@dataclass(frozen=True)
class FeasibilityReport:
    J: float
    slacks: dict
    passed: dict
    all_pass: bool
    J_star: float
    bisection_steps: int

    def rows(self) -> list[tuple[str, float, bool]]:
        return [(k, self.slacks[k], self.passed[k]) for k in CONDITIONS]


def _all_pass_at(inputs: ConstantInputs, J: float) -> bool:
    return all(_passes(condition_slacks(derive_ledger(replace(inputs, J=J)))).values())


def feasibility_thresholds(ledger: ConstantLedger, rtol: float = 1e-10) -> FeasibilityReport:
    """Evaluate the five conditions at ``ledger.inputs.J`` and bisect for the
    largest ``J`` at which all of them hold (other inputs fixed)."""
    inp = ledger.inputs
    slacks = condition_slacks(ledger)
    passed = _passes(slacks)
    lo, hi = 0.0, 1.0 - 1e-12
    steps = 0
    if _all_pass_at(inp, hi):
        lo = hi
    else:
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if _all_pass_at(inp, mid):
                lo = mid
            else:
                hi = mid
            steps += 1
    return FeasibilityReport(inp.J, slacks, passed, all(passed.values()), lo, steps)


# ---------------------------------------------------------------------------
# tail recursion
# ---------------------------------------------------------------------------


def _check_tail_condition(J: float, q: float, K_prime: float | None) -> None:
    if K_prime is not None and J * K_prime + J**q * K_prime * J ** (q - 1) > 1 + 1e-15:
        raise DomainError("J and K' violate J K' + J^q K' J^(q-1) <= 1")


def tail_bound(
    G: Sequence[float],
    J: float,
    q: float,
    K_prime: float | None = None,
    eventually_constant: bool = False,
) -> float:
    """Upper bound on ``P(4)`` from ``G(4), G(8), ...`` (entry ``n`` is ``G(4n+4)``).

    With ``eventually_constant`` the last entry is taken to repeat forever and
    the geometric remainder of the series is added.
    """
    G = np.asarray(G, dtype=float)
    if np.any(G < 0):
        raise DomainError("G must be nonnegative")
    b = J ** (q - 1) if J > 0 else 0.0
    if b >= 1:
        raise DivergenceError("J^(q-1) >= 1: the geometric series diverges")
    _check_tail_condition(J, q, K_prime)
    if G.size == 0:
        return 0.0
    total = float(np.sum(b ** np.arange(G.size) * G))
    if eventually_constant and G[-1] > 0:
        total += G[-1] * b**G.size / (1 - b)
    return total / (1.0 - b * b)


def recursion_oracle(
    G: Sequence[float],
    J: float,
    q: float,
    K_prime: float,
    n_cut: int | None = None,
    cap: float | None = None,
    max_sweeps: int = 100_000,
    tol: float = 1e-15,
) -> np.ndarray:
    """Maximal bounded solution of ``P = G + a (shift_- P + shift_+ P)``, ``a = J^q K'``.

    Index ``n`` of the arrays stands for the site ``4n+4``; ``P(0)`` is absent,
    ``G`` vanishes past its given entries and ``P`` is pinned to ``cap`` past
    ``n_cut`` entries.  Starting from ``cap`` the Jacobi sweep decreases
    monotonically to the solution.
    """
    G = np.asarray(G, dtype=float)
    if np.any(G < 0):
        raise DomainError("G must be nonnegative")
    _check_tail_condition(J, q, K_prime)
    a = J**q * K_prime
    if a >= 0.5:
        raise DivergenceError("J^q K' >= 1/2: the recursion has no bounded maximal solution")
    if n_cut is None:
        # decay rate of the homogeneous solution, so the cap contributes < 1e-17
        rho = (1 - math.sqrt(1 - 4 * a * a)) / (2 * a) if a > 0 else 0.0
        extra = 0 if rho == 0 else math.ceil(math.log(1e-17) / math.log(rho))
        n_cut = max(G.size + extra, 50)
    n_cut = max(int(n_cut), G.size)
    g = np.zeros(n_cut)
    g[: G.size] = G
    if cap is None:
        cap = float(g.max(initial=0.0)) / (1 - 2 * a)
    P = np.full(n_cut, cap)
    if a == 0:
        return g.copy()
    for _ in range(max_sweeps):
        left = np.concatenate(([0.0], P[:-1]))
        right = np.concatenate((P[1:], [cap]))
        new = g + a * (left + right)
        if np.max(np.abs(new - P)) <= tol * max(1.0, cap):
            return new
        P = new
    raise OracleFailure(f"fixed-point iteration did not converge in {max_sweeps} sweeps")
