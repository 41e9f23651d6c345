"""Even/odd sweeping-out: ``P = E^{G1} E^{G0}``, its iterates and identities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import BudgetError, PartitionError
from .gibbs import ChainMeasure
from .grid import GridFunction, q_gradient_norm, span_of

__all__ = [
    "SweepPartition",
    "SweepTrace",
    "block_expectation",
    "apply_P",
    "iterate_sweep",
    "fit_rate",
    "entropy_telescope_residual",
    "proposition22_margin",
    "gradient_decay",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SweepPartition:
    """Even sites ``gamma0`` and odd sites ``gamma1`` of the chain ``1..N``."""

    gamma0: tuple[int, ...]
    gamma1: tuple[int, ...]

    @classmethod
    def even_odd(cls, n_sites: int) -> "SweepPartition":
        sites = range(1, n_sites + 1)
        return cls(tuple(s for s in sites if s % 2 == 0), tuple(s for s in sites if s % 2 == 1))

    def __post_init__(self) -> None:
        for g in (self.gamma0, self.gamma1):
            _check_separated(g)
        if set(self.gamma0) & set(self.gamma1):
            raise PartitionError("the two blocks overlap")

    def block(self, i: int) -> tuple[int, ...]:
        return self.gamma0 if i == 0 else self.gamma1


def _check_separated(sites: Iterable[int]) -> list[int]:
    s = sorted(set(int(x) for x in sites))
    for a, b in zip(s, s[1:]):
        if b - a <= 1:
            raise PartitionError(f"sites {a} and {b} are adjacent")
    return s


def block_expectation(nu: ChainMeasure, gamma: Sequence[int], f: GridFunction) -> GridFunction:
    """``E^{gamma} f`` for a set of mutually non-adjacent sites."""
    sites = _check_separated(gamma)
    for s in sites:
        f = nu.spec.expect_block(s, s, f)
    return f


def apply_P(nu: ChainMeasure, partition: SweepPartition, f: GridFunction) -> GridFunction:
    return block_expectation(nu, partition.gamma1, block_expectation(nu, partition.gamma0, f))


@dataclass
class SweepTrace:
    iterates: list[GridFunction]
    distances: list[float]
    fitted_rate: float
    entropy_residual: float = float("nan")
    half_distances: list[float] = field(default_factory=list)
    monotone: bool = True
    truncated: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [float("nan")] + [b / a if a > 0 else 0.0 for a, b in zip(d, d[1:])]

    def rows(self) -> list[tuple[int, float, float]]:
        return [(n + 1, d, r) for n, (d, r) in enumerate(zip(self.distances, self.ratios))]


def fit_rate(distances: Sequence[float]) -> float:
    """Geometric rate from a least-squares fit of ``log d_n`` over the tail half.

    Points below ``1e3`` machine epsilons (relative to the largest distance)
    are ignored; with fewer than two usable points the rate is 0.
    """
    d = np.asarray(distances, dtype=float)
    if d.size == 0 or not np.any(d > 0):
        return 0.0
    floor = 1e3 * _EPS * d.max()
    n = np.arange(1, d.size + 1)
    tail = slice(d.size - math.ceil(d.size / 2), d.size)
    nn, dd = n[tail], d[tail]
    keep = dd > floor
    if keep.sum() < 2:
        keep = d > floor
        nn, dd = n[keep], d[keep]
        if dd.size < 2:
            return 0.0
    else:
        nn, dd = nn[keep], dd[keep]
    slope = np.polyfit(nn, np.log(dd), 1)[0]
    return float(np.exp(slope))


def iterate_sweep(
    nu: ChainMeasure,
    f: GridFunction,
    n_max: int = 20,
    tol: float = 0.0,
    q: float = 2.0,
    partition: SweepPartition | None = None,
) -> SweepTrace:
    """Iterate ``P`` on ``f`` and record ``||P^n f - nu f||_{L^q(nu)}`` for ``n >= 1``.

    ``half_distances`` holds ``||E^{G0} P^n f - nu f||`` alongside, and
    ``entropy_residual`` the one-sweep entropy identity residual for ``f``.

    The iteration runs on the centred function ``f - nu f``.  Since ``P``
    fixes constants and preserves ``nu``, this equals ``P^n f - nu f``; the
    mean is re-subtracted after each step so that rounding drift does not
    put a floor under the distances.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    part = partition or SweepPartition.even_odd(nu.n_sites)
    mean = nu.expect(f)
    g = f - mean
    iterates = [f]
    distances: list[float] = []
    half: list[float] = []
    truncated = False
    notes: list[str] = []
    for _ in range(n_max):
        try:
            pg = apply_P(nu, part, g)
            pg = pg - nu.expect(pg)
            h = nu.lq_norm(block_expectation(nu, part.gamma0, pg), q)
        except BudgetError as exc:
            truncated = True
            notes.append(str(exc))
            break
        g = pg
        iterates.append(g + mean)
        half.append(h)
        dist = nu.lq_norm(g, q)
        distances.append(dist)
        if dist <= tol:
            break
    monotone = all(b < a for a, b in zip(distances, distances[1:]) if a > 0)
    ent = math.nan
    try:
        if nu.expect(abs(f) ** q) > 0:
            ent = entropy_telescope_residual(nu, part, f, q)
    except BudgetError as exc:
        notes.append(f"entropy residual skipped: {exc}")
    return SweepTrace(iterates, distances, fit_rate(distances), ent, half, monotone,
                      truncated, notes)


def _nu_xlogx(nu: ChainMeasure, g: GridFunction) -> float:
    return nu.expect(g.map(lambda v: xlogy(v, v)))


def entropy_telescope_residual(
    nu: ChainMeasure, partition: SweepPartition, f: GridFunction, q: float = 2.0
) -> float:
    """Relative gap between the two sides of the one-sweep entropy decomposition.

    ``nu(F log F/nu F)`` against
    ``nu E0(F log F/E0 F) + nu E1(E0F log E0F/E1E0F) + nu(PF log PF) - nu(F log nu F)``
    with ``F = |f|^q``.
    """
    F = abs(f) ** q
    nuF = nu.expect(F)
    if nuF <= 0:
        raise ValueError("nu |f|^q must be positive")
    g0, g1 = partition.gamma0, partition.gamma1
    E0F = block_expectation(nu, g0, F)
    PF = block_expectation(nu, g1, E0F)
    lhs = _nu_xlogx(nu, F) - nuF * math.log(nuF)

    t1 = nu.expect(block_expectation(nu, g0, _safe_rel(F, E0F)))
    t2 = nu.expect(block_expectation(nu, g1, _safe_rel(E0F, PF)))
    t3 = _nu_xlogx(nu, PF)
    t4 = nuF * math.log(nuF)
    rhs = t1 + t2 + t3 - t4
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def _safe_rel(num: GridFunction, den: GridFunction) -> GridFunction:
    """Pointwise ``num log(num/den)`` with ``0 log 0 = 0``."""
    lo, hi = span_of(num, den)
    if lo is None:
        a, b = num.values, den.values
    else:
        a, b = num.aligned(lo, hi), den.aligned(lo, hi)
    pos = (a > 0) & (b > 0)
    la = np.log(np.where(pos, a, 1.0))
    lb = np.log(np.where(pos, b, 1.0))
    return GridFunction(num.grid, lo, np.where(pos, a * (la - lb), 0.0))


def _grad_term(nu: ChainMeasure, g: GridFunction, sites: Sequence[int], q: float) -> float:
    return nu.expect(q_gradient_norm(g, sites, q))


def proposition22_margin(
    nu: ChainMeasure,
    partition: SweepPartition,
    f: GridFunction,
    q: float,
    C1: float,
    C2: float,
    direction: str = "10",
) -> float:
    """``C1 nu|grad_i f|^q + C2 nu|grad_j f|^q - nu|grad_i (E^j |f|^q)^{1/q}|^q``.

    ``direction`` is ``"ij"``: ``"10"`` differentiates on the odd block
    after integrating the even one, ``"01"`` the reverse.
    """
    if direction not in ("01", "10"):
        raise ValueError("direction must be '01' or '10'")
    i, j = int(direction[0]), int(direction[1])
    gi, gj = partition.block(i), partition.block(j)
    inner = block_expectation(nu, gj, abs(f) ** q) ** (1.0 / q)
    lhs = _grad_term(nu, inner, gi, q)
    rhs = C1 * _grad_term(nu, f, gi, q) + C2 * _grad_term(nu, f, gj, q)
    return rhs - lhs


def gradient_decay(
    nu: ChainMeasure, partition: SweepPartition, f: GridFunction, q: float, n: int
) -> list[float]:
    """``nu|grad_{G0} (P^k |f|^q)^{1/q}|^q`` for ``k = 1..n``."""
    F = abs(f) ** q
    out = []
    for _ in range(n):
        F = apply_P(nu, partition, F)
        out.append(_grad_term(nu, F ** (1.0 / q), partition.gamma0, q))
    return out
