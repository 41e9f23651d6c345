"""Hypothesis checkers (H0)-(H3) and instance-level margins of the proof inequalities.

All quantities are computed by exact quadrature on the finite chain held by
a :class:`~spinlsi.gibbs.ChainMeasure`.  Conventions:

* ``E~k`` integrates the spins ``k-1`` and ``k+1`` (those inside the chain);
* ``Lambda(u)`` is the window ``u-2..u+2`` clipped to the chain and
  ``E^{M(u)}`` integrates every chain spin outside it;
* gradients are the node stencils of :func:`~spinlsi.grid.site_gradient`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .constants import ConstantLedger, feasibility_thresholds
from .errors import ConfigurationError
from .functionals import AscentSettings, ls_constant
from .gibbs import ChainMeasure, window
from .grid import GridFunction, build_grid, q_gradient_norm, span_of
from .model import LatticeModel, grad_interaction
from .sweep import SweepPartition, block_expectation

__all__ = [
    "HypothesisReport",
    "ProofQuantities",
    "LemmaInstance",
    "LemmaResult",
    "LEMMAS",
    "omega_scan",
    "log_moment",
    "check_h0",
    "check_h1",
    "check_h2",
    "check_h3",
    "moment_constant",
    "proof_quantities",
    "lemma_margin",
    "fitted_scale",
]

LEMMAS = ("L3.1a", "L3.1b", "L3.2", "L3.3", "L4.1", "L4.2", "L4.3", "L5.3", "L5.4", "R2.1")


@dataclass
class HypothesisReport:
    hypothesis: str
    passed: bool | None  # None: estimate only
    constants: dict
    detail: list = field(default_factory=list)
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _chain_sites(nu: ChainMeasure, sites: Iterable[int]) -> list[int]:
    return sorted(s for s in set(sites) if 1 <= s <= nu.n_sites)


def _tilde(nu: ChainMeasure, k: int) -> list[int]:
    return _chain_sites(nu, (k - 1, k + 1))


def E_tilde(nu: ChainMeasure, k: int, g: GridFunction) -> GridFunction:
    return nu.spec.expect(_tilde(nu, k), g)


def _cov(nu: ChainMeasure, k: int, a: GridFunction, b: GridFunction) -> GridFunction:
    return E_tilde(nu, k, a * b) - E_tilde(nu, k, a) * E_tilde(nu, k, b)


def _grad_energy(nu: ChainMeasure, g: GridFunction, sites: Iterable[int], q: float) -> float:
    return nu.expect(q_gradient_norm(g, _chain_sites(nu, sites), q))


def log_moment(nu: ChainMeasure, X: GridFunction) -> float:
    """``log nu(e^X)`` by log-sum-exp against the marginal of ``X``'s support."""
    if X.is_constant:
        return X.scalar()
    dep = X.dependent_sites()
    a, b = dep[0], dep[-1]
    marg = nu.marginal(a, b)
    Xa = X.aligned(a, b)
    idle = tuple(ax for ax in range(b - a + 1) if Xa.shape[ax] == 1)
    if idle:
        marg = marg.sum(axis=idle, keepdims=True)
    return float(logsumexp(np.broadcast_to(Xa, marg.shape), b=marg))


def _window_sites(nu: ChainMeasure, u: int) -> list[int]:
    lo, hi = window(nu.n_sites, u)
    return list(range(lo, hi + 1))


def Q_term(nu: ChainMeasure, h: GridFunction, u: int, q: float) -> float:
    """``nu_{Lambda(u)} |grad_{Lambda(u)} (E^{M(u)} |h|^q)^{1/q}|^q``."""
    win = _window_sites(nu, u)
    outside = [s for s in nu.model.sites if s not in win]
    g = nu.spec.expect(outside, abs(h) ** q) ** (1.0 / q)
    return _grad_energy(nu, g, win, q)


def _neighbour(nu: ChainMeasure, j: int):
    """``('site', j)``, ``('fixed', w)`` or ``None`` for a free outer site."""
    if 1 <= j <= nu.n_sites:
        return ("site", j)
    w = nu.model.outer_value(j)
    return None if w is None else ("fixed", w)


def _pair_gradient(nu: ChainMeasure, r: int, a: int, b: int) -> GridFunction:
    """``grad_r V(x_a, x_b)`` (zero unless ``r`` is ``a`` or ``b``)."""
    grid, V = nu.grid, nu.model.interaction
    if r not in (a, b):
        return GridFunction.constant(grid, 0.0)
    slot = 1 if r == a else 2
    other = b if r == a else a
    nb = _neighbour(nu, other)
    if nb is None:
        return GridFunction.constant(grid, 0.0)
    if nb[0] == "fixed":
        w = nb[1]
        fn = (lambda x: grad_interaction(V, 1, x, w)) if slot == 1 else (lambda x: grad_interaction(V, 2, w, x))
        return GridFunction.from_callable(grid, [r], fn)
    lo = min(a, b)
    if a == lo:
        return GridFunction.from_callable(grid, [lo, lo + 1], lambda x, y: grad_interaction(V, slot, x, y))
    return GridFunction.from_callable(grid, [lo, lo + 1], lambda y, x: grad_interaction(V, slot, x, y))


def _pair_value(nu: ChainMeasure, r: int, s: int) -> GridFunction:
    V = nu.model.interaction
    lo = min(r, s)
    if r == lo:
        return GridFunction.from_callable(nu.grid, [lo, lo + 1], lambda x, y: V(x, y))
    return GridFunction.from_callable(nu.grid, [lo, lo + 1], lambda y, x: V(x, y))


def _aligned_pair(a: GridFunction, b: GridFunction):
    """Values of ``a`` and ``b`` broadcast on their common span, and its first site."""
    lo, hi = span_of(a, b)
    if lo is None:
        x, y = a.values, b.values
    else:
        x, y = a.aligned(lo, hi), b.aligned(lo, hi)
    shape = np.broadcast_shapes(x.shape, y.shape)
    return np.broadcast_to(x, shape), np.broadcast_to(y, shape), lo


def W_function(nu: ChainMeasure, k: int) -> GridFunction:
    """``grad_k V(x_k, x_{k-1}) + grad_k V(x_k, x_{k+1})``."""
    return _pair_gradient(nu, k, k, k - 1) + _pair_gradient(nu, k, k, k + 1)


# ---------------------------------------------------------------------------
# proof quantities
# ---------------------------------------------------------------------------


@dataclass
class ProofQuantities:
    k: int
    h_k: GridFunction
    W_k: GridFunction
    U_k: GridFunction
    A_k: float
    Q: dict

    def centering_error(self, nu: ChainMeasure) -> float:
        return E_tilde(nu, self.k, self.h_k).max_abs()


def A_term(nu: ChainMeasure, f: GridFunction, k: int, q: float, W: GridFunction | None = None) -> float:
    """``nu[(E~k|f|^q)^{-q/p} |E~k(|f|^q; W_k)|^q]`` (0 where ``E~k|f|^q`` vanishes)."""
    p = q / (q - 1)
    W = W_function(nu, k) if W is None else W
    F = abs(f) ** q
    num = abs(_cov(nu, k, F, W)) ** q
    den = E_tilde(nu, k, F)
    a, b, lo = _aligned_pair(num, den)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(b > 0, a * np.where(b > 0, b, 1.0) ** (-q / p), 0.0)
    return nu.expect(GridFunction(nu.grid, lo, vals))


def proof_quantities(
    nu: ChainMeasure, f: GridFunction, k: int, q: float, us: Sequence[int] | None = None
) -> ProofQuantities:
    if not 1 <= k <= nu.n_sites:
        raise ConfigurationError(f"site {k} lies outside the chain")
    h = f - E_tilde(nu, k, f)
    W = W_function(nu, k)
    Wq = abs(W) ** q
    U = Wq + E_tilde(nu, k, Wq)
    Q = {(u, k): Q_term(nu, h, u, q) for u in (us if us is not None else [k])}
    return ProofQuantities(k, h, W, U, A_term(nu, f, k, q, W), Q)


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------


def omega_scan(L: float, n: int) -> list[tuple[float, float]]:
    pts = np.linspace(-L, L, n)
    return [(float(a), float(b)) for a in pts for b in pts]


def check_h0(
    model: LatticeModel,
    grid,
    omega_grid: Sequence[tuple[float, float]],
    site: int | None = None,
    settings: AscentSettings | None = None,
) -> HypothesisReport:
    """Single-site LSq constants of ``E^{{i}, omega}`` over a scan of boundary pairs."""
    from .gibbs import Specification

    spec = Specification(model, grid)
    i = site if site is not None else (model.n_sites + 1) // 2
    detail = []
    for wl, wr in omega_grid:
        mu = spec.local([i], {i - 1: wl, i + 1: wr}).measure()
        est = ls_constant(mu, model.q, settings=settings)
        detail.append({"omega_left": wl, "omega_right": wr, "c": est.constant_lower,
                       "converged": est.converged})
    vals = np.array([d["c"] for d in detail])
    radius = np.array([max(abs(d["omega_left"]), abs(d["omega_right"])) for d in detail])
    c_max = float(vals.max())
    argmax = [(d["omega_left"], d["omega_right"]) for d in detail if d["c"] >= c_max * (1 - 1e-9)]
    slope = float(np.polyfit(radius, vals, 1)[0]) if np.ptp(radius) > 0 else 0.0
    edge = vals[radius >= radius.max() - 1e-12].mean()
    centre = vals[radius <= radius.min() + 1e-12].mean()
    ratio = float(edge / centre) if centre > 0 else math.inf
    non_uniform = ratio > 1.1
    notes = ["estimate grows toward the scan edge"] if non_uniform else []
    return HypothesisReport(
        "H0", not non_uniform,
        {"c": c_max, "trend_slope": slope, "edge_over_centre": ratio, "site": i,
         "argmax": argmax},
        detail, notes,
    )


def check_h1(nu: ChainMeasure, k: int, q: float, settings: AscentSettings | None = None) -> HypothesisReport:
    """LSq constant estimate for the window marginal ``nu_{Lambda(k)}``."""
    lo, hi = window(nu.n_sites, k)
    mu = nu.window_marginal(k)
    est = ls_constant(mu, q, settings=settings)
    return HypothesisReport(
        "H1", None,
        {"C": est.constant_lower, "k": k, "window": (lo, hi), "converged": est.converged,
         "witness": est.witness},
        [est.to_record()],
    )


def _window_pairs(nu: ChainMeasure, k: int) -> list[tuple[int, int]]:
    win = _window_sites(nu, k)
    return [(r, s) for r in win for s in (r - 1, r + 1) if s in win]


def _pair_moments(nu: ChainMeasure, k: int, q: float, eps: float) -> list[dict]:
    a = 2.0 ** (q + 2) * eps
    out = []
    for r, s in _window_pairs(nu, k):
        V = _pair_value(nu, r, s)
        G = abs(_pair_gradient(nu, r, r, s)) ** q
        out.append({"window": k, "r": r, "s": s,
                    "log_exp_V": log_moment(nu, V * a),
                    "log_exp_gradV": log_moment(nu, G * a)})
    return out


def moment_constant(nu: ChainMeasure, q: float, eps: float, windows: Iterable[int] | None = None) -> float:
    """``K``: the largest pair log-moment over the given windows (default: all)."""
    ws = list(nu.model.sites) if windows is None else list(windows)
    rows = [r for k in ws for r in _pair_moments(nu, k, q, eps)]
    return max([0.0] + [max(r["log_exp_V"], r["log_exp_gradV"]) for r in rows])


def composite_F(nu: ChainMeasure, k: int, r: int) -> tuple[GridFunction, list[int]]:
    """``F(r)`` and the integrated set ``S(r)`` of the composite moment around ``k``."""
    if r in (k - 1, k, k + 1):
        F = _pair_gradient(nu, r, k - 1, k) + _pair_gradient(nu, r, k + 1, k)
        return F, _tilde(nu, k)
    if r == k - 2:
        return _pair_gradient(nu, r, k - 3, r), list(range(1, k - 2))
    if r == k + 2:
        return _pair_gradient(nu, r, k + 3, r), list(range(k + 3, nu.n_sites + 1))
    raise ValueError(f"site {r} is not in the window of {k}")


def composite_moments(nu: ChainMeasure, k: int, q: float, eps: float) -> dict[int, float]:
    """``log nu e^{eps(|F(r)| + E^{S(r)}|F(r)|)^q}`` for each chain site ``r`` of ``Lambda(k)``."""
    out = {}
    for r in _window_sites(nu, k):
        F, S = composite_F(nu, k, r)
        aF = abs(F)
        X = (aF + nu.spec.expect(_chain_sites(nu, S), aF)) ** q * eps
        out[r] = log_moment(nu, X)
    return out


def _rebuild(nu: ChainMeasure, scale: float) -> ChainMeasure:
    g = nu.grid
    m = int(round((g.m - 1) * scale)) + 1
    return ChainMeasure(nu.model, build_grid(g.L * scale, m, g.scheme, g.element_budget))


def check_h2(
    nu: ChainMeasure,
    k: int,
    q: float,
    eps: float,
    ladder: Sequence[float] = (1.0, 1.25, 1.5),
    growth_tol: float = 0.05,
) -> HypothesisReport:
    """Pair exponential moments on ``Lambda(k)`` plus composite moments and a truncation ladder.

    The ladder rebuilds the grid on ``[-sL, sL]`` with the node spacing kept
    fixed; a relative growth of ``K`` above ``growth_tol`` across the ladder
    is flagged as a sign that the untruncated moment diverges.
    """
    if eps < 0:
        raise ConfigurationError("eps must be nonnegative")
    rows = _pair_moments(nu, k, q, eps)
    K = max([0.0] + [max(r["log_exp_V"], r["log_exp_gradV"]) for r in rows])
    comp = composite_moments(nu, k, q, eps)
    Ls, Ks = [], []
    for s in ladder:
        other = nu if s == 1.0 else _rebuild(nu, s)
        rr = _pair_moments(other, k, q, eps)
        Ls.append(other.grid.L)
        Ks.append(max([0.0] + [max(r["log_exp_V"], r["log_exp_gradV"]) for r in rr]))
    slope = float(np.polyfit(Ls, Ks, 1)[0]) if len(Ls) > 1 else 0.0
    growth = (Ks[-1] - Ks[0]) / max(abs(Ks[0]), 1e-300) if Ks[0] > 0 else 0.0
    flagged = growth > growth_tol
    notes = ["K grows along the truncation ladder"] if flagged else []
    return HypothesisReport(
        "H2", not flagged,
        {"K": K, "eps": eps, "ladder_L": Ls, "ladder_K": Ks, "ladder_slope": slope,
         "ladder_growth": growth, "composite": comp},
        rows, notes,
    )


def check_h3(model: LatticeModel, ledger: ConstantLedger) -> HypothesisReport:
    rep = feasibility_thresholds(ledger)
    J = model.max_coupling()
    return HypothesisReport(
        "H3", bool(J <= rep.J_star),
        {"J": J, "J_star": rep.J_star, "margin": rep.J_star - J},
        [{"condition": k, "slack": v, "pass": p} for k, v, p in rep.rows()],
    )


# ---------------------------------------------------------------------------
# inequality margins
# ---------------------------------------------------------------------------


@dataclass
class LemmaInstance:
    """``nu``, ``f`` and the indices/test function the chosen inequality needs.

    ``k``: centre site; ``pair``: ``(i, j)`` block indices for L3.3; ``u``:
    the site of the left side of L5.3 (default ``k``); ``u_fn``: the test
    function localised in ``Lambda(k)`` for L3.1.
    """

    nu: ChainMeasure
    f: GridFunction
    k: int | None = None
    pair: tuple[int, int] = (1, 0)
    u: int | None = None
    u_fn: GridFunction | None = None
    partition: SweepPartition | None = None


@dataclass
class LemmaResult:
    which: str
    lhs: float | None
    rhs: float | None
    margin: float | None
    precondition_ok: bool
    detail: dict = field(default_factory=dict)


def _res(which: str, lhs: float, rhs: float, **detail) -> LemmaResult:
    return LemmaResult(which, float(lhs), float(rhs), float(rhs - lhs), True, detail)


def _localisation_error(u: GridFunction, sites: Sequence[int]) -> float:
    """Largest variation of ``u`` along axes of sites outside ``sites``."""
    if u.is_constant:
        return 0.0
    worst = 0.0
    for s in u.dependent_sites():
        if s in sites:
            continue
        ax = s - u.start
        v = u.values
        worst = max(worst, float(np.max(np.abs(v - np.take(v, [0], axis=ax)))))
    return worst


def _l31(inst: LemmaInstance, L: ConstantLedger, q: float, variant: str) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    C, eps = L.inputs.C, L.inputs.eps
    u = inst.u_fn if inst.u_fn is not None else GridFunction.constant(nu.grid, 0.0)
    win = _window_sites(nu, k)
    loc = _localisation_error(u, win)
    pre_moment = log_moment(nu, abs(u) ** q * (2.0**q * eps))
    if loc >= 1e-12 or not math.isfinite(pre_moment):
        return LemmaResult(variant, None, None, None, False,
                           {"localisation_error": loc, "log_moment_2q": pre_moment})
    lhs = nu.expect(abs(_cov(nu, k, f, u)) ** q)
    h = f - E_tilde(nu, k, f)
    Qkk = Q_term(nu, h, k, q)
    lm = log_moment(nu, abs(u - E_tilde(nu, k, u)) ** q * eps)
    if variant == "L3.1a":
        second = lm * nu.expect(abs(h) ** q) / eps
    else:
        second = L.hat_c * lm * _grad_energy(nu, f, (k - 1, k + 1), q) / eps
    return _res(variant, lhs, C / eps * Qkk + second, Q=Qkk, log_moment=lm, localisation_error=loc)


def _far_sum(nu: ChainMeasure, f: GridFunction, k: int, J: float, q: float) -> float:
    total, n = 0.0, 0
    reach = nu.n_sites + abs(k) + 4
    while 3 + 4 * n <= reach:
        block = [k + 3 + 4 * n + r for r in range(4)] + [k - 3 - 4 * n - r for r in range(4)]
        total += J ** ((n + 1) * (q - 1)) * _grad_energy(nu, f, block, q)
        n += 1
    return total


def _l32(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    h = f - E_tilde(nu, k, f)
    lhs = Q_term(nu, h, k, q)
    near = _grad_energy(nu, f, range(k - 2, k + 3), q)
    far = _far_sum(nu, f, k, L.inputs.J, q)
    return _res("L3.2", lhs, L.D * near + L.D * far, near=near, far=far)


def _l33(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f = inst.nu, inst.f
    part = inst.partition or SweepPartition.even_odd(nu.n_sites)
    i, j = inst.pair
    gi, gj = part.block(i), part.block(j)
    lhs = _grad_energy(nu, block_expectation(nu, gj, f), gi, q)
    rhs = L.D1 * _grad_energy(nu, f, gi, q) + L.D2 * _grad_energy(nu, f, gj, q)
    return _res("L3.3", lhs, rhs, pair=(i, j))


def _l41(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    p = q / (q - 1)
    F = abs(f) ** q
    W = W_function(nu, k)
    Wq = abs(W) ** q
    U = Wq + E_tilde(nu, k, Wq)
    h = f - E_tilde(nu, k, f)
    lhs = abs(_cov(nu, k, F, W))
    rhs = (E_tilde(nu, k, F) ** (1 / p)) * (E_tilde(nu, k, abs(h) ** q * U) ** (1 / q)) * L.c0
    a, b, _ = _aligned_pair(lhs, rhs)
    i = int(np.argmin(b - a)) if a.ndim else 0
    lo_val, hi_val = float(a.ravel()[i]), float(b.ravel()[i])
    return _res("L4.1", lo_val, hi_val, pointwise=True)


def _l42(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    C, K, eps = L.inputs.C, L.inputs.K, L.inputs.eps
    A = A_term(nu, f, k, q)
    h = f - E_tilde(nu, k, f)
    Qkk = Q_term(nu, h, k, q)
    rhs = L.c0**q * C / eps * Qkk + L.c0**q * L.hat_c * K / eps * _grad_energy(nu, f, (k - 1, k + 1), q)
    return _res("L4.2", A, rhs, A=A, Q=Qkk)


def _l43(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, i = inst.nu, inst.f, inst.k
    J = L.inputs.J
    g = nu.spec.expect(_tilde(nu, i), abs(f) ** q) ** (1.0 / q)
    lhs = _grad_energy(nu, g, [i], q)
    A = A_term(nu, f, i, q)
    rhs = L.c1 * _grad_energy(nu, f, [i], q) + J**q * L.c1 / q**q * A
    return _res("L4.3", lhs, rhs, A=A)


def _l53(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    u = k if inst.u is None else inst.u
    J, C, K, eps, c = L.inputs.J, L.inputs.C, L.inputs.K, L.inputs.eps, L.inputs.c
    c1 = L.c1
    h = f - E_tilde(nu, k, f)
    lhs = Q_term(nu, h, u, q)
    far = sum(Q_term(nu, h, t, q) for t in (u - 4, u + 4) if 1 <= t <= nu.n_sites)
    rhs = (
        _grad_energy(nu, h, [u], q)
        + _grad_energy(nu, h, (u - 1, u + 1), q)
        + J**q * c1 * 2 * c * K / eps * nu.expect(abs(h) ** q)
        + c1 * _grad_energy(nu, h, (u - 2, u + 2), q)
        + J**q * c1 * C / eps * far
    )
    return _res("L5.3", lhs, rhs, u=u)


def _l54(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, f, k = inst.nu, inst.f, inst.k
    J, C, K, eps = L.inputs.J, L.inputs.C, L.inputs.K, L.inputs.eps
    c1 = L.c1
    h = f - E_tilde(nu, k, f)
    Qkk = Q_term(nu, h, k, q)
    nh = nu.expect(abs(h) ** q)
    parts = {}
    for r in _chain_sites(nu, (k - 2, k, k + 2)):
        lhs = _grad_energy(nu, h, [r], q)
        rhs = c1 * _grad_energy(nu, f, [r], q) + J**q * C * c1 / eps * Qkk + J**q * c1 * K / eps * nh
        parts[r] = (lhs, rhs, rhs - lhs)
    for r in _chain_sites(nu, (k - 1, k + 1)):
        a, b = _grad_energy(nu, h, [r], q), _grad_energy(nu, f, [r], q)
        parts[r] = (a, b, -abs(a - b))
    r_min = min(parts, key=lambda r: parts[r][2])
    lhs, rhs, margin = parts[r_min]
    out = _res("L5.4", lhs, rhs, parts=parts, worst_site=r_min)
    out.margin = float(margin)
    return out


def _r21(inst: LemmaInstance, L: ConstantLedger, q: float) -> LemmaResult:
    nu, k = inst.nu, inst.k
    comp = composite_moments(nu, k, q, L.inputs.eps)
    r_max = max(comp, key=comp.get)
    return _res("R2.1", comp[r_max], L.inputs.K, moments=comp, worst_site=r_max)


_DISPATCH: Mapping[str, Callable] = {
    "L3.1a": lambda i, L, q: _l31(i, L, q, "L3.1a"),
    "L3.1b": lambda i, L, q: _l31(i, L, q, "L3.1b"),
    "L3.2": _l32,
    "L3.3": _l33,
    "L4.1": _l41,
    "L4.2": _l42,
    "L4.3": _l43,
    "L5.3": _l53,
    "L5.4": _l54,
    "R2.1": _r21,
}


def lemma_margin(which: str, instance: LemmaInstance, ledger: ConstantLedger) -> LemmaResult:
    """RHS minus LHS of the named inequality on one instance.

    Constants come from ``ledger`` (``C``, ``K``, ``eps``, ``J`` from its
    inputs; ``hat_c``, ``c0``, ``c1``, ``D``, ``D1``, ``D2`` derived).  The
    model exponent ``q`` is taken from the chain.
    """
    if which not in _DISPATCH:
        raise ValueError(f"unknown inequality {which!r}; choose from {LEMMAS}")
    q = instance.nu.model.q
    if which != "L3.3" and instance.k is None:
        raise ValueError(f"{which} needs a centre site k")
    return _DISPATCH[which](instance, ledger, q)


def fitted_scale(results: Sequence[LemmaResult]) -> float:
    """Smallest factor on the right-hand sides that makes every sampled margin
    nonnegative (``lhs/rhs`` maximised); below 1 means the constants have slack."""
    ratios = []
    for r in results:
        if not r.precondition_ok:
            continue
        if r.rhs > 0:
            ratios.append(r.lhs / r.rhs)
        elif r.lhs > 0:
            return math.inf
    return max(ratios, default=0.0)
