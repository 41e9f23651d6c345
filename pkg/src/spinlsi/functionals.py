"""Entropy, q-Dirichlet energy, covariance, exponential moments and LSq/SGq constants.

Measures are :class:`spinlsi.gibbs.Measure` objects: probability masses on
the node mesh of a contiguous run of sites.  Functions are
:class:`~spinlsi.grid.GridFunction` values (or arrays broadcastable to the
measure's mesh).

Constant estimates maximise a Rayleigh ratio

* SGq:  ``mu|f - mu f|^q / E_q(f)``
* LSq:  ``Ent_mu(|f|^q) / E_q(f)``

over grid functions, where ``E_q`` is the nearest-neighbour (edge) Dirichlet
form of :class:`EdgeForm`.  The node-centred stencil of
:func:`~spinlsi.grid.site_gradient` annihilates the alternating mode in the
interior, so it is not used for the variational quotients.  The ascent gives a lower bound certified by the stored
witness; for ``q = 2`` the spectral gap also has an eigenvalue route.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

from .errors import DomainError
from .gibbs import Measure
from .grid import GridFunction, q_gradient_norm

__all__ = [
    "InequalityEstimate",
    "AscentSettings",
    "entropy",
    "dirichlet_q",
    "covariance",
    "exp_moment",
    "EdgeForm",
    "edge_dirichlet",
    "ls_ratio",
    "sg_ratio",
    "sg_constant",
    "ls_constant",
]


def _as_array(mu: Measure, g) -> np.ndarray:
    arr = np.asarray(mu.as_function(g), dtype=float)
    return np.broadcast_to(arr, mu.mass.shape)


def entropy(mu: Measure, g) -> float:
    """``mu(g log g) - mu(g) log mu(g)`` with ``0 log 0 = 0``."""
    arr = _as_array(mu, g)
    if np.any(np.isnan(arr)):
        raise DomainError("entropy argument contains NaN")
    if arr.min() < -1e-14:
        raise DomainError("entropy needs a nonnegative function")
    arr = np.clip(arr, 0.0, None)
    mg = float(np.sum(mu.mass * arr))
    if mg <= 0:
        return 0.0
    return float(np.sum(mu.mass * _xlog_ratio(arr, mg)))


def _xlog_ratio(g: np.ndarray, mg: float) -> np.ndarray:
    """``g log(g / mg)`` with ``0 log 0 = 0``; the logs are split so that a
    subnormal ``g`` cannot underflow the ratio to zero."""
    with np.errstate(divide="ignore"):
        lg = np.where(g > 0, np.log(np.where(g > 0, g, 1.0)) - np.log(mg), 0.0)
    return g * lg


def dirichlet_q(mu: Measure, f: GridFunction, sites: Sequence[int] | None = None, q: float = 2.0) -> float:
    """``mu(sum_i |grad_i f|^q)`` over ``sites`` (default: all sites of ``mu``)."""
    sites = list(mu.sites) if sites is None else list(sites)
    return mu.expect(q_gradient_norm(f, sites, q))


def covariance(mu: Measure, f, g) -> float:
    a = _as_array(mu, f)
    b = _as_array(mu, g)
    a = a - np.sum(mu.mass * a)
    b = b - np.sum(mu.mass * b)
    return float(np.sum(mu.mass * a * b))


def exp_moment(mu: Measure, g, s: float) -> float:
    """``log mu(exp(s g))`` evaluated by log-sum-exp."""
    if s < 0:
        raise DomainError("exponent s must be nonnegative")
    arr = _as_array(mu, g)
    if np.any(np.isnan(arr)):
        raise DomainError("moment argument contains NaN")
    if s == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        lm = np.log(mu.mass)
    return float(logsumexp(lm + s * arr))


# --------------------------------------------------------------------------
# Rayleigh ratios with analytic gradients (arrays over the full mesh)
# --------------------------------------------------------------------------


def _grad_axis(D: np.ndarray, f: np.ndarray, ax: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(D, f, axes=([1], [ax])), 0, ax)


class EdgeForm:
    """Nearest-neighbour Dirichlet form of a measure on its node mesh.

    The energy of ``f`` is ``sum_a sum_edges c_a |(f(x+e_a) - f(x)) / dx_a|^q``
    with edge weight ``c_a = (rho(x) + rho(x+e_a)) / 2 dx_a prod_{b != a} w_b``,
    ``rho`` the density against the quadrature weights.  Its kernel is the
    constants, and it factorises over independent coordinates.
    """

    def __init__(self, mu: Measure):
        grid = mu.grid
        n = mu.n_sites
        lw = grid.log_weights
        with np.errstate(divide="ignore"):
            lm = np.log(mu.mass)
        lrho = lm - sum(lw.reshape([-1 if k == a else 1 for k in range(n)]) for a in range(n))
        dx = np.diff(grid.nodes)
        self.n = n
        self.inv_dx = []
        self.weights = []
        for a in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[a], hi[a] = slice(0, -1), slice(1, None)
            shape = [-1 if k == a else 1 for k in range(n)]
            lc = np.logaddexp(lrho[tuple(lo)], lrho[tuple(hi)]) - np.log(2.0) + np.log(dx).reshape(shape)
            lc = lc + sum(lw.reshape([-1 if k == b else 1 for k in range(n)]) for b in range(n) if b != a)
            self.weights.append(np.exp(lc))
            self.inv_dx.append((1.0 / dx).reshape(shape))

    def energy(self, f: np.ndarray, q: float, want_grad: bool):
        total = 0.0
        grad = np.zeros_like(f) if want_grad else None
        for a in range(self.n):
            df = np.diff(f, axis=a) * self.inv_dx[a]
            ad = np.abs(df)
            total += float(np.sum(self.weights[a] * ad**q))
            if want_grad:
                w = q * self.weights[a] * ad ** (q - 1) * np.sign(df) * self.inv_dx[a]
                lo = [slice(None)] * self.n
                hi = [slice(None)] * self.n
                lo[a], hi[a] = slice(0, -1), slice(1, None)
                grad[tuple(lo)] -= w
                grad[tuple(hi)] += w
        return total, grad


def _node_energy(mu: Measure, f: np.ndarray, q: float, want_grad: bool):
    D = mu.grid.diff_matrix
    total = 0.0
    grad = np.zeros_like(f) if want_grad else None
    for ax in range(f.ndim):
        df = _grad_axis(D, f, ax)
        a = np.abs(df)
        total += float(np.sum(mu.mass * a**q))
        if want_grad:
            w = q * mu.mass * a ** (q - 1) * np.sign(df)
            grad += _grad_axis(D.T, w, ax)
    return total, grad


def _ls_numerator(mu: Measure, f: np.ndarray, q: float, want_grad: bool):
    g = np.abs(f) ** q
    mg = float(np.sum(mu.mass * g))
    if mg <= 0:
        return 0.0, (np.zeros_like(f) if want_grad else None)
    val = float(np.sum(mu.mass * _xlog_ratio(g, mg)))
    if not want_grad:
        return val, None
    lg = np.where(g > 0, np.log(np.where(g > 0, g, 1.0)) - np.log(mg), 0.0)
    grad = mu.mass * lg * q * np.abs(f) ** (q - 1) * np.sign(f)
    return val, grad


def _sg_numerator(mu: Measure, f: np.ndarray, q: float, want_grad: bool):
    c = f - np.sum(mu.mass * f)
    a = np.abs(c)
    val = float(np.sum(mu.mass * a**q))
    if not want_grad:
        return val, None
    w = q * mu.mass * a ** (q - 1) * np.sign(c)
    return val, w - mu.mass * np.sum(w)


def _ratio(kind: str, mu: Measure, f: np.ndarray, q: float, want_grad: bool = False,
           form: EdgeForm | None = None):
    num_fn = _ls_numerator if kind == "LSq" else _sg_numerator
    num, dnum = num_fn(mu, f, q, want_grad)
    form = form or EdgeForm(mu)
    den, dden = form.energy(f, q, want_grad)
    if den <= 0:
        return (0.0, np.zeros_like(f)) if want_grad else 0.0
    r = num / den
    if not want_grad:
        return r
    return r, (dnum - r * dden) / den


def edge_dirichlet(mu: Measure, f, q: float = 2.0) -> float:
    """Energy of ``f`` in the nearest-neighbour Dirichlet form of ``mu``."""
    return EdgeForm(mu).energy(np.array(_as_array(mu, f)), q, False)[0]


def ls_ratio(mu: Measure, f, q: float = 2.0) -> float:
    """``Ent(|f|^q)`` over the edge Dirichlet energy."""
    return _ratio("LSq", mu, np.array(_as_array(mu, f)), q)


def sg_ratio(mu: Measure, f, q: float = 2.0) -> float:
    """``mu|f - mu f|^q`` over the edge Dirichlet energy."""
    return _ratio("SGq", mu, np.array(_as_array(mu, f)), q)


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AscentSettings:
    step: float = 0.1
    n_seeds: int = 12
    max_iter: int = 500
    tol: float = 1e-9
    seed: int = 0
    polish: bool = False


@dataclass(frozen=True, eq=False)
class InequalityEstimate:
    kind: str
    q: float
    constant_lower: float
    witness: GridFunction
    constant_eigen: float | None
    iterations: int
    converged: bool
    seeds: int = 0

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "q": self.q,
            "constant_lower": self.constant_lower,
            "eigen_value": self.constant_eigen,
            "seeds": self.seeds,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _seed_bank(mu: Measure, n_seeds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Coordinate functions, odd polynomials and tilts, topped up with random seeds."""
    shape = mu.mass.shape
    n = len(shape)
    x = mu.grid.nodes / mu.grid.L
    L = mu.grid.L
    coords = [x.reshape([-1 if k == a else 1 for k in range(n)]) for a in range(n)]
    bank: list[np.ndarray] = [sum(coords)] if n > 1 else []
    for c in coords:
        bank += [c, np.exp(0.5 * L * c), c**3, np.exp(-0.5 * L * c), np.tanh(L * c)]
    bank = [np.broadcast_to(b, shape).astype(float) for b in bank]
    n_rand = min(2, n_seeds)
    chosen = bank[: n_seeds - n_rand]
    while len(chosen) < n_seeds:
        chosen.append(rng.standard_normal(shape))
    return chosen


def _ascend(fun: Callable, x0: np.ndarray, metric: np.ndarray, s: AscentSettings):
    """Normalised ascent of a scale-invariant ratio with backtracking steps."""

    def normalise(v):
        nv = np.sqrt(np.sum(metric * v * v))
        return v / nv if nv > 0 else v

    x = normalise(x0)
    r, g = fun(x)
    step = s.step
    it = 0
    converged = False
    for it in range(1, s.max_iter + 1):
        d = g / metric
        d = d - np.sum(metric * d * x) * x
        nd = np.sqrt(np.sum(metric * d * d))
        if not nd > 0:
            converged = True
            break
        d = d / nd
        while True:
            xn = normalise(x + step * d)
            rn, gn = fun(xn)
            if rn > r:
                break
            step *= 0.5
            if step < 1e-12:
                break
        if not rn > r:
            converged = True
            break
        gain = (rn - r) / max(abs(r), 1e-300)
        x, r, g = xn, rn, gn
        step = min(2.0 * step, 1.0)
        if gain < s.tol:
            converged = True
            break
    return x, r, it, converged


def _polish(fun: Callable, x: np.ndarray, metric: np.ndarray, max_iter: int, tol: float):
    """Quasi-Newton refinement in metric-scaled coordinates."""
    sq = np.sqrt(metric)
    shape = x.shape

    def obj(y):
        r, g = fun(y.reshape(shape) / sq)
        return -r, -(g / sq).ravel()

    res = scipy.optimize.minimize(obj, (x * sq).ravel(), jac=True, method="L-BFGS-B",
                                  options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-14})
    return res.x.reshape(shape) / sq, -float(res.fun), int(res.nit), bool(res.success)


_POLISH_FACTOR = 10


def _estimate(kind: str, mu: Measure, q: float, settings: AscentSettings) -> InequalityEstimate:
    if not (1 < q <= 2):
        raise DomainError("q must lie in (1, 2]")
    rng = np.random.default_rng(settings.seed)
    metric = mu.mass + 1e-12 * mu.mass.max()
    form = EdgeForm(mu)

    def fun(f):
        return _ratio(kind, mu, f, q, want_grad=True, form=form)

    best = None
    total_it = 0
    all_conv = True
    for idx, x0 in enumerate(_seed_bank(mu, settings.n_seeds, rng)):
        x, r, it, conv = _ascend(fun, x0, metric, settings)
        if settings.polish:
            xp, rp, itp, conv = _polish(fun, x, metric, _POLISH_FACTOR * settings.max_iter, settings.tol)
            rp = _ratio(kind, mu, xp, q, form=form)
            it += itp
            if rp > r:
                x, r = xp, rp
        total_it += it
        all_conv &= conv
        if best is None or r > best[1]:
            best = (x, r)
    x, _ = best
    witness = mu.function(x)
    value = _ratio(kind, mu, np.array(_as_array(mu, witness)), q, form=form)
    return InequalityEstimate(kind, q, value, witness, None, total_it, all_conv, settings.n_seeds)


def ls_constant(mu: Measure, q: float = 2.0, method: str = "ascent",
                settings: AscentSettings | None = None) -> InequalityEstimate:
    """Lower estimate of the LSq constant of ``mu`` by seeded ascent."""
    if method != "ascent":
        raise ValueError("LSq constants are only estimated by ascent")
    return _estimate("LSq", mu, q, settings or AscentSettings())


def sg_constant(mu: Measure, q: float = 2.0, method: str = "eigen",
                settings: AscentSettings | None = None) -> InequalityEstimate:
    """SGq constant: generalised eigenproblem (``q = 2``) or seeded ascent."""
    if method == "ascent":
        return _estimate("SGq", mu, q, settings or AscentSettings())
    if method != "eigen":
        raise ValueError(f"unknown method {method!r}")
    if q != 2:
        raise DomainError("the eigen method needs q = 2")
    lam, vec = _smallest_gap(mu)
    witness = mu.function(vec)
    value = sg_ratio(mu, witness, 2.0)
    return InequalityEstimate("SGq", 2.0, value, witness, 1.0 / lam, 0, True, 0)


_DENSE_MAX = 8


def _stiffness(mu: Measure) -> sp.csr_matrix:
    """Matrix of the quadratic edge Dirichlet form on the flattened mesh."""
    m, n = mu.grid.m, mu.n_sites
    form = EdgeForm(mu)
    G1 = sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")
    G1 = sp.diags(1.0 / np.diff(mu.grid.nodes)) @ G1
    I = sp.identity(m, format="csr")
    A = None
    for a in range(n):
        Ga = None
        for k in range(n):
            blk = G1 if k == a else I
            Ga = blk if Ga is None else sp.kron(Ga, blk, format="csr")
        term = Ga.T @ sp.diags(form.weights[a].ravel()) @ Ga
        A = term if A is None else A + term
    return A.tocsr()


def _smallest_gap(mu: Measure) -> tuple[float, np.ndarray]:
    """Smallest nonzero eigenvalue of ``A v = lambda M v`` and its eigenvector.

    Tail nodes are very stiff relative to their mass, so the spectrum spans
    many decades; shift-invert around a point just below 0 resolves the
    bottom of it accurately.  Zero masses are allowed (``M`` semidefinite).
    """
    A = _stiffness(mu)
    mass = mu.mass.ravel()
    size = mass.size
    if size <= _DENSE_MAX:
        Ad = A.toarray()
        pos = mass > 0
        a, b = np.where(pos)[0], np.where(~pos)[0]
        Abb_pinv = np.linalg.pinv(Ad[np.ix_(b, b)]) if len(b) else np.zeros((0, 0))
        S = Ad[np.ix_(a, a)] - Ad[np.ix_(a, b)] @ Abb_pinv @ Ad[np.ix_(b, a)]
        lam, vecs = scipy.linalg.eigh(S, np.diag(mass[a]))
        v = np.zeros(size)
        v[a] = vecs[:, 1]
        v[b] = -Abb_pinv @ Ad[np.ix_(b, a)] @ vecs[:, 1]
        return float(lam[1]), v.reshape(mu.mass.shape)
    M = sp.diags(mass).tocsc()
    lam, vecs = spla.eigsh(A.tocsc(), k=3, M=M, sigma=-1e-3, which="LM", tol=1e-13)
    order = np.argsort(lam)
    return float(lam[order[1]]), vecs[:, order[1]].reshape(mu.mass.shape)
