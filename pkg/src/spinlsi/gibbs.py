"""Discretised local specifications, conditional expectations and chain measures.

Every conditional measure is built from one set of log-domain factors:

* a site factor ``log w(x) - phi(x)`` (quadrature weight times ``e^{-phi}``),
* an edge factor ``-Phi_i(x_i, x_{i+1})`` per chain edge, where ``Phi_i`` is
  the energy that :meth:`LatticeModel.edge_energy` assigns to the edge,
* an outer factor for the chain ends against the outer boundary spins.

The resulting family of conditionals is exactly the set of conditional
distributions of the chain measure, so ``E^L E^M = E^L`` (for ``M`` inside
``L``) and ``nu E^L = nu`` hold up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericalDegeneracyError
from .grid import Grid, GridFunction
from .model import LatticeModel

__all__ = [
    "Specification",
    "LocalSpecification",
    "ChainMeasure",
    "Measure",
    "components",
    "local_spec",
    "conditional_expectation",
    "chain_measure",
    "window",
    "window_marginal",
    "dlr_residual",
    "specification_energy",
]


def components(sites: Iterable[int]) -> list[tuple[int, int]]:
    """Maximal runs of consecutive sites, as inclusive ``(first, last)`` pairs."""
    s = sorted(set(int(x) for x in sites))
    out: list[tuple[int, int]] = []
    for x in s:
        if out and x == out[-1][1] + 1:
            out[-1] = (out[-1][0], x)
        else:
            out.append((x, x))
    return out


def _embed(arr: np.ndarray, sites: Sequence[int], lo: int, hi: int) -> np.ndarray:
    shape = [1] * (hi - lo + 1)
    for ax, s in enumerate(sites):
        shape[s - lo] = arr.shape[ax]
    return arr.reshape(shape)


def _place(vec: np.ndarray, axes: Sequence[int], ndim: int) -> np.ndarray:
    shape = [1] * ndim
    for ax, n in zip(axes, vec.shape):
        shape[ax] = n
    return vec.reshape(shape)


@dataclass(frozen=True, eq=False)
class BlockKernel:
    """Conditional law of a contiguous run of block spins.

    ``sites`` names one site per axis (free boundary neighbours included),
    ``block_sites`` the integrated ones.  ``log_Z`` keeps length-1 block axes.
    """

    sites: list[int]
    block_sites: list[int]
    log_mass: np.ndarray
    log_Z: np.ndarray
    mass: np.ndarray


class Specification:
    """The family of conditional measures of a model on a grid."""

    def __init__(self, model: LatticeModel, grid: Grid):
        model.check_on_grid(grid.nodes)
        self.model = model
        self.grid = grid
        x = grid.nodes
        self.log_site = grid.log_weights - model.phase(x)
        self.log_edge = {
            i: -model.edge_energy(i, x[:, None], x[None, :]) for i in range(1, model.n_sites)
        }
        self._cache: dict = {}

    # ---- boundary factors ------------------------------------------------
    def _left_factor(self, c1: int, omega: Mapping[int, float]) -> tuple[np.ndarray, bool]:
        m, x = self.model, self.grid.nodes
        j = c1 - 1
        if j == 0:
            w = omega.get(0, m.boundary.left)
            return -m._outer_term(1, 0, x, w)[None, :], False
        if j in omega:
            return -m.edge_energy(j, float(omega[j]), x)[None, :], False
        return self.log_edge[j], True

    def _right_factor(self, c2: int, omega: Mapping[int, float]) -> tuple[np.ndarray, bool]:
        m, x = self.model, self.grid.nodes
        j = c2 + 1
        n = m.n_sites
        if j == n + 1:
            w = omega.get(n + 1, m.boundary.right)
            return -m._outer_term(n, n + 1, x, w)[:, None], False
        if j in omega:
            return -m.edge_energy(c2, x, float(omega[j]))[:, None], False
        return self.log_edge[c2], True

    def block_log_kernel(
        self, c1: int, c2: int, a: int, b: int, omega: Mapping[int, float] | None = None
    ) -> "BlockKernel":
        """Conditional law of ``x_a..x_b`` given the boundary of block ``[c1, c2]``.

        Sites of the block outside ``[a, b]`` are summed out by transfer
        messages.  Boundary neighbours not fixed by ``omega`` become axes of
        the returned kernel.
        """
        omega = {} if omega is None else {int(k): float(v) for k, v in omega.items()}
        n = self.model.n_sites
        if not (1 <= c1 <= a <= b <= c2 <= n):
            raise ConfigurationError(f"invalid block [{c1},{c2}] / [{a},{b}]")
        lrel = {k: v for k, v in omega.items() if k in (c1 - 1, c2 + 1)}
        key = (c1, c2, a, b, tuple(sorted(lrel.items())))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ls, le = self.log_site, self.log_edge
        bl, lvar = self._left_factor(c1, lrel)
        br, rvar = self._right_factor(c2, lrel)
        cur = bl
        for i in range(c1, a):
            cur = logsumexp(cur[:, :, None] + ls[None, :, None] + le[i][None, :, :], axis=1)
        left = cur
        cur = br
        for i in range(c2, b, -1):
            cur = logsumexp(le[i - 1][:, :, None] + ls[None, :, None] + cur[None, :, :], axis=1)
        right = cur
        ns = b - a + 1
        off = 1 if lvar else 0
        nd = off + ns + (1 if rvar else 0)
        self.grid.check_budget(self.grid.m**nd)
        W = _place(left if lvar else left[0], [0, off] if lvar else [off], nd)
        for s in range(ns):
            W = W + _place(ls, [off + s], nd)
        for s in range(ns - 1):
            W = W + _place(le[a + s], [off + s, off + s + 1], nd)
        W = W + _place(right if rvar else right[:, 0], [off + ns - 1, nd - 1] if rvar else [off + ns - 1], nd)
        block_axes = tuple(range(off, off + ns))
        logZ = logsumexp(W, axis=block_axes, keepdims=True)
        if not np.all(np.isfinite(logZ)):
            raise NumericalDegeneracyError(
                "normalisation underflowed; enlarge L or rescale the phase"
            )
        sites = ([c1 - 1] if lvar else []) + list(range(a, b + 1)) + ([c2 + 1] if rvar else [])
        logp = W - logZ
        out = BlockKernel(sites, list(range(a, b + 1)), logp, logZ, np.exp(logp))
        self._cache[key] = out
        return out

    # ---- conditional expectations -------------------------------------
    def expect_block(
        self, c1: int, c2: int, f: GridFunction, omega: Mapping[int, float] | None = None
    ) -> GridFunction:
        """``E^{[c1,c2]} f`` as a function of the remaining spins."""
        dep = [s for s in f.dependent_sites() if c1 <= s <= c2]
        if not dep:
            return f
        ker = self.block_log_kernel(c1, c2, dep[0], dep[-1], omega)
        lo = min(f.start, ker.sites[0])
        hi = max(f.stop, ker.sites[-1])
        F = f.aligned(lo, hi)
        P = _embed(ker.mass, ker.sites, lo, hi)
        self.grid.check_budget(int(np.prod(np.broadcast_shapes(F.shape, P.shape))))
        axes = tuple(s - lo for s in ker.block_sites)
        return GridFunction(self.grid, lo, np.sum(F * P, axis=axes, keepdims=True))

    def expect(
        self, sites: Iterable[int], f: GridFunction, omega: Mapping[int, float] | None = None
    ) -> GridFunction:
        """``E^{sites} f``; neighbours of the block missing from ``omega`` stay free."""
        sites = sorted(set(int(s) for s in sites))
        for s in sites:
            if not 1 <= s <= self.model.n_sites:
                raise ConfigurationError(f"site {s} lies outside the chain")
        for c1, c2 in components(sites):
            f = self.expect_block(c1, c2, f, omega)
        return f

    def local(self, sites: Iterable[int], omega: Mapping[int, float] | None = None) -> "LocalSpecification":
        return local_spec(self.model, self.grid, sites, omega, spec=self)


@dataclass(frozen=True, eq=False)
class LocalSpecification:
    """Discretised ``E^{L, omega}`` as an explicit tensor.

    ``axis_sites`` lists one site per axis of ``log_mass`` (the block sites
    and any boundary neighbours left free).  ``log_mass`` is the log of the
    conditional probability of the node tuple; ``density`` divides out the
    quadrature weights.  ``log_Z`` has the shape of the free boundary axes.
    """

    sites: tuple[int, ...]
    boundary_sites: tuple[int, ...]
    omega: Mapping[int, float]
    grid: Grid
    axis_sites: tuple[int, ...]
    log_mass: np.ndarray
    log_Z: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @property
    def density(self) -> np.ndarray:
        lw = sum(
            _place(self.grid.log_weights, [ax], self.log_mass.ndim)
            for ax, s in enumerate(self.axis_sites)
            if s in self.sites
        )
        return np.exp(self.log_mass - lw)

    @property
    def Z(self) -> np.ndarray | float:
        z = np.exp(self.log_Z)
        return float(z) if z.ndim == 0 else z

    def measure(self) -> "Measure":
        """The block measure as a :class:`Measure` (fixed boundary, contiguous block)."""
        if self.boundary_sites:
            raise ValueError("boundary is not fully fixed")
        if len(components(self.sites)) != 1:
            raise ValueError("block is not contiguous")
        return Measure(self.grid, self.sites[0], self.mass)


def local_spec(
    model: LatticeModel,
    grid: Grid,
    sites: Iterable[int],
    omega: Mapping[int, float] | None = None,
    spec: Specification | None = None,
) -> LocalSpecification:
    """Explicit conditional measure of the spins on ``sites``.

    Boundary neighbours in ``omega`` are fixed to the given values; any other
    chain neighbour becomes a free axis, so the result is a kernel.
    """
    spec = spec or Specification(model, grid)
    sites = tuple(sorted(set(int(s) for s in sites)))
    omega = {int(k): float(v) for k, v in (omega or {}).items() if int(k) not in sites}
    parts = [spec.block_log_kernel(c1, c2, c1, c2, omega) for c1, c2 in components(sites)]
    all_sites = sorted(set(s for p in parts for s in p.sites))
    nd = len(all_sites)
    log_mass = np.zeros(())
    log_Z = np.zeros(())
    for p in parts:
        axes = [all_sites.index(s) for s in p.sites]
        log_mass = log_mass + _place(p.log_mass, axes, nd)
        log_Z = log_Z + _place(p.log_Z, axes, nd)
    bnd = tuple(s for s in all_sites if s not in sites)
    full = tuple(1 if s in sites else grid.m for s in all_sites)
    log_Z = np.broadcast_to(log_Z, full).reshape((grid.m,) * len(bnd))
    return LocalSpecification(
        sites=sites,
        boundary_sites=bnd,
        omega=dict(omega),
        grid=grid,
        axis_sites=tuple(all_sites),
        log_mass=np.array(np.broadcast_to(log_mass, (grid.m,) * nd)),
        log_Z=np.array(log_Z),
    )


def conditional_expectation(spec: LocalSpecification, f: GridFunction) -> GridFunction:
    """Integrate ``f`` over the block spins against an explicit local specification."""
    lo = min([spec.axis_sites[0]] + ([f.start] if f.start is not None else []))
    hi = max([spec.axis_sites[-1]] + ([f.stop] if f.start is not None else []))
    F = f.aligned(lo, hi)
    P = _embed(spec.mass, spec.axis_sites, lo, hi)
    spec.grid.check_budget(int(np.prod(np.broadcast_shapes(F.shape, P.shape))))
    axes = tuple(s - lo for s in spec.sites)
    return GridFunction(spec.grid, lo, np.sum(F * P, axis=axes, keepdims=True))


def specification_energy(
    model: LatticeModel, sites: Sequence[int], x: Sequence[float], omega: Mapping[int, float] | None = None
) -> float:
    """Energy whose Boltzmann weight defines :func:`local_spec`.

    Edges inside the chain carry the full edge energy whether or not both
    ends lie in the block; edges to the outer sites carry the single term
    oriented from the chain.  For the whole chain this coincides with
    :func:`spinlsi.model.hamiltonian`.
    """
    block = dict(zip((int(s) for s in sites), (float(v) for v in x)))
    omega = {int(k): float(v) for k, v in (omega or {}).items()}
    n = model.n_sites
    e = float(sum(model.phase(v) for v in block.values()))
    for i in range(1, n):
        j = i + 1
        if i in block or j in block:
            xi = block.get(i, omega.get(i))
            xj = block.get(j, omega.get(j))
            if xi is None or xj is None:
                raise KeyError(f"missing boundary value on edge ({i},{j})")
            e += float(model.edge_energy(i, xi, xj))
    if 1 in block:
        e += float(model._outer_term(1, 0, block[1], omega.get(0, model.boundary.left)))
    if n in block:
        e += float(model._outer_term(n, n + 1, block[n], omega.get(n + 1, model.boundary.right)))
    return e


# --------------------------------------------------------------------------
# Plain discrete measures on contiguous site intervals
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Measure:
    """Probability masses on the node mesh of sites ``start .. start+ndim-1``."""

    grid: Grid
    start: int
    mass: np.ndarray

    def __post_init__(self) -> None:
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.grid.m,) * mass.ndim or mass.ndim == 0:
            raise ValueError("mass must have one full axis per site")
        total = mass.sum()
        if not np.isfinite(total) or total <= 0:
            raise NumericalDegeneracyError("measure has no mass")
        object.__setattr__(self, "mass", mass / total)

    @classmethod
    def from_log_density(cls, grid: Grid, log_density, start: int = 1) -> "Measure":
        """Single-site measure with density ``exp(log_density(x))`` against the weights."""
        lw = grid.log_weights + np.asarray(log_density(grid.nodes), dtype=float)
        return cls(grid, start, np.exp(lw - lw.max()))

    @property
    def n_sites(self) -> int:
        return self.mass.ndim

    @property
    def stop(self) -> int:
        return self.start + self.mass.ndim - 1

    @property
    def sites(self) -> range:
        return range(self.start, self.stop + 1)

    def product(self, other: "Measure") -> "Measure":
        """Independent product with ``other`` placed on the following sites."""
        mass = np.multiply.outer(self.mass, other.mass)
        return Measure(self.grid, self.start, mass)

    def as_function(self, f: GridFunction | np.ndarray | float) -> np.ndarray:
        if isinstance(f, GridFunction):
            if f.start is not None and (f.start < self.start or f.stop > self.stop):
                raise ValueError("function depends on spins outside the measure")
            return f.aligned(self.start, self.stop)
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return arr
        return arr

    def expect(self, f: GridFunction | np.ndarray | float) -> float:
        arr = self.as_function(f)
        if isinstance(f, GridFunction) and f.is_constant:
            return f.scalar()
        return float(np.sum(self.mass * arr))

    def function(self, values: np.ndarray) -> GridFunction:
        return GridFunction(self.grid, self.start, np.asarray(values, dtype=float))


# --------------------------------------------------------------------------
# Finite-chain Gibbs measure
# --------------------------------------------------------------------------


class ChainMeasure:
    """The finite-chain Gibbs measure ``nu`` via left/right transfer messages."""

    def __init__(self, model: LatticeModel, grid: Grid, spec: Specification | None = None):
        self.spec = spec or Specification(model, grid)
        self.model = model
        self.grid = grid
        n = model.n_sites
        ls, le = self.spec.log_site, self.spec.log_edge
        x = grid.nodes
        left = {1: -model._outer_term(1, 0, x, model.boundary.left)}
        for i in range(1, n):
            left[i + 1] = logsumexp(left[i][:, None] + ls[:, None] + le[i], axis=0)
        right = {n: -model._outer_term(n, n + 1, x, model.boundary.right)}
        for i in range(n, 1, -1):
            right[i - 1] = logsumexp(le[i - 1] + (ls + right[i])[None, :], axis=1)
        self.log_left = left
        self.log_right = right
        self.log_Z = float(logsumexp(left[n] + ls + right[n]))
        if not np.isfinite(self.log_Z):
            raise NumericalDegeneracyError("chain normalisation is not finite")
        self._marginals: dict[tuple[int, int], np.ndarray] = {}

    @property
    def n_sites(self) -> int:
        return self.model.n_sites

    @property
    def boundary(self):
        return self.model.boundary

    def marginal(self, a: int, b: int) -> np.ndarray:
        """Probability masses of ``(x_a, ..., x_b)``."""
        if not 1 <= a <= b <= self.n_sites:
            raise ValueError(f"interval [{a},{b}] outside the chain")
        hit = self._marginals.get((a, b))
        if hit is not None:
            return hit
        nd = b - a + 1
        self.grid.check_budget(self.grid.m**nd)
        ls, le = self.spec.log_site, self.spec.log_edge
        W = _place(self.log_left[a], [0], nd) + _place(self.log_right[b], [nd - 1], nd)
        for s in range(nd):
            W = W + _place(ls, [s], nd)
        for s in range(nd - 1):
            W = W + _place(le[a + s], [s, s + 1], nd)
        out = np.exp(W - self.log_Z)
        out.setflags(write=False)
        self._marginals[(a, b)] = out
        return out

    def measure(self, a: int, b: int) -> Measure:
        return Measure(self.grid, a, self.marginal(a, b))

    def expect(self, f: GridFunction) -> float:
        if f.is_constant:
            return f.scalar()
        dep = f.dependent_sites()
        a, b = dep[0], dep[-1]
        marg = self.marginal(a, b)
        F = f.aligned(a, b)
        idle = tuple(ax for ax in range(b - a + 1) if F.shape[ax] == 1)
        if idle:
            marg = marg.sum(axis=idle, keepdims=True)
        return float(np.sum(marg * F))

    def lq_norm(self, f: GridFunction, q: float) -> float:
        return self.expect(abs(f) ** q) ** (1.0 / q)

    def window_marginal(self, k: int) -> Measure:
        lo, hi = window(self.n_sites, k)
        return self.measure(lo, hi)


def window(n_sites: int, k: int, radius: int = 2) -> tuple[int, int]:
    """The window ``{k-2, ..., k+2}`` clipped to the chain."""
    lo, hi = max(1, k - radius), min(n_sites, k + radius)
    if lo > hi:
        raise ValueError(f"window around {k} misses the chain")
    return lo, hi


def chain_measure(model: LatticeModel, grid: Grid) -> ChainMeasure:
    return ChainMeasure(model, grid)


def window_marginal(nu: ChainMeasure, k: int) -> Measure:
    return nu.window_marginal(k)


def dlr_residual(
    model: LatticeModel,
    grid: Grid,
    block: Iterable[int],
    inner: Iterable[int],
    f: GridFunction,
    omega: Mapping[int, float] | None = None,
    spec: Specification | None = None,
) -> float:
    """Max-norm of ``E^{L,omega}(E^{M} f) - E^{L,omega} f`` for ``M`` inside ``L``."""
    block = set(int(s) for s in block)
    inner = set(int(s) for s in inner)
    if not inner <= block:
        raise ValueError("inner block must be a subset of the outer block")
    spec = spec or Specification(model, grid)
    om = {int(k): float(v) for k, v in (omega or {}).items() if int(k) not in block}
    lhs = spec.expect(block, spec.expect(inner, f, om), om)
    rhs = spec.expect(block, f, om)
    return (lhs - rhs).max_abs()
