"""Truncated single-spin quadrature grids and dense multi-site grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BudgetError, ConfigurationError

DEFAULT_ELEMENT_BUDGET = 2**26
SCHEMES = ("uniform_trapezoid", "gauss_legendre_composite")
PANEL_MAX = 8
_MIN_NODES = {"uniform_trapezoid": 2, "gauss_legendre_composite": 4}


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature mesh on ``[-L, L]`` with a second-order derivative stencil."""

    L: float
    m: int
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    element_budget: int = DEFAULT_ELEMENT_BUDGET

    @cached_property
    def diff_matrix(self) -> np.ndarray:
        return _diff_matrix(self.nodes)

    @cached_property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def key(self) -> tuple:
        return (self.scheme, float(self.L), int(self.m))

    def check_budget(self, n_elements: int) -> None:
        if n_elements > self.element_budget:
            raise BudgetError(
                f"dense tensor of {n_elements} elements exceeds budget {self.element_budget}"
            )


def build_grid(
    L: float, m: int, scheme: str = "uniform_trapezoid", element_budget: int = DEFAULT_ELEMENT_BUDGET
) -> Grid:
    if not L > 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if int(m) != m or m < _MIN_NODES[scheme]:
        raise ConfigurationError(f"m = {m} too small for scheme {scheme}")
    m = int(m)
    if scheme == "uniform_trapezoid":
        nodes = np.linspace(-L, L, m)
        h = 2 * L / (m - 1)
        weights = np.full(m, h)
        weights[0] = weights[-1] = h / 2
    else:
        nodes, weights = _composite_gauss_legendre(L, m)
    return Grid(float(L), m, nodes, weights, scheme, int(element_budget))


def _composite_gauss_legendre(L: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    n_panels = -(-m // PANEL_MAX)
    sizes = [m // n_panels + (1 if p < m % n_panels else 0) for p in range(n_panels)]
    edges = np.linspace(-L, L, n_panels + 1)
    nodes, weights = [], []
    for (a, b), k in zip(zip(edges[:-1], edges[1:]), sizes):
        x, w = np.polynomial.legendre.leggauss(k)
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    # rescale so the weights sum to 2L to machine precision
    w = np.concatenate(weights)
    return np.concatenate(nodes), w * (2 * L / w.sum())


def _diff_matrix(x: np.ndarray) -> np.ndarray:
    """Three-point Lagrange differentiation (second order, one-sided at the ends)."""
    m = len(x)
    D = np.zeros((m, m))
    if m == 2:
        h = x[1] - x[0]
        D[:, 0], D[:, 1] = -1 / h, 1 / h
        return D
    for i in range(1, m - 1):
        h1, h2 = x[i] - x[i - 1], x[i + 1] - x[i]
        D[i, i - 1] = -h2 / (h1 * (h1 + h2))
        D[i, i] = (h2 - h1) / (h1 * h2)
        D[i, i + 1] = h1 / (h2 * (h1 + h2))
    h1, h2 = x[1] - x[0], x[2] - x[1]
    D[0, :3] = [-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))]
    h1, h2 = x[-2] - x[-3], x[-1] - x[-2]
    D[-1, -3:] = [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2 * h2 + h1) / (h2 * (h1 + h2))]
    return D


def integrate(grid: Grid, f: Sequence[float] | np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.m,):
        raise ValueError(f"expected {grid.m} values, got shape {f.shape}")
    return float(grid.weights @ f)


# --------------------------------------------------------------------------
# Grid functions
# --------------------------------------------------------------------------

_SHRINK_RTOL = 1e-14


class GridFunction:
    """A function of the spins on a contiguous site interval ``[start, stop]``.

    ``values`` has one axis per site; an axis has length ``grid.m`` when the
    function depends on that spin and length 1 when it does not.  A function
    with no axes is a constant.  Instances are treated as immutable.
    """

    __slots__ = ("grid", "start", "values")

    def __init__(self, grid: Grid, start: int | None, values: np.ndarray, shrink: bool = True):
        values = np.asarray(values, dtype=float)
        if values.ndim and start is None:
            raise ValueError("non-constant GridFunction needs a start site")
        for n in values.shape:
            if n not in (1, grid.m):
                raise ValueError(f"axis length {n} incompatible with grid of {grid.m} nodes")
        grid.check_budget(values.size)
        if not np.all(np.isfinite(values)):
            raise ValueError("GridFunction values must be finite")
        self.grid = grid
        self.start = start if values.ndim else None
        self.values = values
        if shrink:
            self._shrink()
        self.values.setflags(write=False)

    # ---- constructors -------------------------------------------------
    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, None, np.asarray(float(c)))

    @classmethod
    def coordinate(cls, grid: Grid, site: int) -> "GridFunction":
        return cls(grid, site, grid.nodes.copy())

    @classmethod
    def from_callable(
        cls, grid: Grid, sites: Sequence[int], func: Callable[..., np.ndarray]
    ) -> "GridFunction":
        """Evaluate ``func(x_a, ..., x_b)`` on the node mesh of consecutive sites."""
        sites = list(sites)
        if sites != list(range(sites[0], sites[0] + len(sites))):
            raise ValueError("sites must be consecutive")
        n = len(sites)
        axes = [grid.nodes.reshape([-1 if k == j else 1 for k in range(n)]) for j in range(n)]
        vals = np.broadcast_to(np.asarray(func(*axes), dtype=float), (grid.m,) * n)
        return cls(grid, sites[0], np.array(vals))

    @classmethod
    def from_values(cls, grid: Grid, start: int, values: np.ndarray) -> "GridFunction":
        return cls(grid, start, np.array(values, dtype=float))

    # ---- structure ----------------------------------------------------
    @property
    def stop(self) -> int | None:
        return None if self.start is None else self.start + self.values.ndim - 1

    @property
    def support(self) -> tuple[int, int] | None:
        return None if self.start is None else (self.start, self.stop)

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 0

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def depends_on(self, site: int) -> bool:
        if self.start is None or not (self.start <= site <= self.stop):
            return False
        return self.values.shape[site - self.start] > 1

    def dependent_sites(self) -> list[int]:
        if self.start is None:
            return []
        return [self.start + a for a, n in enumerate(self.values.shape) if n > 1]

    def scalar(self) -> float:
        if not self.is_constant:
            raise ValueError("function is not constant")
        return float(self.values)

    def aligned(self, lo: int, hi: int) -> np.ndarray:
        """View of ``values`` with one (possibly length-1) axis per site of ``[lo, hi]``."""
        n = hi - lo + 1
        if self.start is None:
            return self.values.reshape((1,) * n)
        if self.start < lo or self.stop > hi:
            raise ValueError("alignment interval does not contain the support")
        shape = (1,) * (self.start - lo) + self.values.shape + (1,) * (hi - self.stop)
        return self.values.reshape(shape)

    def dense(self) -> np.ndarray:
        """Values broadcast to full shape ``m**(stop-start+1)``."""
        if self.start is None:
            return np.array(self.values)
        return np.broadcast_to(self.values, (self.grid.m,) * self.values.ndim).copy()

    def _shrink(self) -> None:
        v = self.values
        if v.ndim == 0:
            return
        scale = float(np.max(np.abs(v))) if v.size else 0.0
        tol = _SHRINK_RTOL * scale
        for ax in range(v.ndim):
            if v.shape[ax] > 1:
                first = np.take(v, [0], axis=ax)
                if np.max(np.abs(v - first)) <= tol:
                    v = first
        keep = [ax for ax, n in enumerate(v.shape) if n > 1]
        if not keep:
            self.values, self.start = v.reshape(()), None
            return
        lo, hi = keep[0], keep[-1]
        self.start = self.start + lo
        self.values = v.reshape(v.shape[lo : hi + 1])

    # ---- algebra ------------------------------------------------------
    def _binary(self, other, op) -> "GridFunction":
        if isinstance(other, GridFunction):
            lo, hi = span_of(self, other)
            if lo is None:
                return GridFunction(self.grid, None, op(self.values, other.values))
            a, b = self.aligned(lo, hi), other.aligned(lo, hi)
            self.grid.check_budget(int(np.prod(np.broadcast_shapes(a.shape, b.shape))))
            return GridFunction(self.grid, lo, op(a, b))
        return GridFunction(self.grid, self.start, op(self.values, float(other)))

    def __add__(self, o):
        return self._binary(o, np.add)

    __radd__ = __add__

    def __sub__(self, o):
        return self._binary(o, np.subtract)

    def __rsub__(self, o):
        return GridFunction(self.grid, self.start, float(o) - self.values)

    def __mul__(self, o):
        return self._binary(o, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._binary(o, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, self.start, -self.values)

    def __pow__(self, e: float):
        return GridFunction(self.grid, self.start, self.values**e)

    def __abs__(self):
        return GridFunction(self.grid, self.start, np.abs(self.values))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return GridFunction(self.grid, self.start, func(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self) -> str:
        return f"GridFunction(support={self.support}, shape={self.values.shape})"


def span_of(*fs: GridFunction) -> tuple[int | None, int | None]:
    starts = [f.start for f in fs if f.start is not None]
    if not starts:
        return None, None
    return min(starts), max(f.stop for f in fs if f.start is not None)


def site_gradient(f: GridFunction, site: int) -> GridFunction:
    """Finite-difference derivative of ``f`` in the spin at ``site``."""
    if not f.depends_on(site):
        return GridFunction.constant(f.grid, 0.0)
    ax = site - f.start
    out = np.moveaxis(np.tensordot(f.grid.diff_matrix, f.values, axes=([1], [ax])), 0, ax)
    return GridFunction(f.grid, f.start, out)


def q_gradient_norm(f: GridFunction, sites: Iterable[int], q: float) -> GridFunction:
    """Pointwise ``sum_i |d f / d x_i|**q`` over ``sites``."""
    if not (1 < q <= 2):
        raise ValueError("q must lie in (1, 2]")
    total = GridFunction.constant(f.grid, 0.0)
    for i in sorted(set(sites)):
        total = total + abs(site_gradient(f, i)) ** q
    return total
