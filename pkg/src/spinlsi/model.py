"""Spin-chain model: phase, pair interaction, couplings, boundary and energy.

Sites of the finite chain are labelled ``1..N``.  Sites ``0`` and ``N+1`` are
the outer boundary; their spin values come from :class:`BoundaryCondition`
(or are absent when the boundary is free).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ConfigurationIncompleteError

ArrayLike = np.ndarray | float

EDGE_CONVENTIONS = ("directed", "per_edge")


@dataclass(frozen=True)
class PhaseSpec:
    """Single-site self energy ``phi``.

    ``kind="power"`` gives ``phi(x) = |x|**t``; ``kind="custom"`` uses the
    supplied ``func`` and its analytic derivative ``deriv``.
    """

    kind: str = "power"
    t: float = 4.0
    func: Callable[[np.ndarray], np.ndarray] | None = None
    deriv: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind == "power":
            if not self.t > 1:
                raise ConfigurationError(f"power phase needs t > 1, got {self.t}")
        elif self.kind == "custom":
            if self.func is None or self.deriv is None:
                raise ConfigurationError("custom phase needs func and deriv")
        else:
            raise ConfigurationError(f"unknown phase kind {self.kind!r}")

    def __call__(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return np.abs(x) ** self.t
        return np.asarray(self.func(x), dtype=float)

    def grad(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return self.t * np.sign(x) * np.abs(x) ** (self.t - 1)
        return np.asarray(self.deriv(x), dtype=float)


@dataclass(frozen=True)
class InteractionSpec:
    """Nearest-neighbour pair energy ``V(x, y)``.

    ``power_difference`` is ``|x-y|**r``, ``quadratic`` is ``(x-y)**2`` and
    ``custom`` takes ``func(x, y)`` with partial derivatives ``grad1`` and
    ``grad2``.
    """

    kind: str = "power_difference"
    r: float = 2.0
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    grad1: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    grad2: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind == "power_difference":
            if not self.r >= 1:
                raise ConfigurationError(f"power interaction needs r >= 1, got {self.r}")
        elif self.kind == "quadratic":
            object.__setattr__(self, "r", 2.0)
        elif self.kind == "custom":
            if self.func is None or self.grad1 is None or self.grad2 is None:
                raise ConfigurationError("custom interaction needs func, grad1 and grad2")
        else:
            raise ConfigurationError(f"unknown interaction kind {self.kind!r}")

    def __call__(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.func(x, y), dtype=float)
        return np.abs(x - y) ** self.r

    def is_symmetric(self) -> bool:
        return self.kind != "custom"


def grad_interaction(spec: InteractionSpec, slot: int, x: ArrayLike, y: ArrayLike) -> np.ndarray:
    """Partial derivative of ``V`` in argument ``slot`` (1 or 2).

    For the power kinds the derivative at ``x == y`` is taken to be 0.
    """
    if slot not in (1, 2):
        raise ValueError("slot must be 1 or 2")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind == "custom":
        g = spec.grad1 if slot == 1 else spec.grad2
        return np.asarray(g(x, y), dtype=float)
    d = x - y
    with np.errstate(invalid="ignore", divide="ignore"):
        g1 = spec.r * np.sign(d) * np.abs(d) ** (spec.r - 1)
    g1 = np.where(d == 0, 0.0, g1)
    return g1 if slot == 1 else -g1


@dataclass(frozen=True)
class BoundaryCondition:
    """Spin values at the outer sites ``0`` and ``N+1``; ``None`` means free."""

    left: float | None = None
    right: float | None = None


@dataclass(frozen=True)
class LatticeModel:
    n_sites: int
    q: float = 2.0
    phase: PhaseSpec = field(default_factory=PhaseSpec)
    interaction: InteractionSpec = field(default_factory=InteractionSpec)
    couplings: Mapping[tuple[int, int], float] = field(default_factory=dict)
    boundary: BoundaryCondition = field(default_factory=BoundaryCondition)
    j_max: float = 0.99
    edge_convention: str = "directed"

    def __post_init__(self) -> None:
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ConfigurationError(f"n_sites must be a positive integer, got {self.n_sites}")
        if not (1 < self.q <= 2):
            raise ConfigurationError(f"q must lie in (1, 2], got {self.q}")
        if not (0 <= self.j_max < 1):
            raise ConfigurationError(f"j_max must lie in [0, 1), got {self.j_max}")
        if self.edge_convention not in EDGE_CONVENTIONS:
            raise ConfigurationError(f"edge_convention must be one of {EDGE_CONVENTIONS}")
        clean: dict[tuple[int, int], float] = {}
        for (i, j), val in dict(self.couplings).items():
            i, j = int(i), int(j)
            if abs(i - j) != 1:
                raise ConfigurationError(f"coupling ({i},{j}) is not nearest-neighbour")
            if not (0 <= i <= self.n_sites + 1 and 0 <= j <= self.n_sites + 1):
                raise ConfigurationError(f"coupling ({i},{j}) lies outside the chain")
            if abs(val) > self.j_max:
                raise ConfigurationError(f"|J_{i}{j}| = {abs(val)} exceeds j_max = {self.j_max}")
            clean[(i, j)] = float(val)
        object.__setattr__(self, "couplings", clean)

    @classmethod
    def uniform(
        cls,
        n_sites: int,
        J: float,
        q: float = 2.0,
        t: float = 4.0,
        r: float = 2.0,
        boundary: BoundaryCondition | None = None,
        **kwargs,
    ) -> "LatticeModel":
        """Chain with the same coupling ``J`` on every directed nearest-neighbour pair."""
        pairs = {}
        for i in range(0, n_sites + 1):
            pairs[(i, i + 1)] = J
            pairs[(i + 1, i)] = J
        return cls(
            n_sites=n_sites,
            q=q,
            phase=PhaseSpec("power", t),
            interaction=InteractionSpec("power_difference", r),
            couplings=pairs,
            boundary=boundary or BoundaryCondition(),
            **kwargs,
        )

    @property
    def p(self) -> float:
        return self.q / (self.q - 1)

    @property
    def sites(self) -> range:
        return range(1, self.n_sites + 1)

    def coupling(self, i: int, j: int) -> float:
        return self.couplings.get((i, j), 0.0)

    def max_coupling(self) -> float:
        return max((abs(v) for v in self.couplings.values()), default=0.0)

    def with_couplings(self, couplings: Mapping[tuple[int, int], float]) -> "LatticeModel":
        return LatticeModel(
            n_sites=self.n_sites, q=self.q, phase=self.phase, interaction=self.interaction,
            couplings=couplings, boundary=self.boundary, j_max=self.j_max,
            edge_convention=self.edge_convention,
        )

    def scaled_couplings(self, factor: float) -> "LatticeModel":
        return self.with_couplings({k: v * factor for k, v in self.couplings.items()})

    def outer_value(self, j: int) -> float | None:
        if j == 0:
            return self.boundary.left
        if j == self.n_sites + 1:
            return self.boundary.right
        raise ValueError(f"site {j} is not an outer boundary site")

    # Energies used by the vectorised measure construction.  An edge fully
    # inside the chain carries both orientations (``directed``) or their
    # average (``per_edge``); an edge to an outer site carries only the term
    # oriented from the chain site.

    def edge_energy(self, i: int, xi: ArrayLike, xj: ArrayLike) -> np.ndarray:
        """Energy of the chain edge ``(i, i+1)`` at spins ``(xi, xj)``."""
        j = i + 1
        e = self.coupling(i, j) * self.interaction(xi, xj) + self.coupling(j, i) * self.interaction(xj, xi)
        return 0.5 * e if self.edge_convention == "per_edge" else e

    def outer_energy(self, i: int, xi: ArrayLike) -> np.ndarray:
        """Energy between chain end ``i`` (1 or N) and its outer neighbour."""
        out = np.zeros_like(np.asarray(xi, dtype=float))
        if i == 1:
            out = out + self._outer_term(1, 0, xi, self.boundary.left)
        if i == self.n_sites:
            out = out + self._outer_term(i, i + 1, xi, self.boundary.right)
        return out

    def _outer_term(self, i: int, j: int, xi: ArrayLike, w: float | None) -> np.ndarray:
        x = np.asarray(xi, dtype=float)
        Jij = self.coupling(i, j)
        if w is None or Jij == 0:
            return np.zeros_like(x)
        return Jij * self.interaction(x, w)

    def check_on_grid(self, nodes: np.ndarray) -> None:
        """Verify ``V >= 0`` and finite energies over a node set."""
        x = np.asarray(nodes, dtype=float)
        v = self.interaction(x[:, None], x[None, :])
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ConfigurationError("interaction must be finite and nonnegative on the grid")
        for w in (self.boundary.left, self.boundary.right):
            if w is not None and not (x[0] - 1e-12 <= w <= x[-1] + 1e-12):
                raise ConfigurationError(f"boundary value {w} lies outside the grid interval")
        if not np.all(np.isfinite(self.phase(x))):
            raise ConfigurationError("phase must be finite on the grid")


def hamiltonian(
    model: LatticeModel,
    sites: Sequence[int],
    x: Sequence[float],
    omega: Mapping[int, float] | None = None,
) -> float:
    """Energy of the spins ``x`` on ``sites`` in the exterior configuration ``omega``.

    The interaction sum runs over ordered pairs ``(i, j)`` with ``i`` in the
    block and ``j`` a neighbour of ``i``, so an edge with both ends in the block
    contributes once per orientation.  With ``edge_convention="per_edge"`` such
    interior edges are halved.  Pairs with zero coupling need no neighbour
    value.  Outer sites default to ``model.boundary``.
    """
    sites = [int(s) for s in sites]
    if len(sites) != len(x):
        raise ValueError("sites and x must have the same length")
    block = dict(zip(sites, (float(v) for v in x)))
    for s in sites:
        if s not in model.sites:
            raise ConfigurationError(f"site {s} lies outside the chain")
    omega = dict(omega or {})

    def value(j: int) -> float | None:
        if j in block:
            return block[j]
        if j in omega:
            return float(omega[j])
        if j in (0, model.n_sites + 1):
            return model.outer_value(j)
        raise ConfigurationIncompleteError(f"no value for neighbour site {j}")

    half = model.edge_convention == "per_edge"
    total = float(sum(model.phase(block[i]) for i in sites))
    for i in sites:
        for j in (i - 1, i + 1):
            Jij = model.coupling(i, j)
            if Jij == 0:
                continue
            zj = value(j)
            if zj is None:  # free outer boundary
                continue
            w = 0.5 if (half and j in block) else 1.0
            total += w * Jij * float(model.interaction(block[i], zj))
    return total


def admissible_example(t: float, r: float, q: float) -> bool:
    """Admissibility of ``phi=|x|^t``, ``V=|x-y|^r`` for exponent ``q``."""
    if not (1 < q <= 2):
        raise ValueError("q must lie in (1, 2]")
    return bool(t >= q / (q - 1) and max(r, (r - 1) * q) < t)
