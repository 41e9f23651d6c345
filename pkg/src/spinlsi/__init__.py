"""Numerical toolkit for log-Sobolev-q inequalities of one-dimensional unbounded spin chains."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    ConfigurationError,
    ConfigurationIncompleteError,
    DivergenceError,
    DomainError,
    NumericalDegeneracyError,
    OracleFailure,
    PartitionError,
    SpinLSIError,
)
from .model import (  # noqa: E402
    BoundaryCondition,
    InteractionSpec,
    LatticeModel,
    PhaseSpec,
    admissible_example,
    hamiltonian,
)
from .grid import Grid, GridFunction, build_grid, integrate, site_gradient, q_gradient_norm  # noqa: E402
from .gibbs import ChainMeasure, Measure, Specification, dlr_residual, local_spec  # noqa: E402
from .functionals import (  # noqa: E402
    AscentSettings,
    InequalityEstimate,
    entropy,
    dirichlet_q,
    ls_constant,
    sg_constant,
)
from .sweep import SweepPartition, apply_P, iterate_sweep, entropy_telescope_residual  # noqa: E402
from .constants import (  # noqa: E402
    ConstantInputs,
    ConstantLedger,
    derive_ledger,
    feasibility_thresholds,
    recursion_oracle,
    tail_bound,
)
