"""reduktor: doubly stochastic evolution under Poisson-timed reductions.

Builds evolution matrix families from system-bath generators, solves the
Volterra integral equation for the reduction-averaged evolution, verifies
the solvers against a direct jump-process Monte Carlo oracle, and exhibits
the long-time collapse onto blockwise-uniform projectors.
"""

__version__ = "0.1.0"

from .asymptotics import (
    ConvergenceReport,
    CyclicReport,
    DeltaEstimate,
    convergence_report,
    cyclic_example,
    cyclic_order,
    cyclic_permutation,
    delta_statistic,
    predict_limit,
    rescaling_check,
)
from .channels import (
    BathModel,
    GenericityReport,
    KrausFamily,
    basis_genericity,
    genericity_check,
    kraus_at,
    m_of_t,
    second_order_matrix,
)
from .dstoch import (
    BlockPartition,
    DStochMatrix,
    compression,
    compression_many,
    decomposability_witness,
    is_dstoch,
    perm_matrix,
    single_block_partition,
    support_blocks,
    theta,
    theta_of,
    validate_dstoch,
    zero_sum_basis,
)
from .jump_mc import (
    McEstimate,
    PoissonRealization,
    evolve_realization,
    monte_carlo_average,
    sample_realization,
)
from .scalar import (
    ConstantInput,
    CosineInput,
    LiftedPath,
    PiecewiseInput,
    ScalarInput,
    ScalarTrajectory,
    TabulatedInput,
    TrigSolution,
    lift_scalar,
    piecewise_delay_solve,
    scalar_march,
    trig_ode_solve,
)
from .volterra import (
    ConstantPath,
    Kernel,
    SeriesResult,
    SolverConfig,
    TimeGrid,
    Trajectory,
    derivative_consistency,
    kernel_normalization_residual,
    march_solve,
    march_solve_general,
    neumann_series,
    neumann_series_trajectory,
    poisson_kernel,
    trajectory_to_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
