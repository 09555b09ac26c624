"""Sketching-based estimation of preconditioner stability ``||I - M^{-1}A||_F``
and selection among candidate preconditioners."""

from .errors import (
    BreakdownError,
    ConfigError,
    DimensionMismatchError,
    MatrixMarketError,
    NotPositiveDefiniteError,
)
from .kernel import (
    Dataset,
    GeometricPreconditioner,
    KernelSystem,
    geometric_block_precond,
    geometric_lowrank_precond,
    gram_matrix,
    kernel_experiment,
    kmeans_cluster,
    lowrank_approx,
    woodbury_apply,
)
from .krylov import SolveResult, StoppingRule, pcg_solve
from .preconditioners import (
    BlockPinchPreconditioner,
    BlockSpec,
    DiagonalPreconditioner,
    IdentityPreconditioner,
    Preconditioner,
    apply,
    block_pinch,
    build_candidates,
    rcm_block_pinch,
    rcm_ordering,
)
from .selection import (
    SelectionReport,
    adaptive_select,
    select_preconditioner,
    selection_guarantee_check,
)
from .sparse import (
    CSRMatrix,
    gaussian_matrix,
    read_matrix_market,
    spmv,
    substream,
    write_matrix_market,
)
from .stability import (
    StabilityEstimate,
    exact_stability,
    sample_size_select,
    sample_size_stab,
    stab_estimate,
)

__version__ = "0.1.0"
