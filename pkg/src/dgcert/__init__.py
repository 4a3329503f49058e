"""dgcert: hp dG-in-time / P1-in-space parabolic solver with certified bounds."""

from .bounds import (
    CertifiedBound,
    assemble_h1xdual_bound,
    assemble_l2x_bound,
    assemble_linfh_bound,
    choose_lambda,
    rho_l2x_bound,
)
from .estimators import (
    EllipticEstimatorKind,
    IndicatorBreakdown,
    compute_breakdown,
    dual_norm_bound,
    elliptic_estimate,
    mesh_change_indicator,
    oscillation_indicator,
    space_indicator,
    space_indicator_sq_integral,
    theta_indicator,
)
from .problem import (
    EllipticConstants,
    ManufacturedSolution,
    Problem,
    WeakSource,
    constants_for,
    make_problem,
    manufactured_source,
)
from .reconstruct import (
    LiftingKernel,
    TimeReconstruction,
    elliptic_reconstruct_reference,
    lift,
    lifting_kernel,
    reconstruct_slab,
    reconstruction_gap_norms,
    time_recon_constant,
    time_reconstruct,
)
from .spatial import (
    Coefficient,
    FeFunction,
    FeSpace,
    SpaceHierarchy,
    SpatialOperators,
    refine,
    space_from_points,
    split_elements,
    subspace,
    superspace,
    uniform_space,
)
from .timedg import (
    DgSolution,
    SlabBasis,
    SlabPoly,
    TimePartition,
    solve_all,
    solve_slab,
)
from .verify import (
    ErrorReport,
    certify,
    dual_norm_oracle,
    fitted_rate,
    lemma_identity_gap,
    pointwise_form_check,
    theta_oracle_sq,
    true_error,
)

__version__ = "0.1.0"
