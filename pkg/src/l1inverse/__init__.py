"""l1-penalized estimation for statistical ill-posed inverse problems."""

from .svd_operator import (
    DesignGrid,
    OperatorError,
    RankDeficiencyError,
    SpectralOperator,
    adjoint,
    analyze,
    build_polynomial_operator,
    build_table_operator,
    empirical_inner,
    empirical_norm_sq,
    forward,
    pseudo_inverse,
    synthesize,
)
from .estimators import (
    ConvergenceWarning,
    EstimationResult,
    ThresholdSchedule,
    adapted_l1_estimate,
    hard_threshold_oracle,
    lse_l1_closed_form,
    lse_l1_ista,
    objective_adapted,
    objective_lse,
    soft_threshold,
    threshold_schedule,
)
from .simulation import (
    NoiseModel,
    ObservationSet,
    ReplicationRecord,
    besov_member,
    generate_observations,
    rho_sparse_member,
    run_replications,
    sigma_from_snr,
    target_sine,
)
from .analysis import (
    OracleCheckReport,
    RateFitResult,
    besov_seminorm,
    bn_failure_curve,
    exponent_adapted,
    exponent_lse,
    fit_rate,
    rho_sparsity,
    verify_oracle_inequality,
)

__version__ = "0.1.0"
