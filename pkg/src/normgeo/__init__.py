"""normgeo: norm-regularized estimation and error-set geometry toolkit."""

from .util import LineFit, canonical_json, line_fit, substream, write_json
from .errors import (
    BracketError,
    DegenerateSetError,
    DimensionTooLargeError,
    InputError,
    NearSingularError,
    NormgeoError,
    SolverError,
    UnsupportedNormError,
)
from .norms import (
    CompatibilityEstimate,
    GroupL2Norm,
    GroupPartition,
    L1Norm,
    L2Norm,
    LinfNorm,
    SupportSpec,
    compat_bound,
    compat_empirical,
    make_norm,
)
from .randomdesign import (
    CovarianceSpec,
    DesignSpec,
    NoiseSpec,
    restricted_eigs,
    sample_design,
    sample_noise,
    sigma_sqrt,
)
from .geometry import (
    CapSample,
    ErrorSetSpec,
    SandwichReport,
    WidthEstimate,
    membership,
    sample_cap,
    sandwich_check,
    width_ball_via_cone,
    width_cap,
    width_cone_analytic,
    width_norm_ball,
)
from .losses import (
    FitResult,
    GlmCurvature,
    SolverConfig,
    glm_curvature,
    loss_gradient,
    loss_value,
    make_loss,
    solve_regularized,
)
from .conditions import (
    ConditionReport,
    EnvelopeFit,
    aniso_re_check,
    phase_transition_n0,
    re_statistic,
    rip_envelope,
    rsc_glm_statistic,
)
from .regparam import LambdaReport, grad_dualnorm_trial, lambda_report, score_dual_norm
from .harness import (
    ExperimentConfig,
    ScalingFit,
    SweepResult,
    TrialRecord,
    make_theta_star,
    run_recovery_trial,
    scaling_sweep,
    theoretical_bound,
)

__version__ = "0.1.0"
