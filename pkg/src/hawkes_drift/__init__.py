"""Simulation and inference for multivariate Hawkes processes whose
baseline intensity is modulated by a diffusion covariate."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BaselineFamily,
    ConstantBaseline,
    GaussianBumpBaseline,
    HawkesParams,
    LinearBaselineFamily,
    ModelError,
    QuadraticWellBaseline,
    SpectralRadiusError,
    StabilityReport,
    ThetaBox,
    branching_matrix,
    family_from_descriptor,
    is_stable,
    spectral_radius,
)
from .sde import (  # noqa: F401
    CovariatePath,
    DivergenceError,
    SdeModel,
    baseline_stationary_mean,
    kramers_model,
    model_from_descriptor,
    ou_model,
    simulate_path,
    stationary_draw,
    stationary_draws,
)
from .simulate import (  # noqa: F401
    EventSequence,
    EnvelopeViolation,
    KernelState,
    SimulationError,
    intensity_at,
    replay_intensity,
    thin_simulate,
)
from .likelihood import (  # noqa: F401
    LikelihoodError,
    LikelihoodWorkspace,
    compensator,
    grad_log_likelihood,
    hessian_log_likelihood,
    log_likelihood,
    sde_log_likelihood,
)
from .infer import (  # noqa: F401
    FisherEstimate,
    FitResult,
    OptimizationError,
    OptimizerConfig,
    SingularFisherError,
    fisher_hessian,
    fisher_outer,
    fit_mle,
    standardize,
)
from .stattest import (  # noqa: F401
    DegenerateTestError,
    ResidualSet,
    TestReport,
    corrected_residuals,
    gof_corrected_ks,
    ks_exp1,
    time_change_residuals,
    wald_equal,
    wald_one_coef,
)
from .asymptotics import (  # noqa: F401
    LimitCheck,
    clt_marginal_check,
    lln_check,
    lln_limit,
)
from .streams import substream, substream_key  # noqa: F401
