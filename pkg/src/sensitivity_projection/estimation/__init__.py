from .influence import IfSamples, contrast, median_aggregate, one_step_estimate
from .projection import (
    AlternatingProjector,
    CondMeanEstimator,
    ConstraintColumns,
    JointCondMean,
    PolicyError,
    ProjectionError,
    ProjectionResult,
    VarianceGain,
    alternating_project,
    fit_joint_cond_mean,
    marginalize_cond_mean,
    project_single,
    variance_gain,
)
from .sensitivity import (
    AipwEstimate,
    NuisanceConfig,
    NuisanceFit,
    SensitivityCurve,
    aipw_samples,
    cross_fit_aipw,
    cross_fit_curve,
    eif_samples,
    fit_nuisances,
    fold_estimate,
    plugin_psi,
    tilted_moments,
    tilted_ratio,
)
from .ovb import (
    OvbBound,
    OvbShortFit,
    bounds_frame,
    ovb_bounds,
    ovb_curve,
    ovb_projected,
    project_short_fit,
    riesz_ate,
    short_fit,
)
