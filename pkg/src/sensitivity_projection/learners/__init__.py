from .regression import (
    LearnerError,
    RegressionModel,
    clip_probability,
    fit_intercept,
    fit_linear,
    fit_logistic,
    fit_smoother,
    fit_stump_boost,
)
from .ensemble import (
    CandidateSpec,
    EnsembleModel,
    LearnerConfig,
    fit_candidate,
    fit_ensemble,
    predict,
)
