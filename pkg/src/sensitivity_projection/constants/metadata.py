from typing import NamedTuple

####################
# Project metadata #
####################

PROJECT_NAME = 'sensitivity_projection'


class __ColumnRoles(NamedTuple):
    TREATMENT: str = 'treatment'
    OUTCOME: str = 'outcome'
    COVARIATE: str = 'covariate'
    IGNORE: str = 'ignore'

    @property
    def all(self):
        return tuple(self)


COLUMN_ROLES = __ColumnRoles()


class __Targets(NamedTuple):
    """Estimands an influence function can belong to."""
    PSI1: str = 'psi1'
    PSI0: str = 'psi0'
    CONTRAST: str = 'contrast'
    TAU_S: str = 'tau_s'
    SIGMA2_S: str = 'sigma2_s'
    NU2_S: str = 'nu2_s'
    BOUND_LO: str = 'bound_lo'
    BOUND_HI: str = 'bound_hi'


TARGETS = __Targets()


class __Tasks(NamedTuple):
    REGRESSION: str = 'regression'
    PROBABILITY: str = 'probability'


TASKS = __Tasks()


class __LearnerKinds(NamedTuple):
    LINEAR: str = 'linear'
    LOGISTIC: str = 'logistic'
    SMOOTHER: str = 'knn-smoother'
    STUMP_BOOST: str = 'stump-boost'
    INTERCEPT: str = 'intercept'


LEARNER_KINDS = __LearnerKinds()


class __CondMeanPolicies(NamedTuple):
    EXACT: str = 'exact-discrete'
    ENSEMBLE: str = 'ensemble+linear-marginalization'


COND_MEAN_POLICIES = __CondMeanPolicies()


class __FitSamples(NamedTuple):
    OFF_FOLD: str = 'off_fold'
    IN_FOLD: str = 'in_fold'


FIT_SAMPLES = __FitSamples()


class __Variants(NamedTuple):
    NONPARAMETRIC: str = 'nonparametric'
    PROJECTED: str = 'projected'


VARIANTS = __Variants()
