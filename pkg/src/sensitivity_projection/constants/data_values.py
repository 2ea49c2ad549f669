from typing import NamedTuple, Tuple

#####################
# Estimation values #
#####################

# propensity clip bounds
PROPENSITY_TRUNCATION: Tuple[float, float] = (0.01, 0.99)

# predicted probabilities are kept away from 0 and 1 by this much
PROBABILITY_CLIP: float = 1e-6

# the exponential tilt overflows double precision in intermediate products past this
MAX_ABS_GAMMA: float = 20.0
# m0 is computed in log space past this
LOG_SPACE_GAMMA: float = 10.0

Z_95: float = 1.96

DEFAULT_FOLDS: int = 5
DEFAULT_GAMMAS: Tuple[float, ...] = (-4.0, -2.0, 0.0, 2.0, 4.0)


######################
# Learner parameters #
######################

class __Learners(NamedTuple):
    RIDGE: float = 1e-6
    CV_FOLDS: int = 5
    IRLS_MAX_ITER: int = 100
    IRLS_TOL: float = 1e-8
    SMOOTHER_K: Tuple[int, ...] = (10, 50)
    BOOST_ROUNDS: int = 200
    BOOST_LEARNING_RATE: float = 0.1
    BOOST_MAX_BINS: int = 32
    # newton leaf regularisation for the logistic boosting loss
    BOOST_HESSIAN_FLOOR: float = 1e-6
    SMOOTHER_BATCH: int = 512


LEARNERS = __Learners()


#########################
# Projection parameters #
#########################

class __Projection(NamedTuple):
    EPS: float = 4e-4
    MAX_SWEEPS: int = 25
    MAX_DISCRETE_LEVELS: int = 16
    # query rows evaluated per batch in the marginalisation step
    BATCH_SIZE: int = 65536
    SINGULAR_RIDGE: float = 1e-8


PROJECTION = __Projection()


#########################
# Omitted variable bias #
#########################

class __Ovb(NamedTuple):
    RHO: float = 1.0
    ETA2_GRID: Tuple[float, ...] = (0.01, 0.05, 0.1, 0.2, 0.25)
    # 1 / (pi (1 - pi)) >= 4 for a binary treatment
    NU2_FLOOR: float = 4.0
    # estimates below NU2_FLOOR * (1 - NU2_TOLERANCE) are rejected, those just under the floor warned about
    NU2_TOLERANCE: float = 0.05


OVB = __Ovb()


###############
# Monte Carlo #
###############

class __MonteCarlo(NamedTuple):
    REPS: int = 100
    MIN_N: int = 10
    MAX_FAILURE_FRACTION: float = 0.1


MONTE_CARLO = __MonteCarlo()
