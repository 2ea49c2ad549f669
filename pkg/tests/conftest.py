import itertools

import numpy as np
import pytest
from scipy.special import expit

from sensitivity_projection.constants import metadata
from sensitivity_projection.data import build_dataset
from sensitivity_projection.estimation import NuisanceConfig
from sensitivity_projection.learners import CandidateSpec, LearnerConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def fast_learner():
    return LearnerConfig(candidates=(CandidateSpec(metadata.LEARNER_KINDS.LINEAR),), cv_folds=2)


@pytest.fixture
def fast_nuisances(fast_learner):
    return NuisanceConfig(learner=fast_learner)


def factorized_design(copies: int = 1):
    """Binary x1..x4 whose empirical law factorises exactly as x1, x2 -> x4 and x2 -> x3.

    Every cell count is a product of quarter-probabilities times 64, so the
    independencies x1 _||_ x2, x1 _||_ x3 | x2 and x3 _||_ x4 | x1, x2 hold in
    the sample itself, not just in the population.

    """
    p3 = {0: 1, 1: 3}  # P(x3 = 1 | x2) in quarters
    p4 = {(0, 0): 1, (0, 1): 2, (1, 0): 2, (1, 1): 3}  # P(x4 = 1 | x1, x2) in quarters
    rows = []
    for x1, x2, x3, x4 in itertools.product((0, 1), repeat=4):
        a = p3[x2] if x3 else 4 - p3[x2]
        b = p4[(x1, x2)] if x4 else 4 - p4[(x1, x2)]
        rows.extend([(x1, x2, x3, x4)] * (a * b * copies))
    covariates = np.array(rows, dtype=float)
    n = covariates.shape[0]
    treatment = np.arange(n) % 2
    outcome = np.zeros(n)
    return build_dataset(covariates, treatment, outcome, covariate_names=('x1', 'x2', 'x3', 'x4'))


@pytest.fixture
def factorized():
    return factorized_design(copies=2)


@pytest.fixture
def discrete_observational():
    """Discrete covariates, confounded binary treatment and binary outcome."""
    rng = np.random.default_rng(11)
    n = 400
    x1 = rng.integers(0, 2, n)
    x2 = rng.integers(0, 2, n)
    x3 = rng.integers(0, 3, n)
    t = rng.binomial(1, expit(-0.3 + 0.6 * x1 - 0.4 * x2 + 0.2 * x3))
    y = rng.binomial(1, expit(-0.5 + 0.8 * t + 0.5 * x1 + 0.3 * x3 - 0.4 * x1 * x2))
    return build_dataset(np.column_stack([x1, x2, x3]), t, y, covariate_names=('x1', 'x2', 'x3'))


@pytest.fixture
def discrete_continuous_outcome():
    rng = np.random.default_rng(12)
    n = 400
    x1 = rng.integers(0, 2, n)
    x2 = rng.integers(0, 2, n)
    x3 = rng.integers(0, 3, n)
    t = rng.binomial(1, expit(-0.2 + 0.5 * x1 - 0.5 * x2 + 0.2 * x3))
    y = 0.7 * t + x1 - 0.5 * x2 * x3 + rng.normal(0.0, 0.5, n)
    return build_dataset(np.column_stack([x1, x2, x3]), t, y, covariate_names=('x1', 'x2', 'x3'))
