"""Data generating processes for the simulation experiments.

All four processes share the treatment model

    logit P(T = 1 | X, U) = lin(X) + latent(U)

and a binary outcome with logit P(Y = 1 | X, U, T) = T * (lin(X) + latent(U)),
except ``ovb`` whose outcome is continuous:
Y = T * (lin(X) + latent(U)) + N(0, 0.5^2).

"""
from typing import Callable, Dict, NamedTuple, Tuple, Union

import numpy as np
from scipy.special import expit

from sensitivity_projection.constants import data_values, scenarios
from sensitivity_projection.data import Dataset, build_dataset
from sensitivity_projection.utilities import SeedTree, as_seed_tree

COVARIATE_NAMES = ('x1', 'x2', 'x3', 'x4')


class DgpSpec(NamedTuple):
    kind: str
    n: int
    seed: SeedTree

    @classmethod
    def make(cls, kind: str, n: int, seed: Union[int, SeedTree] = 0, replication: int = 0) -> 'DgpSpec':
        """Settings for replication ``replication``, drawing from the ``("dgp", r)`` seed path."""
        scenarios.DGP_SCENARIOS.get(kind)
        return cls(kind, n, as_seed_tree(seed, ('dgp', replication)))


class TruthRecord(NamedTuple):
    """Simulation internals that estimators never see."""
    latent: np.ndarray
    linear_predictor: np.ndarray
    propensity: np.ndarray


Covariates = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def _example1_covariates(rng: np.random.Generator, n: int) -> Covariates:
    x1 = rng.standard_normal(n)
    x2 = rng.binomial(1, 0.5, n).astype(float)
    x3 = -0.5 + x2 + rng.standard_normal(n)
    x4 = 1.5 * x1 * x2 + rng.standard_normal(n)
    u = rng.standard_normal(n)
    return x1, x2, x3, x4, u


def _example2_covariates(rng: np.random.Generator, n: int) -> Covariates:
    u = rng.standard_normal(n)
    x1 = rng.standard_normal(n)
    x2 = -0.5 + x1 + 1.5 * u + rng.standard_normal(n)
    x3 = rng.standard_normal(n)
    x4 = -0.5 + x3 + 2.0 * u + rng.standard_normal(n)
    return x1, x2, x3, x4, u


def _misspec_covariates(rng: np.random.Generator, n: int) -> Covariates:
    x1 = rng.standard_normal(n)
    x2 = (x1 + rng.normal(0.0, 0.5, n) >= 0).astype(float)
    x3 = -0.5 + 2.0 * x1 + x2 + rng.standard_normal(n)
    x4 = 1.5 * x1 * x2 + rng.standard_normal(n)
    u = rng.standard_normal(n)
    return x1, x2, x3, x4, u


def _example1_predictor(x1, x2, x3, x4, u):
    return x1 * x2 + x1 * x3 + x2 * x3 * x4 + 0.2 * u


def _example2_predictor(x1, x2, x3, x4, u):
    # U confounds only through x2 and x4
    return x1 * x3 + x1 * x2 * x3 + x1 * x3 * x4


_PROCESSES: Dict[str, Tuple[Callable, Callable]] = {
    scenarios.DGP_SCENARIOS.EXAMPLE1.name: (_example1_covariates, _example1_predictor),
    scenarios.DGP_SCENARIOS.EXAMPLE2.name: (_example2_covariates, _example2_predictor),
    scenarios.DGP_SCENARIOS.MISSPEC.name: (_misspec_covariates, _example1_predictor),
    scenarios.DGP_SCENARIOS.OVB.name: (_example1_covariates, _example1_predictor),
}


def generate(spec: DgpSpec) -> Tuple[Dataset, TruthRecord]:
    """Draws one dataset from the process ``spec.kind``.

    The latent U, the linear predictor and the true propensity are returned
    separately and never enter the dataset.

    """
    if spec.n < data_values.MONTE_CARLO.MIN_N:
        raise ValueError(f'Simulated datasets need at least {data_values.MONTE_CARLO.MIN_N} units, '
                         f'got {spec.n}.')
    scenario = scenarios.DGP_SCENARIOS.get(spec.kind)
    draw_covariates, linear_predictor = _PROCESSES[spec.kind]

    rng = spec.seed.generator()
    x1, x2, x3, x4, u = draw_covariates(rng, spec.n)
    lin = linear_predictor(x1, x2, x3, x4, u)
    propensity = expit(lin)
    t = rng.binomial(1, propensity)
    if scenario.binary_outcome:
        y = rng.binomial(1, expit(t * lin)).astype(float)
    else:
        y = t * lin + rng.normal(0.0, 0.5, spec.n)

    ds = build_dataset(np.column_stack([x1, x2, x3, x4]), t, y, covariate_names=COVARIATE_NAMES)
    return ds, TruthRecord(latent=u, linear_predictor=lin, propensity=propensity)
