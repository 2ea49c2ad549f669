"""Projection of influence functions onto covariate independence submodels.

For a constraint X_i _||_ X_j | X_S the projection of an influence function
phi onto the constrained tangent space is

    phi - E[phi | X_i, X_j, X_S] + E[phi | X_i, X_S] + E[phi | X_j, X_S] - E[phi | X_S]

Several constraints are handled by sweeping over them in order until a sweep
changes phi by less than a tolerance in mean square.

Conditional means come from one of two policies. ``exact-discrete`` takes
empirical cell means and needs every referenced covariate to be discrete.
``ensemble+linear-marginalization`` fits one flexible model for the joint
conditional mean and reduces it by averaging over the fitting sample, then
regressing the averages on X_S by least squares.

"""
import hashlib
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg

from sensitivity_projection.constants import data_values, metadata
from sensitivity_projection.data import Dataset
from sensitivity_projection.estimation.influence import IfSamples
from sensitivity_projection.graphs import CiConstraint
from sensitivity_projection.learners import (
    CandidateSpec,
    EnsembleModel,
    LearnerConfig,
    fit_ensemble,
    predict,
)
from sensitivity_projection.utilities import SeedTree, as_seed_tree

POLICIES = metadata.COND_MEAN_POLICIES
PROJECTION = data_values.PROJECTION
KEEP = ('i', 'j', 'S')

# additive learners cannot represent an X_i by X_j interaction, so the
# projection terms cancel for them; local smoothers can.
DEFAULT_PROJECTION_LEARNER = LearnerConfig(candidates=(
    CandidateSpec(metadata.LEARNER_KINDS.LINEAR),
    CandidateSpec(metadata.LEARNER_KINDS.SMOOTHER, k=data_values.LEARNERS.SMOOTHER_K[0]),
    CandidateSpec(metadata.LEARNER_KINDS.SMOOTHER, k=data_values.LEARNERS.SMOOTHER_K[1]),
))


class PolicyError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


class ConstraintColumns(NamedTuple):
    i: int
    j: int
    S: Tuple[int, ...] = ()

    @property
    def all(self) -> List[int]:
        return [self.i, self.j, *self.S]


Columns = Union[CiConstraint, ConstraintColumns]


def _resolve(cols: Columns, ds: Dataset) -> ConstraintColumns:
    if isinstance(cols, ConstraintColumns):
        return cols
    i, j, S = cols.indices(ds.covariate_names)
    return ConstraintColumns(i, j, S)


class JointCondMean(NamedTuple):
    """A fitted estimate of E[phi | X_i, X_j, X_S].

    ``features`` and ``values`` are the fitting sample, with feature columns
    ordered (i, j, S). The ensemble policy integrates over ``reference``, a
    subset of the fitting rows, and precomputes the least-squares reader for
    regressions on X_S there.

    """
    policy: str
    cols: ConstraintColumns
    features: np.ndarray
    values: np.ndarray
    model: Optional[EnsembleModel] = None
    reference: Optional[np.ndarray] = None
    reader: Optional[np.ndarray] = None
    reference_j_means: Optional[np.ndarray] = None
    ridge_fallback: bool = False

    @property
    def n_conditioning(self) -> int:
        return len(self.cols.S)


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=16)
    for array in arrays:
        h.update(np.ascontiguousarray(array).tobytes())
        h.update(str(array.shape).encode())
    return h.hexdigest()


class CondMeanEstimator:
    """Estimates and reduces conditional means of influence function values.

    Parameters
    ----------
    policy
        ``exact-discrete`` or ``ensemble+linear-marginalization``.
    learner
        Candidate library for the joint conditional-mean ensemble.
    seed
        Seed tree node for the ensemble's cross-validation splits and the
        reference subsample.
    max_levels
        Largest number of distinct values a covariate may take under the
        exact policy.
    batch_size
        Upper bound on model evaluations per batch while marginalising.
    reference_size
        If set, marginalisation averages over a seeded subsample of this many
        fitting rows instead of all of them.

    """

    CACHE_SIZE = 8

    def __init__(self,
                 policy: str = POLICIES.EXACT,
                 learner: Optional[LearnerConfig] = None,
                 seed: Union[int, SeedTree] = 0,
                 max_levels: int = PROJECTION.MAX_DISCRETE_LEVELS,
                 batch_size: int = PROJECTION.BATCH_SIZE,
                 reference_size: Optional[int] = None):
        if policy not in POLICIES:
            raise PolicyError(f'Unknown conditional-mean policy {policy}. Expected one of {list(POLICIES)}.')
        if reference_size is not None and reference_size < 2:
            raise ValueError(f'reference_size must be at least 2, got {reference_size}.')
        self.policy = policy
        self.learner = learner or DEFAULT_PROJECTION_LEARNER
        self.seed = as_seed_tree(seed)
        self.max_levels = max_levels
        self.batch_size = batch_size
        self.reference_size = reference_size
        self._cache: Dict[Tuple, JointCondMean] = {}

    def __repr__(self):
        return f'CondMeanEstimator(policy={self.policy})'

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_cache'] = {}
        return state

    def reseeded(self, seed: Union[int, SeedTree]) -> 'CondMeanEstimator':
        return CondMeanEstimator(self.policy, self.learner, seed, self.max_levels,
                                 self.batch_size, self.reference_size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'policy': self.policy,
            'learner': self.learner.to_dict(),
            'max_levels': self.max_levels,
            'batch_size': self.batch_size,
            'reference_size': self.reference_size,
        }

    ###########
    # Fitting #
    ###########

    def fit(self, values: np.ndarray, ds: Dataset, cols: Columns) -> JointCondMean:
        cols = _resolve(cols, ds)
        features = ds.covariates[:, cols.all]
        values = np.asarray(values, dtype=float)
        if values.shape[0] != ds.n:
            raise ValueError(f'Got {values.shape[0]} influence function values for {ds.n} units.')

        key = (self.policy, cols, _digest(values, features))
        if key in self._cache:
            return self._cache[key]

        if self.policy == POLICIES.EXACT:
            self._check_discrete(features, cols, ds)
            joint = JointCondMean(self.policy, cols, features, values)
        else:
            joint = self._fit_ensemble(features, values, cols)

        if len(self._cache) >= self.CACHE_SIZE:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = joint
        return joint

    def _check_discrete(self, features: np.ndarray, cols: ConstraintColumns, ds: Dataset) -> None:
        for position, column in enumerate(cols.all):
            levels = np.unique(features[:, position]).size
            if levels > self.max_levels:
                raise PolicyError(f'Covariate {ds.covariate_names[column]} takes {levels} distinct values; '
                                  f'the {POLICIES.EXACT} policy allows at most {self.max_levels}.')

    def _fit_ensemble(self, features: np.ndarray, values: np.ndarray,
                      cols: ConstraintColumns) -> JointCondMean:
        labels = ('joint', cols.i, cols.j, *cols.S)
        model = fit_ensemble(features, values, metadata.TASKS.REGRESSION,
                             seed=self.seed.child(*labels), config=self.learner)
        logger.debug(f'Joint conditional mean for columns {cols.all}: selected {model.selected}.')

        reference = features
        if self.reference_size is not None and features.shape[0] > self.reference_size:
            rng = self.seed.child('reference', *labels[1:]).generator()
            rows = np.sort(rng.choice(features.shape[0], self.reference_size, replace=False))
            reference = features[rows]

        reader, fallback = None, False
        if cols.S:
            reader, fallback = _least_squares_reader(reference[:, 2:])
        joint = JointCondMean(self.policy, cols, features, values, model=model,
                              reference=reference, reader=reader, ridge_fallback=fallback)
        # E[phi | X_j, X_S] at the reference rows, reused for every E[phi | X_S] lookup
        return joint._replace(reference_j_means=self._average_out(joint, reference, keep=1))

    ############
    # Reducing #
    ############

    def joint_means(self, joint: JointCondMean, ds: Dataset) -> np.ndarray:
        """E[phi | X_i, X_j, X_S] at the units of ``ds``."""
        query = ds.covariates[:, joint.cols.all]
        if joint.policy == POLICIES.EXACT:
            out = self._cell_means(joint, [0, 1, *range(2, 2 + joint.n_conditioning)], query)
        else:
            out = predict(joint.model, query)
        return self._check_finite(out, 'joint')

    def reduced_means(self, joint: JointCondMean, ds: Dataset, keep: str) -> np.ndarray:
        """E[phi | X_i, X_S], E[phi | X_j, X_S] or E[phi | X_S] at the units of ``ds``."""
        if keep not in KEEP:
            raise ValueError(f'keep must be one of {KEEP}, got {keep}.')
        query = ds.covariates[:, joint.cols.all]
        conditioning = list(range(2, 2 + joint.n_conditioning))
        if joint.policy == POLICIES.EXACT:
            kept = {'i': [0], 'j': [1], 'S': []}[keep] + conditioning
            out = self._cell_means(joint, kept, query)
        elif keep == 'S':
            out = self._read_on_conditioning(joint, joint.reference_j_means, query)
        else:
            out = self._average_out(joint, query, keep=0 if keep == 'i' else 1)
        return self._check_finite(out, keep)

    def _cell_means(self, joint: JointCondMean, kept: List[int], query: np.ndarray) -> np.ndarray:
        if not kept:
            return np.full(query.shape[0], joint.values.mean())
        names = [f'c{position}' for position in kept]
        fitting = pd.DataFrame(joint.features[:, kept], columns=names)
        fitting['value'] = joint.values
        cells = fitting.groupby(names, sort=False)['value'].mean().rename('cell_mean').reset_index()
        lookup = pd.DataFrame(query[:, kept], columns=names).merge(cells, on=names, how='left')
        out = lookup['cell_mean'].to_numpy(dtype=float)
        unseen = np.isnan(out)
        if unseen.any():
            logger.warning(f'{unseen.sum()} units fall in cells absent from the fitting sample; '
                           f'using the overall mean for them.')
            out[unseen] = joint.values.mean()
        return out

    def _average_out(self, joint: JointCondMean, query: np.ndarray, keep: int) -> np.ndarray:
        """Keeps column ``keep`` of each query row and averages the joint model over the
        reference rows for the other of (i, j), then reads the fit on X_S."""
        reference = joint.reference
        m = reference.shape[0]
        chunk = max(1, self.batch_size // m)
        out = np.empty(query.shape[0])
        for start in range(0, query.shape[0], chunk):
            block = query[start:start + chunk]
            grid = np.tile(reference, (block.shape[0], 1))
            grid[:, keep] = np.repeat(block[:, keep], m)
            fitted = predict(joint.model, grid).reshape(block.shape[0], m)
            if joint.n_conditioning:
                coefficients = fitted @ joint.reader.T
                out[start:start + chunk] = np.sum(_design(block[:, 2:]) * coefficients, axis=1)
            else:
                out[start:start + chunk] = fitted.mean(axis=1)
        return out

    def _read_on_conditioning(self, joint: JointCondMean, reference_values: np.ndarray,
                              query: np.ndarray) -> np.ndarray:
        if not joint.n_conditioning:
            return np.full(query.shape[0], reference_values.mean())
        coefficients = joint.reader @ reference_values
        return _design(query[:, 2:]) @ coefficients

    @staticmethod
    def _check_finite(values: np.ndarray, which: str) -> np.ndarray:
        if not np.all(np.isfinite(values)):
            raise ProjectionError(f'Non-finite conditional means in the {which} reduction.')
        return values


def _design(conditioning: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(conditioning.shape[0]), conditioning])


def _least_squares_reader(conditioning: np.ndarray) -> Tuple[np.ndarray, bool]:
    """The matrix taking responses at the reference rows to least-squares
    coefficients on [1, X_S]."""
    design = _design(conditioning)
    gram = design.T @ design
    if np.linalg.matrix_rank(design) < design.shape[1]:
        logger.warning(f'Conditioning design of rank {np.linalg.matrix_rank(design)} < {design.shape[1]}; '
                       f'using a ridge of {PROJECTION.SINGULAR_RIDGE}.')
        gram = gram + PROJECTION.SINGULAR_RIDGE * np.eye(design.shape[1])
        return linalg.solve(gram, design.T, assume_a='pos'), True
    return linalg.solve(gram, design.T, assume_a='pos'), False


##############
# Operations #
##############

def fit_joint_cond_mean(phi: IfSamples, ds: Dataset, cols: Columns,
                        est: CondMeanEstimator) -> JointCondMean:
    return est.fit(phi.values, ds, cols)


def marginalize_cond_mean(joint: JointCondMean, ds: Dataset, keep: str,
                          est: CondMeanEstimator) -> np.ndarray:
    """Reduces a joint conditional mean to the conditioning set named by ``keep``.

    ``keep`` is ``'i'`` for E[phi | X_i, X_S], ``'j'`` for E[phi | X_j, X_S]
    and ``'S'`` for E[phi | X_S]. Values are returned at the units of ``ds``;
    averages are taken over the sample the joint model was fit on.

    """
    return est.reduced_means(joint, ds, keep)


def _projection_correction(joint: JointCondMean, ds: Dataset, est: CondMeanEstimator) -> np.ndarray:
    return (est.joint_means(joint, ds)
            - est.reduced_means(joint, ds, 'i')
            - est.reduced_means(joint, ds, 'j')
            + est.reduced_means(joint, ds, 'S'))


def project_single(phi: IfSamples, ds: Dataset, c: Columns, est: CondMeanEstimator) -> IfSamples:
    """Projects ``phi`` onto the submodel of one independence constraint."""
    joint = est.fit(phi.values, ds, c)
    return phi.with_values(phi.values - _projection_correction(joint, ds, est))


class ProjectionResult(NamedTuple):
    projected: IfSamples
    sweeps: int
    delta_history: Tuple[float, ...]
    var_before: float
    var_after: float
    converged: bool
    held_out: Optional[IfSamples] = None
    mean_drift: float = 0.0
    variance_gain: Optional[Dict[str, Any]] = None

    @property
    def evaluated(self) -> IfSamples:
        """The held-out projection when there is one, else the in-sample one."""
        return self.held_out if self.held_out is not None else self.projected

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sweeps': self.sweeps,
            'delta_history': list(self.delta_history),
            'var_before': self.var_before,
            'var_after': self.var_after,
            'converged': self.converged,
            'mean_drift': self.mean_drift,
            'variance_gain': self.variance_gain,
        }


def _variance(values: np.ndarray) -> float:
    return float(np.var(values, ddof=1)) if values.shape[0] > 1 else 0.0


def alternating_project(phi: IfSamples,
                        ds: Dataset,
                        constraints: Sequence[Columns],
                        est: CondMeanEstimator,
                        eps: float = PROJECTION.EPS,
                        max_sweeps: int = PROJECTION.MAX_SWEEPS,
                        held_out: Optional[Tuple[IfSamples, Dataset]] = None) -> ProjectionResult:
    """Sweeps single-constraint projections over ``constraints`` until they settle.

    A sweep applies every constraint once, in order. Its change is the mean
    squared difference of the fitting-sample values across the sweep, and
    iteration stops once that is at most ``eps`` or after ``max_sweeps``
    sweeps. A single constraint needs exactly one sweep.

    Parameters
    ----------
    phi
        Influence function values on ``ds``, the fitting sample.
    ds
        The units conditional means are estimated on.
    constraints
        Constraints in sweep order.
    est
        Conditional-mean estimator.
    eps
        Tolerance on the mean squared change of a sweep.
    max_sweeps
        Sweep limit. Hitting it returns the last iterate, unconverged.
    held_out
        Optional influence function values on other units. Every step fit on
        ``ds`` is applied to them too.

    Returns
    -------
        The projected values with convergence diagnostics.

    """
    if not constraints:
        raise ValueError('Alternating projection needs at least one constraint.')
    if eps <= 0:
        raise ValueError(f'eps must be positive, got {eps}.')
    if max_sweeps < 1:
        raise ValueError(f'max_sweeps must be at least 1, got {max_sweeps}.')
    requested = list(constraints)
    constraints = [_resolve(c, ds) for c in requested]

    values = np.asarray(phi.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ProjectionError('Influence function values must be finite before projection.')
    eval_values = None
    if held_out is not None:
        eval_values = np.asarray(held_out[0].values, dtype=float)
        eval_ds = held_out[1]

    history = []
    converged = False
    for sweep in range(1, max_sweeps + 1):
        start = values
        for c in constraints:
            joint = est.fit(values, ds, c)
            if eval_values is not None:
                eval_values = eval_values - _projection_correction(joint, eval_ds, est)
            values = values - _projection_correction(joint, ds, est)
        delta = float(np.mean((values - start) ** 2))
        if not np.isfinite(delta):
            raise ProjectionError(f'Sweep {sweep} produced a non-finite change.')
        history.append(delta)
        logger.debug(f'Sweep {sweep}: delta = {delta:.3e}.')
        if len(constraints) == 1 or delta <= eps:
            converged = True
            break

    if not converged:
        logger.warning(f'Alternating projection stopped after {max_sweeps} sweeps with delta '
                       f'{history[-1]:.3e} > {eps}.')
    projected = phi.with_values(values)
    gain = None
    if len(constraints) == 1:
        gain = variance_gain(phi, projected, ds, requested[0], est).to_dict()
    return ProjectionResult(
        projected=projected,
        sweeps=len(history),
        delta_history=tuple(history),
        var_before=_variance(phi.values),
        var_after=_variance(values),
        converged=converged,
        held_out=held_out[0].with_values(eval_values) if held_out is not None else None,
        mean_drift=float(np.mean(values) - np.mean(phi.values)),
        variance_gain=gain,
    )


class AlternatingProjector:
    """Projection settings shared by every fold and target of a run.

    With ``fit_sample='off_fold'`` conditional means are fit on influence
    function values over a fold's training units and applied to its held-out
    units. With ``'in_fold'`` they are fit on the held-out units themselves.

    """

    def __init__(self,
                 estimator: Optional[CondMeanEstimator] = None,
                 eps: float = PROJECTION.EPS,
                 max_sweeps: int = PROJECTION.MAX_SWEEPS,
                 fit_sample: str = metadata.FIT_SAMPLES.OFF_FOLD):
        # the estimator caches fitted models, so each projector owns its own
        self.estimator = estimator if estimator is not None else CondMeanEstimator()
        self.eps = eps
        self.max_sweeps = max_sweeps
        self.fit_sample = fit_sample

    @property
    def off_fold(self) -> bool:
        return self.fit_sample == metadata.FIT_SAMPLES.OFF_FOLD

    def project(self, phi: IfSamples, ds: Dataset, constraints: Sequence[Columns],
                seed: Optional[Union[int, SeedTree]] = None,
                fit: Optional[Tuple[IfSamples, Dataset]] = None) -> ProjectionResult:
        est = self.estimator if seed is None else self.estimator.reseeded(seed)
        if fit is None:
            return alternating_project(phi, ds, constraints, est, self.eps, self.max_sweeps)
        return alternating_project(fit[0], fit[1], constraints, est, self.eps, self.max_sweeps,
                                   held_out=(phi, ds))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'estimator': self.estimator.to_dict(),
            'eps': self.eps,
            'max_sweeps': self.max_sweeps,
            'fit_sample': self.fit_sample,
        }


###############
# Diagnostics #
###############

class VarianceDecomposition(NamedTuple):
    var_joint: float
    var_i: float
    var_j: float

    @property
    def value(self) -> float:
        """The variance reduction a marginal independence constraint buys."""
        return self.var_joint - self.var_i - self.var_j


class VarianceGain(NamedTuple):
    constraint: str
    var_before: float
    var_after: float
    decomposition: Optional[VarianceDecomposition] = None

    @property
    def difference(self) -> float:
        return self.var_before - self.var_after

    def to_dict(self) -> Dict[str, Any]:
        out = {
            'constraint': self.constraint,
            'var_before': self.var_before,
            'var_after': self.var_after,
            'difference': self.difference,
        }
        if self.decomposition is not None:
            out['decomposition'] = {**self.decomposition._asdict(), 'value': self.decomposition.value}
        return out


def variance_gain(before: IfSamples, after: IfSamples, ds: Dataset, c: Columns,
                  est: CondMeanEstimator) -> VarianceGain:
    """Variance change from projecting onto one constraint, decomposed when S is empty."""
    cols = _resolve(c, ds)
    decomposition = None
    if not cols.S:
        joint = est.fit(before.values, ds, cols)
        decomposition = VarianceDecomposition(
            var_joint=_variance(est.joint_means(joint, ds)),
            var_i=_variance(est.reduced_means(joint, ds, 'i')),
            var_j=_variance(est.reduced_means(joint, ds, 'j')),
        )
    label = str(c) if isinstance(c, CiConstraint) else str(tuple(cols))
    return VarianceGain(label, _variance(before.values), _variance(after.values), decomposition)
