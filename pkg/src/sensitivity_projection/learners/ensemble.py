"""Cross-validated ensembles over a fixed candidate library.

The default is discrete selection: all weight on the candidate with the
smallest cross-validated risk. Convex stacking solves a simplex-constrained
least-squares problem on the held-out predictions instead.

"""
from typing import Any, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg, optimize

from sensitivity_projection.constants import data_values, metadata
from sensitivity_projection.learners.regression import (
    LearnerError,
    RegressionModel,
    clip_probability,
    fit_intercept,
    fit_linear,
    fit_logistic,
    fit_smoother,
    fit_stump_boost,
    predict_model,
)
from sensitivity_projection.utilities import SeedTree, as_seed_tree

KINDS = metadata.LEARNER_KINDS
TASKS = metadata.TASKS
LEARNERS = data_values.LEARNERS


class CandidateSpec(NamedTuple):
    kind: str
    k: Optional[int] = None
    rounds: Optional[int] = None
    learning_rate: Optional[float] = None

    @property
    def name(self) -> str:
        if self.kind == KINDS.SMOOTHER:
            return f'{self.kind}(k={self.k})'
        if self.kind == KINDS.STUMP_BOOST:
            return f'{self.kind}(rounds={self.rounds})'
        return self.kind


DEFAULT_CANDIDATES = (
    CandidateSpec(KINDS.LINEAR),
    CandidateSpec(KINDS.SMOOTHER, k=LEARNERS.SMOOTHER_K[0]),
    CandidateSpec(KINDS.SMOOTHER, k=LEARNERS.SMOOTHER_K[1]),
    CandidateSpec(KINDS.STUMP_BOOST, rounds=LEARNERS.BOOST_ROUNDS,
                  learning_rate=LEARNERS.BOOST_LEARNING_RATE),
)


class LearnerConfig(NamedTuple):
    candidates: Tuple[CandidateSpec, ...] = DEFAULT_CANDIDATES
    cv_folds: int = LEARNERS.CV_FOLDS
    stacking: bool = False
    ridge: float = LEARNERS.RIDGE

    @classmethod
    def from_dict(cls, config: Mapping[str, Any]) -> 'LearnerConfig':
        candidates = []
        for entry in config.get('candidates', []):
            if isinstance(entry, str):
                entry = {'kind': entry}
            kind = entry['kind']
            if kind not in KINDS:
                raise ValueError(f'Unknown learner kind {kind}. Expected one of {list(KINDS)}.')
            candidates.append(CandidateSpec(
                kind=kind,
                k=entry.get('k', LEARNERS.SMOOTHER_K[0] if kind == KINDS.SMOOTHER else None),
                rounds=entry.get('rounds', LEARNERS.BOOST_ROUNDS if kind == KINDS.STUMP_BOOST else None),
                learning_rate=entry.get('learning_rate',
                                        LEARNERS.BOOST_LEARNING_RATE if kind == KINDS.STUMP_BOOST else None),
            ))
        return cls(
            candidates=tuple(candidates) if candidates else DEFAULT_CANDIDATES,
            cv_folds=int(config.get('cv_folds', LEARNERS.CV_FOLDS)),
            stacking=bool(config.get('stacking', False)),
            ridge=float(config.get('ridge', LEARNERS.RIDGE)),
        )

    def to_dict(self) -> dict:
        return {
            'candidates': [{key: value for key, value in c._asdict().items() if value is not None}
                           for c in self.candidates],
            'cv_folds': self.cv_folds,
            'stacking': self.stacking,
            'ridge': self.ridge,
        }


class EnsembleModel(NamedTuple):
    candidates: Tuple[Optional[RegressionModel], ...]
    names: Tuple[str, ...]
    weights: np.ndarray
    cv_risks: np.ndarray
    task: str
    n_features: int
    dropped: Tuple[str, ...] = ()

    @property
    def selected(self) -> str:
        return self.names[int(np.argmax(self.weights))]


def fit_candidate(spec: CandidateSpec, Xf: np.ndarray, y: np.ndarray, task: str,
                  ridge: float = LEARNERS.RIDGE) -> RegressionModel:
    if spec.kind == KINDS.INTERCEPT:
        return fit_intercept(Xf, y, task)
    if spec.kind == KINDS.LINEAR:
        if task == TASKS.PROBABILITY:
            return fit_logistic(Xf, y, ridge=ridge)
        return fit_linear(Xf, y, ridge=ridge)
    if spec.kind == KINDS.LOGISTIC:
        if task != TASKS.PROBABILITY:
            raise LearnerError('Logistic candidates only fit probability tasks.')
        return fit_logistic(Xf, y, ridge=ridge)
    if spec.kind == KINDS.SMOOTHER:
        return fit_smoother(Xf, y, spec.k, task=task)
    if spec.kind == KINDS.STUMP_BOOST:
        return fit_stump_boost(Xf, y, task=task, rounds=spec.rounds, learning_rate=spec.learning_rate)
    raise LearnerError(f'Unknown learner kind {spec.kind}.')


def _risk(y: np.ndarray, prediction: np.ndarray, task: str) -> float:
    if task == TASKS.PROBABILITY:
        p = clip_probability(prediction)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    return float(np.mean((y - prediction) ** 2))


def _stacking_weights(y: np.ndarray, predictions: np.ndarray) -> Optional[np.ndarray]:
    n_candidates = predictions.shape[1]

    def objective(w):
        return np.mean((y - predictions @ w) ** 2)

    result = optimize.minimize(
        objective,
        np.full(n_candidates, 1 / n_candidates),
        method='SLSQP',
        bounds=[(0.0, 1.0)] * n_candidates,
        constraints=[{'type': 'eq', 'fun': lambda w: np.sum(w) - 1.0}],
    )
    if not result.success:
        logger.warning(f'Stacking weights did not converge ({result.message}); '
                       f'falling back to discrete selection.')
        return None
    weights = np.clip(result.x, 0.0, None)
    weights[weights < 1e-10] = 0.0
    return weights / weights.sum()


def fit_ensemble(Xf: np.ndarray, y: np.ndarray, task: str = TASKS.REGRESSION,
                 folds: Optional[int] = None, seed: Union[int, SeedTree] = 0,
                 config: Optional[LearnerConfig] = None) -> EnsembleModel:
    """Fits every candidate, scores it by cross-validation and combines them.

    Parameters
    ----------
    Xf
        An n x d feature matrix.
    y
        n responses; labels in {0, 1} for the probability task.
    task
        ``regression`` (squared error risk) or ``probability`` (log loss).
    folds
        Cross-validation folds, defaulting to the configured count.
    seed
        Seed for the cross-validation split.
    config
        Candidate library and combination policy.

    Returns
    -------
        The ensemble, refit on all data for every candidate with positive weight.

    """
    config = config or LearnerConfig()
    Xf = np.asarray(Xf, dtype=float)
    if Xf.ndim == 1:
        Xf = Xf[:, np.newaxis]
    y = np.asarray(y, dtype=float)
    n = Xf.shape[0]
    folds = config.cv_folds if folds is None else folds
    if folds < 2:
        raise LearnerError(f'Ensembles need at least 2 cross-validation folds, got {folds}.')
    if n < 2:
        raise LearnerError(f'Ensembles need at least 2 observations, got {n}.')
    folds = min(folds, n)

    rng = as_seed_tree(seed, ('ensemble',)).generator()
    fold_ids = np.empty(n, dtype=int)
    fold_ids[rng.permutation(n)] = np.arange(n) % folds

    names, specs, columns, dropped = [], [], [], []
    for spec in config.candidates:
        held_out = np.empty(n)
        try:
            for fold in range(folds):
                train = fold_ids != fold
                model = fit_candidate(spec, Xf[train], y[train], task, config.ridge)
                held_out[~train] = predict_model(model, Xf[~train])
        except (LearnerError, linalg.LinAlgError, ValueError) as e:
            logger.warning(f'Dropping candidate {spec.name}: {e}')
            dropped.append(spec.name)
            continue
        if not np.all(np.isfinite(held_out)):
            logger.warning(f'Dropping candidate {spec.name}: non-finite cross-validated predictions.')
            dropped.append(spec.name)
            continue
        names.append(spec.name)
        specs.append(spec)
        columns.append(held_out)

    if not specs:
        raise LearnerError(f'Every candidate failed to fit: {dropped}.')

    predictions = np.column_stack(columns)
    risks = np.array([_risk(y, predictions[:, c], task) for c in range(len(specs))])
    weights = _stacking_weights(y, predictions) if config.stacking and len(specs) > 1 else None
    if weights is None:
        weights = np.zeros(len(specs))
        weights[int(np.argmin(risks))] = 1.0
    logger.debug(f'Ensemble cv risks {dict(zip(names, np.round(risks, 6)))}, weights {weights}.')

    candidates = tuple(
        fit_candidate(spec, Xf, y, task, config.ridge) if weight > 0 else None
        for spec, weight in zip(specs, weights)
    )
    return EnsembleModel(
        candidates=candidates,
        names=tuple(names),
        weights=weights,
        cv_risks=risks,
        task=task,
        n_features=Xf.shape[1],
        dropped=tuple(dropped),
    )


def predict(m: Union[RegressionModel, EnsembleModel], Xf: np.ndarray) -> np.ndarray:
    """Predictions of a single model or an ensemble at the rows of ``Xf``."""
    if isinstance(m, RegressionModel):
        return predict_model(m, Xf)
    Xf = np.asarray(Xf, dtype=float)
    if Xf.ndim == 1 and m.n_features == 1:
        Xf = Xf[:, np.newaxis]
    if Xf.ndim != 2 or Xf.shape[1] != m.n_features:
        raise LearnerError(f'Ensemble was trained on {m.n_features} features, got an array of shape {Xf.shape}.')
    out = np.zeros(Xf.shape[0])
    for model, weight in zip(m.candidates, m.weights):
        if weight > 0:
            out += weight * predict_model(model, Xf)
    if m.task == TASKS.PROBABILITY:
        out = clip_probability(out)
    return out

