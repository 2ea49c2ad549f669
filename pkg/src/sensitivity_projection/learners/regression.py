"""Regression primitives used as nuisance and conditional-mean learners.

Every fit returns an immutable :class:`RegressionModel`. Models carry their
task (``regression`` or ``probability``); probability predictions are clipped
away from 0 and 1.

"""
from typing import Any, Dict, NamedTuple, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import linalg, special
from scipy.spatial.distance import cdist

from sensitivity_projection.constants import data_values, metadata

KINDS = metadata.LEARNER_KINDS
TASKS = metadata.TASKS
LEARNERS = data_values.LEARNERS


class LearnerError(ValueError):
    pass


class RegressionModel(NamedTuple):
    kind: str
    task: str
    n_features: int
    params: Dict[str, Any]
    feature_names: Tuple[str, ...] = ()
    flags: Tuple[str, ...] = ()


def clip_probability(p: np.ndarray) -> np.ndarray:
    return np.clip(p, data_values.PROBABILITY_CLIP, 1 - data_values.PROBABILITY_CLIP)


def _check_xy(Xf: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Xf = np.asarray(Xf, dtype=float)
    if Xf.ndim == 1:
        Xf = Xf[:, np.newaxis]
    y = np.asarray(y, dtype=float)
    if Xf.ndim != 2 or y.ndim != 1 or Xf.shape[0] != y.shape[0]:
        raise LearnerError(f'Features of shape {Xf.shape} do not match a response of shape {y.shape}.')
    if Xf.shape[0] < 1:
        raise LearnerError('Cannot fit a model to zero observations.')
    if not (np.all(np.isfinite(Xf)) and np.all(np.isfinite(y))):
        raise LearnerError('Features and response must be finite.')
    return Xf, y


def _check_labels(y: np.ndarray) -> None:
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise LearnerError('Probability fits need labels in {0, 1}.')


def _design(Xf: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(Xf.shape[0]), Xf])


##########
# Linear #
##########

def fit_intercept(Xf: np.ndarray, y: np.ndarray, task: str = TASKS.REGRESSION,
                  feature_names: Sequence[str] = ()) -> RegressionModel:
    Xf, y = _check_xy(Xf, y)
    if task == TASKS.PROBABILITY:
        _check_labels(y)
    return RegressionModel(KINDS.INTERCEPT, task, Xf.shape[1], {'mean': float(np.mean(y))},
                           tuple(feature_names))


def fit_linear(Xf: np.ndarray, y: np.ndarray, ridge: float = LEARNERS.RIDGE,
               task: str = TASKS.REGRESSION, feature_names: Sequence[str] = ()) -> RegressionModel:
    """Least squares with an unpenalised intercept and a ridge on the slopes.

    Parameters
    ----------
    Xf
        An n x d feature matrix. ``d`` may be zero.
    y
        n responses.
    ridge
        Non-negative penalty on the slope coefficients. With ``ridge == 0`` a
        rank-deficient design falls back to the minimum-norm solution and the
        model is flagged ``min_norm``.

    Returns
    -------
        A ``linear`` model with coefficients ``(intercept, slopes...)``.

    """
    Xf, y = _check_xy(Xf, y)
    if ridge < 0:
        raise LearnerError(f'Ridge penalty must be non-negative, got {ridge}.')
    n, d = Xf.shape
    design = _design(Xf)
    flags = ()
    if ridge > 0 and d > 0:
        penalty = np.sqrt(ridge) * np.eye(d + 1)[1:]
        coefficients, _, _, _ = linalg.lstsq(np.vstack([design, penalty]),
                                             np.concatenate([y, np.zeros(d)]))
    else:
        coefficients, _, rank, _ = linalg.lstsq(design, y)
        if rank < d + 1:
            logger.warning(f'Rank-deficient design (rank {rank} of {d + 1}); using the minimum-norm solution.')
            flags = ('min_norm',)
    if not np.all(np.isfinite(coefficients)):
        raise LearnerError('Linear fit produced non-finite coefficients.')
    return RegressionModel(KINDS.LINEAR, task, d, {'coefficients': coefficients}, tuple(feature_names), flags)


############
# Logistic #
############

def _penalized_loglik(design: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    eta = design @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * ridge * beta @ beta)


def fit_logistic(Xf: np.ndarray, labels: np.ndarray, ridge: float = LEARNERS.RIDGE,
                 max_iter: int = LEARNERS.IRLS_MAX_ITER, tol: float = LEARNERS.IRLS_TOL,
                 feature_names: Sequence[str] = ()) -> RegressionModel:
    """Ridge-penalised logistic regression by iteratively reweighted least squares.

    The penalty applies to every coefficient, intercept included, so a single
    class or a separable sample still yields finite coefficients. Each Newton
    step is halved until the penalised log-likelihood does not decrease. The
    per-iteration log-likelihoods are kept in ``params['loglik_history']``.

    """
    Xf, y = _check_xy(Xf, labels)
    _check_labels(y)
    if ridge < 0:
        raise LearnerError(f'Ridge penalty must be non-negative, got {ridge}.')
    design = _design(Xf)
    d = design.shape[1]
    beta = np.zeros(d)
    loglik = _penalized_loglik(design, y, beta, ridge)
    history = [loglik]
    converged = False

    for iteration in range(max_iter):
        p = special.expit(design @ beta)
        w = p * (1 - p)
        gradient = design.T @ (y - p) - ridge * beta
        hessian = (design * w[:, np.newaxis]).T @ design + ridge * np.eye(d)
        try:
            step = linalg.solve(hessian, gradient, assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(hessian, gradient)[0]

        scale = 1.0
        for _ in range(40):
            candidate = beta + scale * step
            candidate_loglik = _penalized_loglik(design, y, candidate, ridge)
            if candidate_loglik >= loglik:
                break
            scale /= 2
        else:
            logger.warning(f'IRLS step halving failed to raise the likelihood at iteration {iteration}.')
            break

        change = np.max(np.abs(candidate - beta))
        beta, loglik = candidate, candidate_loglik
        history.append(loglik)
        if change < tol:
            converged = True
            break

    flags = ()
    if not converged:
        logger.warning(f'IRLS did not converge after {len(history) - 1} of {max_iter} iterations.')
        flags = ('not_converged',)
    if not np.all(np.isfinite(beta)):
        raise LearnerError('Logistic fit produced non-finite coefficients.')
    return RegressionModel(
        KINDS.LOGISTIC, TASKS.PROBABILITY, Xf.shape[1],
        {'coefficients': beta, 'loglik_history': np.array(history), 'iterations': len(history) - 1},
        tuple(feature_names), flags,
    )


############
# Smoother #
############

def fit_smoother(Xf: np.ndarray, y: np.ndarray, k: int, task: str = TASKS.REGRESSION,
                 feature_names: Sequence[str] = ()) -> RegressionModel:
    """k-nearest-neighbour mean on per-feature standardised features."""
    Xf, y = _check_xy(Xf, y)
    n = Xf.shape[0]
    if not 1 <= k <= n:
        raise LearnerError(f'Neighbour count k must lie in [1, {n}], got {k}.')
    center = Xf.mean(axis=0)
    scale = Xf.std(axis=0)
    scale[scale == 0] = 1.0
    return RegressionModel(
        KINDS.SMOOTHER, task, Xf.shape[1],
        {'k': int(k), 'center': center, 'scale': scale, 'points': (Xf - center) / scale, 'response': y},
        tuple(feature_names),
    )


def _predict_smoother(params: Dict[str, Any], Xf: np.ndarray) -> np.ndarray:
    k = params['k']
    points = params['points']
    response = params['response']
    queries = (Xf - params['center']) / params['scale']
    out = np.empty(Xf.shape[0])
    batch = LEARNERS.SMOOTHER_BATCH
    for start in range(0, Xf.shape[0], batch):
        distances = cdist(queries[start:start + batch], points, 'sqeuclidean')
        kth = np.partition(distances, k - 1, axis=1)[:, k - 1:k]
        closer = distances < kth
        # neighbours tied with the k-th distance are taken in training order
        tied = distances == kth
        room = k - closer.sum(axis=1, keepdims=True)
        chosen = closer | (tied & (np.cumsum(tied, axis=1) <= room))
        out[start:start + batch] = chosen @ response / k
    return out


##################
# Boosted stumps #
##################

def _candidate_thresholds(x: np.ndarray, max_bins: int) -> np.ndarray:
    values = np.unique(x)
    if values.size <= 1:
        return np.empty(0)
    if values.size <= max_bins:
        return (values[:-1] + values[1:]) / 2
    return np.unique(np.quantile(x, np.arange(1, max_bins) / max_bins))


def fit_stump_boost(Xf: np.ndarray, y: np.ndarray, task: str = TASKS.REGRESSION,
                    rounds: int = LEARNERS.BOOST_ROUNDS,
                    learning_rate: float = LEARNERS.BOOST_LEARNING_RATE,
                    max_bins: int = LEARNERS.BOOST_MAX_BINS,
                    feature_names: Sequence[str] = ()) -> RegressionModel:
    """Gradient boosting with depth-1 trees.

    Squared error for regression, logistic loss with Newton leaf values for
    probabilities. Split points are binned at up to ``max_bins`` quantiles.

    """
    Xf, y = _check_xy(Xf, y)
    if rounds < 0 or learning_rate <= 0:
        raise LearnerError(f'Boosting needs rounds >= 0 and a positive learning rate, '
                           f'got {rounds} and {learning_rate}.')
    probability = task == TASKS.PROBABILITY
    if probability:
        _check_labels(y)
        base = float(special.logit(clip_probability(np.mean(y))))
    else:
        base = float(np.mean(y))

    n, d = Xf.shape
    floor = LEARNERS.BOOST_HESSIAN_FLOOR
    thresholds = [_candidate_thresholds(Xf[:, f], max_bins) for f in range(d)]
    bins = [np.searchsorted(thresholds[f], Xf[:, f], side='left') for f in range(d)]

    F = np.full(n, base)
    features, cuts, left_values, right_values = [], [], [], []
    for _ in range(rounds):
        if probability:
            p = special.expit(F)
            gradient, hessian = y - p, p * (1 - p)
        else:
            gradient, hessian = y - F, np.ones(n)
        total_g, total_h = gradient.sum(), hessian.sum()

        best = (-np.inf, -1, -1, 0.0, 0.0)
        for f in range(d):
            m = thresholds[f].size
            if m == 0:
                continue
            left_g = np.cumsum(np.bincount(bins[f], weights=gradient, minlength=m + 1))[:-1]
            left_h = np.cumsum(np.bincount(bins[f], weights=hessian, minlength=m + 1))[:-1]
            left_count = np.cumsum(np.bincount(bins[f], minlength=m + 1))[:-1]
            right_g, right_h = total_g - left_g, total_h - left_h
            valid = (left_count > 0) & (left_count < n)
            if not valid.any():
                continue
            gain = np.where(valid, left_g ** 2 / (left_h + floor) + right_g ** 2 / (right_h + floor), -np.inf)
            cut = int(np.argmax(gain))
            if gain[cut] > best[0]:
                best = (gain[cut], f, cut, left_g[cut] / (left_h[cut] + floor),
                        right_g[cut] / (right_h[cut] + floor))

        gain, f, cut, left_value, right_value = best
        if f < 0:
            break
        left_value *= learning_rate
        right_value *= learning_rate
        F += np.where(bins[f] <= cut, left_value, right_value)
        features.append(f)
        cuts.append(thresholds[f][cut])
        left_values.append(left_value)
        right_values.append(right_value)

    return RegressionModel(
        KINDS.STUMP_BOOST, task, d,
        {'base': base, 'features': np.array(features, dtype=int), 'thresholds': np.array(cuts),
         'left': np.array(left_values), 'right': np.array(right_values)},
        tuple(feature_names),
    )


def _predict_stump_boost(params: Dict[str, Any], Xf: np.ndarray) -> np.ndarray:
    F = np.full(Xf.shape[0], params['base'])
    for f, threshold, left, right in zip(params['features'], params['thresholds'],
                                         params['left'], params['right']):
        F += np.where(Xf[:, f] <= threshold, left, right)
    return F


###########
# Predict #
###########

def predict_model(m: RegressionModel, Xf: np.ndarray) -> np.ndarray:
    Xf = np.asarray(Xf, dtype=float)
    if Xf.ndim == 1 and m.n_features == 1:
        Xf = Xf[:, np.newaxis]
    if Xf.ndim != 2 or Xf.shape[1] != m.n_features:
        raise LearnerError(f'Model {m.kind} was trained on {m.n_features} features, '
                           f'got an array of shape {Xf.shape}.')

    if m.kind == KINDS.INTERCEPT:
        out = np.full(Xf.shape[0], m.params['mean'])
    elif m.kind in (KINDS.LINEAR, KINDS.LOGISTIC):
        out = _design(Xf) @ m.params['coefficients']
        if m.kind == KINDS.LOGISTIC:
            out = special.expit(out)
    elif m.kind == KINDS.SMOOTHER:
        out = _predict_smoother(m.params, Xf)
    elif m.kind == KINDS.STUMP_BOOST:
        out = _predict_stump_boost(m.params, Xf)
        if m.task == TASKS.PROBABILITY:
            out = special.expit(out)
    else:
        raise LearnerError(f'Unknown model kind {m.kind}.')

    if m.task == TASKS.PROBABILITY:
        out = clip_probability(out)
    return out
