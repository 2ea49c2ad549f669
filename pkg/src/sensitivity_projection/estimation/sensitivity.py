"""Exponential-tilt sensitivity analysis for a binary outcome.

The counterfactual law of Y(t) among units with treatment 1 - t is the
factual law among units with treatment t, tilted by exp(gamma * y). gamma = 0
is no unmeasured confounding, where every quantity below reduces to its AIPW
counterpart.

"""
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger

from sensitivity_projection.constants import data_values, metadata, results
from sensitivity_projection.data import Dataset, DomainError, FoldAssignment, assign_folds
from sensitivity_projection.estimation.influence import (
    IfSamples,
    contrast,
    median_aggregate,
    one_step_estimate,
)
from sensitivity_projection.estimation.projection import AlternatingProjector
from sensitivity_projection.graphs import CiConstraint
from sensitivity_projection.learners import EnsembleModel, LearnerConfig, fit_ensemble, predict
from sensitivity_projection.utilities import SeedTree, as_seed_tree

TARGETS = metadata.TARGETS
VARIANTS = metadata.VARIANTS


#############
# Nuisances #
#############

class NuisanceConfig(NamedTuple):
    learner: LearnerConfig = LearnerConfig()
    trunc: Tuple[float, float] = data_values.PROPENSITY_TRUNCATION
    outcome_task: str = metadata.TASKS.PROBABILITY


class NuisanceFit(NamedTuple):
    propensity: EnsembleModel
    outcome1: EnsembleModel
    outcome0: EnsembleModel
    trunc: Tuple[float, float] = data_values.PROPENSITY_TRUNCATION

    def propensity_scores(self, ds: Dataset) -> np.ndarray:
        """Clipped P(T = 1 | X) at the units of ``ds``."""
        lo, hi = self.trunc
        return np.clip(predict(self.propensity, ds.covariates), lo, hi)

    def treatment_probabilities(self, ds: Dataset, t: int) -> np.ndarray:
        pi1 = self.propensity_scores(ds)
        return pi1 if t == 1 else 1.0 - pi1

    def outcome_means(self, ds: Dataset, t: int) -> np.ndarray:
        model = self.outcome1 if t == 1 else self.outcome0
        return predict(model, ds.covariates)


def _check_binary_outcome(ds: Dataset) -> None:
    if not np.all((ds.outcome == 0) | (ds.outcome == 1)):
        raise DomainError(f'Outcome {ds.outcome_name} must be binary for the sensitivity model, '
                          f'got values {np.unique(ds.outcome)[:5]}.')


def fit_nuisances(train: Dataset, cfg: Optional[NuisanceConfig] = None,
                  seed: Union[int, SeedTree] = 0) -> NuisanceFit:
    """Fits the propensity score and the per-arm outcome regressions.

    Parameters
    ----------
    train
        Units the nuisances are learned from.
    cfg
        Learner library, propensity truncation and the outcome task.
    seed
        Seed tree node; the three fits draw from its ``propensity``,
        ``outcome1`` and ``outcome0`` children.

    Returns
    -------
        The fitted nuisance models.

    """
    cfg = cfg or NuisanceConfig()
    lo, hi = cfg.trunc
    if not 0 < lo < hi < 1:
        raise ValueError(f'Propensity truncation bounds must satisfy 0 < lo < hi < 1, got {cfg.trunc}.')
    if cfg.outcome_task == metadata.TASKS.PROBABILITY:
        _check_binary_outcome(train)
    for t in (1, 0):
        if not np.any(train.treatment == t):
            raise DomainError(f'Cannot fit nuisances: no units with {train.treatment_name} = {t}.')

    tree = as_seed_tree(seed)
    X = train.covariates
    propensity = fit_ensemble(X, train.treatment, metadata.TASKS.PROBABILITY,
                              seed=tree.child('propensity'), config=cfg.learner)
    outcomes = {}
    for t in (1, 0):
        arm = train.treatment == t
        outcomes[t] = fit_ensemble(X[arm], train.outcome[arm], cfg.outcome_task,
                                   seed=tree.child(f'outcome{t}'), config=cfg.learner)
    return NuisanceFit(propensity=propensity, outcome1=outcomes[1], outcome0=outcomes[0], trunc=cfg.trunc)


##################
# Tilted moments #
##################

def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or abs(gamma) > data_values.MAX_ABS_GAMMA:
        raise ValueError(f'gamma must be finite with |gamma| <= {data_values.MAX_ABS_GAMMA}, got {gamma}.')
    return gamma


def tilted_moments(mu: Union[float, np.ndarray], gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """E[exp(gamma Y)] and E[Y exp(gamma Y)] for Y ~ Bernoulli(mu)."""
    gamma = _check_gamma(gamma)
    mu = np.asarray(mu, dtype=float)
    if abs(gamma) > data_values.LOG_SPACE_GAMMA:
        with np.errstate(divide='ignore'):
            log_mu = np.log(mu)
            log_m0 = np.logaddexp(gamma + log_mu, np.log1p(-mu))
        return np.exp(log_m0), np.exp(gamma + log_mu)
    m1 = np.exp(gamma) * mu
    return m1 + 1.0 - mu, m1


def tilted_ratio(mu: Union[float, np.ndarray], gamma: float) -> np.ndarray:
    """The tilted outcome mean m1 / m0, in [0, 1] and nondecreasing in gamma."""
    m0, m1 = tilted_moments(mu, gamma)
    return m1 / m0


##################################
# Plug-in and influence function #
##################################

def _target(t: int) -> str:
    if t not in (0, 1):
        raise ValueError(f'Treatment level must be 0 or 1, got {t}.')
    return TARGETS.PSI1 if t == 1 else TARGETS.PSI0


def plugin_psi(nf: NuisanceFit, eval: Dataset, t: int, gamma: float) -> float:
    _target(t)
    pi_t = nf.treatment_probabilities(eval, t)
    mu_t = nf.outcome_means(eval, t)
    ratio = tilted_ratio(mu_t, gamma)
    return float(np.mean(mu_t * pi_t + ratio * (1.0 - pi_t)))


def eif_samples(nf: NuisanceFit, eval: Dataset, t: int, gamma: float, psi: float) -> IfSamples:
    """The efficient influence function of E[Y(t)] under the tilt model, centered at ``psi``."""
    target = _target(t)
    gamma = _check_gamma(gamma)
    pi_t = nf.treatment_probabilities(eval, t)
    mu_t = nf.outcome_means(eval, t)
    m0, m1 = tilted_moments(mu_t, gamma)
    ratio = m1 / m0

    y = eval.outcome
    observed = (eval.treatment == t).astype(float)
    weight = (1.0 - pi_t) / pi_t * np.exp(gamma * y) / m0
    values = observed * y + observed * weight * (y - ratio) + (1.0 - observed) * ratio - psi
    return IfSamples(values=values, target=target, gamma=gamma, centered_at=float(psi))


def fold_estimate(nf: NuisanceFit, fold: Dataset, t: int, gamma: float) -> Tuple[float, float, IfSamples]:
    """One-step estimate of E[Y(t)] on a held-out fold, with its variance estimate."""
    psi = plugin_psi(nf, fold, t, gamma)
    samples = eif_samples(nf, fold, t, gamma, psi)
    psi_hat, var_hat = one_step_estimate(samples)
    return psi_hat, var_hat, samples


def aipw_samples(nf: NuisanceFit, eval: Dataset, t: int) -> IfSamples:
    """The AIPW influence function of E[Y(t)], centered at the g-formula mean."""
    target = _target(t)
    pi_t = nf.treatment_probabilities(eval, t)
    mu_t = nf.outcome_means(eval, t)
    psi = float(np.mean(mu_t))
    observed = (eval.treatment == t).astype(float)
    values = observed / pi_t * (eval.outcome - mu_t) + mu_t - psi
    return IfSamples(values=values, target=target, gamma=0.0, centered_at=psi)


#################
# Cross-fitting #
#################

class FoldDetail(NamedTuple):
    fold: int
    n: int
    estimate: float
    variance: float
    projection: Optional[Dict[str, Any]] = None


class CurvePoint(NamedTuple):
    gamma: float
    target: str
    variant: str
    estimate: float
    variance: float
    folds: Tuple[FoldDetail, ...]

    @property
    def ci(self) -> Tuple[float, float]:
        half_width = data_values.Z_95 * np.sqrt(self.variance)
        return self.estimate - half_width, self.estimate + half_width

    @property
    def converged(self) -> bool:
        return all(f.projection is None or f.projection['converged'] for f in self.folds)


class SensitivityCurve(NamedTuple):
    gammas: Tuple[float, ...]
    K: int
    seed: int
    points: Tuple[CurvePoint, ...]
    projected: bool = False

    def point(self, gamma: float, target: str = TARGETS.CONTRAST,
              variant: str = VARIANTS.NONPARAMETRIC) -> CurvePoint:
        for p in self.points:
            if p.gamma == gamma and p.target == target and p.variant == variant:
                return p
        raise KeyError(f'No curve point for gamma={gamma}, target={target}, variant={variant}.')

    @property
    def variants(self) -> List[str]:
        return [VARIANTS.NONPARAMETRIC, VARIANTS.PROJECTED] if self.projected else [VARIANTS.NONPARAMETRIC]

    def breakdown(self, variant: str = VARIANTS.NONPARAMETRIC) -> Dict[str, Optional[float]]:
        """Grid values of gamma nearest zero, on each side, whose ACE interval covers 0."""

        def first_covering(gammas):
            for gamma in gammas:
                lo, hi = self.point(gamma, TARGETS.CONTRAST, variant).ci
                if lo <= 0.0 <= hi:
                    return gamma
            return None

        grid = sorted(self.gammas)
        return {
            'lower': first_covering([g for g in reversed(grid) if g <= 0]),
            'upper': first_covering([g for g in grid if g >= 0]),
        }

    def _frame(self, targets: Sequence[str], columns: List[str]) -> pd.DataFrame:
        rows = []
        for p in self.points:
            if p.target not in targets:
                continue
            ci_lo, ci_hi = p.ci
            rows.append({
                'gamma': p.gamma,
                'target': p.target,
                'estimate': p.estimate,
                'variance': p.variance,
                'ci_lo': ci_lo,
                'ci_hi': ci_hi,
                'projected': p.variant == VARIANTS.PROJECTED,
            })
        frame = pd.DataFrame(rows, columns=columns)
        return frame.sort_values('projected', kind='mergesort', ignore_index=True)

    def to_frame(self) -> pd.DataFrame:
        """The ACE curve: one row per gamma and variant, unprojected rows first."""
        return self._frame((TARGETS.CONTRAST,), results.CURVE_COLUMNS)

    def arm_frame(self) -> pd.DataFrame:
        """E[Y(1)] and E[Y(0)] rows, labelled by ``target``."""
        return self._frame((TARGETS.PSI1, TARGETS.PSI0), results.ARM_CURVE_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'K': self.K,
            'seed': self.seed,
            'gammas': list(self.gammas),
            'breakdown': {variant: self.breakdown(variant) for variant in self.variants},
            'points': [
                {
                    'gamma': p.gamma,
                    'target': p.target,
                    'variant': p.variant,
                    'estimate': p.estimate,
                    'variance': p.variance,
                    'ci': list(p.ci),
                    'folds': [f._asdict() for f in p.folds],
                }
                for p in self.points
            ],
        }


def _fold_curve(ds: Dataset, folds: FoldAssignment, k: int, gammas: Sequence[float],
                cfg: NuisanceConfig, tree: SeedTree,
                constraints: Sequence[CiConstraint],
                projector: Optional[AlternatingProjector]) -> List[Tuple[float, str, str, FoldDetail]]:
    train, evaluation = folds.split(ds, k)
    nf = fit_nuisances(train, cfg, tree.child('fold', k))
    out = []
    for gamma in gammas:
        samples = {}
        projected = {}
        for t in (1, 0):
            psi = plugin_psi(nf, evaluation, t, gamma)
            samples[t] = eif_samples(nf, evaluation, t, gamma, psi)
            if constraints:
                fit = None
                if projector.off_fold:
                    fit = (eif_samples(nf, train, t, gamma, psi), train)
                result = projector.project(samples[t], evaluation, constraints,
                                           seed=tree.child('projection', k, samples[t].target), fit=fit)
                if not result.converged:
                    logger.warning(f'Projection of {samples[t].target} did not converge on fold {k} '
                                   f'at gamma={gamma} after {result.sweeps} sweeps.')
                projected[t] = (result.evaluated, result.to_dict())

        variants = [(VARIANTS.NONPARAMETRIC, samples[1], samples[0], None, None)]
        if constraints:
            variants.append((VARIANTS.PROJECTED, projected[1][0], projected[0][0],
                             projected[1][1], projected[0][1]))
        for variant, s1, s0, d1, d0 in variants:
            for s, diagnostics in ((s1, d1), (s0, d0), (contrast(s1, s0), None)):
                estimate, variance = one_step_estimate(s)
                out.append((gamma, s.target, variant,
                            FoldDetail(k, s.n, estimate, variance, diagnostics)))
        logger.debug(f'Fold {k}, gamma={gamma}: contrast {out[-1][3].estimate:.4g} '
                     f'({out[-1][3].variance:.4g}).')
    return out


def cross_fit_curve(ds: Dataset,
                    gammas: Sequence[float] = data_values.DEFAULT_GAMMAS,
                    K: int = data_values.DEFAULT_FOLDS,
                    seed: Union[int, SeedTree] = 0,
                    cfg: Optional[NuisanceConfig] = None,
                    constraints: Optional[Sequence[CiConstraint]] = None,
                    projector: Optional[AlternatingProjector] = None,
                    n_jobs: int = 1) -> SensitivityCurve:
    """Cross-fitted sensitivity curve for E[Y(1)], E[Y(0)] and the ACE.

    Each fold's one-step estimates use nuisances trained on the other folds.
    Fold estimates and fold variances are aggregated by their medians. The
    ACE uses the contrast of the two influence functions within each fold.
    With constraints, every fold's influence functions are additionally
    passed through alternating projection and reported as a second variant.

    Parameters
    ----------
    ds
        Dataset with a binary outcome.
    gammas
        Sensitivity parameters, each with |gamma| <= 20.
    K
        Number of folds.
    seed
        Master seed or seed tree node.
    cfg
        Nuisance learner settings.
    constraints
        Covariate independence constraints to project onto.
    projector
        Projection settings; required with constraints.
    n_jobs
        Worker processes across folds. Results do not depend on it.

    Returns
    -------
        The curve, with per-fold detail on every point.

    """
    cfg = cfg or NuisanceConfig()
    _check_binary_outcome(ds)
    gammas = tuple(_check_gamma(gamma) for gamma in gammas)
    if not gammas:
        raise ValueError('At least one gamma is required.')
    constraints = list(constraints or [])
    if constraints and projector is None:
        raise ValueError('A projector is required when constraints are supplied.')
    for c in constraints:
        c.indices(ds.covariate_names)

    tree = as_seed_tree(seed)
    folds = assign_folds(ds, K, tree)
    logger.info(f'Cross-fitting {len(gammas)} gamma values over {K} folds of sizes {list(folds.sizes)}.')

    per_fold = Parallel(n_jobs=n_jobs)(
        delayed(_fold_curve)(ds, folds, k, gammas, cfg, tree, constraints, projector)
        for k in folds.folds()
    )

    details: Dict[Tuple[float, str, str], List[FoldDetail]] = {}
    for fold_rows in per_fold:
        for gamma, target, variant, detail in fold_rows:
            details.setdefault((gamma, target, variant), []).append(detail)

    points = []
    for (gamma, target, variant), fold_details in details.items():
        estimate, variance = median_aggregate([f.estimate for f in fold_details],
                                              [f.variance for f in fold_details])
        points.append(CurvePoint(gamma, target, variant, estimate, variance, tuple(fold_details)))
    return SensitivityCurve(gammas=gammas, K=K, seed=int(tree.master_seed), points=tuple(points),
                            projected=bool(constraints))


class AipwEstimate(NamedTuple):
    estimate: float
    variance: float
    fold_estimates: Tuple[float, ...]
    fold_variances: Tuple[float, ...]
    K: int

    @property
    def ci(self) -> Tuple[float, float]:
        half_width = data_values.Z_95 * np.sqrt(self.variance)
        return self.estimate - half_width, self.estimate + half_width


def cross_fit_aipw(ds: Dataset, K: int = data_values.DEFAULT_FOLDS,
                   seed: Union[int, SeedTree] = 0,
                   cfg: Optional[NuisanceConfig] = None) -> AipwEstimate:
    """Cross-fitted AIPW estimate of the ACE, on the folds and seeds ``cross_fit_curve`` uses."""
    cfg = cfg or NuisanceConfig()
    tree = as_seed_tree(seed)
    folds = assign_folds(ds, K, tree)
    estimates, variances = [], []
    for k in folds.folds():
        train, evaluation = folds.split(ds, k)
        nf = fit_nuisances(train, cfg, tree.child('fold', k))
        estimate, variance = one_step_estimate(contrast(aipw_samples(nf, evaluation, 1),
                                                        aipw_samples(nf, evaluation, 0)))
        estimates.append(estimate)
        variances.append(variance)
    estimate, variance = median_aggregate(estimates, variances)
    return AipwEstimate(estimate, variance, tuple(estimates), tuple(variances), K)
