"""Omitted variable bias bounds on the ACE of a binary treatment.

The short parameters are the ACE ignoring latent confounders (tau_s), the
residual outcome variance (sigma2_s) and the second moment of the Riesz
representer (nu2_s). The bias from a latent confounder is bounded by

    |rho| * sigma_s * nu_s * C_Y * C_T,

with C_Y^2 = eta2_y and C_T^2 = eta2_t / (1 - eta2_t) the shares of residual
outcome and treatment variation the confounder could explain.

"""
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from sensitivity_projection.constants import data_values, metadata, results
from sensitivity_projection.data import Dataset, DomainError, FoldAssignment, assign_folds
from sensitivity_projection.estimation.influence import IfSamples, one_step_estimate
from sensitivity_projection.estimation.projection import AlternatingProjector
from sensitivity_projection.estimation.sensitivity import NuisanceConfig, NuisanceFit, fit_nuisances
from sensitivity_projection.graphs import CiConstraint
from sensitivity_projection.utilities import SeedTree, as_seed_tree

TARGETS = metadata.TARGETS
VARIANTS = metadata.VARIANTS
COMPONENTS = (TARGETS.TAU_S, TARGETS.SIGMA2_S, TARGETS.NU2_S)

OVB_NUISANCES = NuisanceConfig(outcome_task=metadata.TASKS.REGRESSION)


def riesz_ate(pi_hat: np.ndarray, T: np.ndarray) -> np.ndarray:
    """The ACE Riesz representer T / pi - (1 - T) / (1 - pi)."""
    pi_hat = np.asarray(pi_hat, dtype=float)
    T = np.asarray(T, dtype=float)
    return T / pi_hat - (1.0 - T) / (1.0 - pi_hat)


def _uncentered_terms(nf: NuisanceFit, ds: Dataset) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    pi1 = nf.propensity_scores(ds)
    alpha = riesz_ate(pi1, ds.treatment)
    mu1 = nf.outcome_means(ds, 1)
    mu0 = nf.outcome_means(ds, 0)
    residual = ds.outcome - np.where(ds.treatment == 1, mu1, mu0)
    return alpha, {
        TARGETS.TAU_S: alpha * residual + mu1 - mu0,
        TARGETS.SIGMA2_S: residual ** 2,
        TARGETS.NU2_S: 2.0 * (1.0 / pi1 + 1.0 / (1.0 - pi1)) - alpha ** 2,
    }


class OvbFold(NamedTuple):
    fold: int
    estimates: Dict[str, float]
    samples: Dict[str, IfSamples]
    # the same components on the fold's training units, centered at the fold estimates
    train_samples: Dict[str, IfSamples]


class OvbShortFit(NamedTuple):
    tau_s: float
    sigma2_s: float
    nu2_s: float
    if_tau: IfSamples
    if_sigma2: IfSamples
    if_nu2: IfSamples
    alpha_s: np.ndarray
    folds: Tuple[OvbFold, ...]
    assignment: FoldAssignment
    variant: str = VARIANTS.NONPARAMETRIC
    projection: Tuple[Dict[str, Any], ...] = ()

    @property
    def components(self) -> Dict[str, float]:
        return {TARGETS.TAU_S: self.tau_s, TARGETS.SIGMA2_S: self.sigma2_s, TARGETS.NU2_S: self.nu2_s}


def _assemble(folds: Sequence[OvbFold], assignment: FoldAssignment, alpha: np.ndarray,
              variant: str = VARIANTS.NONPARAMETRIC,
              projection: Tuple[Dict[str, Any], ...] = ()) -> OvbShortFit:
    n = assignment.labels.shape[0]
    estimates = {c: float(np.median([f.estimates[c] for f in folds])) for c in COMPONENTS}
    pooled = {}
    for c in COMPONENTS:
        values = np.empty(n)
        for f in folds:
            values[assignment.eval_index(f.fold)] = f.samples[c].values
        pooled[c] = IfSamples(values=values, target=c, centered_at=estimates[c])
    nu2 = estimates[TARGETS.NU2_S]
    floor = data_values.OVB.NU2_FLOOR
    if nu2 < floor * (1.0 - data_values.OVB.NU2_TOLERANCE):
        raise DomainError(f'Estimated nu2_s = {nu2:.6g} ({variant}) is below its lower bound '
                          f'of {floor:g} for a binary treatment.')
    if nu2 < floor:
        logger.warning(f'Estimated nu2_s = {nu2:.6g} ({variant}) is slightly below its lower bound of {floor:g}.')
    return OvbShortFit(
        tau_s=estimates[TARGETS.TAU_S],
        sigma2_s=estimates[TARGETS.SIGMA2_S],
        nu2_s=estimates[TARGETS.NU2_S],
        if_tau=pooled[TARGETS.TAU_S],
        if_sigma2=pooled[TARGETS.SIGMA2_S],
        if_nu2=pooled[TARGETS.NU2_S],
        alpha_s=alpha,
        folds=tuple(folds),
        assignment=assignment,
        variant=variant,
        projection=projection,
    )


def short_fit(ds: Dataset, K: int = data_values.DEFAULT_FOLDS, seed: Union[int, SeedTree] = 0,
              cfg: Optional[NuisanceConfig] = None) -> OvbShortFit:
    """Cross-fitted debiased estimates of the short parameters and their influence functions.

    Parameters
    ----------
    ds
        Dataset with a binary treatment and a real outcome.
    K
        Number of folds.
    seed
        Master seed or seed tree node. Folds and nuisances use the same
        seed paths as the sensitivity curve.
    cfg
        Nuisance learner settings. The outcome regressions default to the
        squared-error task.

    Returns
    -------
        Median-aggregated short parameters with per-unit influence functions.

    """
    cfg = cfg or OVB_NUISANCES
    tree = as_seed_tree(seed)
    assignment = assign_folds(ds, K, tree)
    alpha = np.empty(ds.n)
    folds = []
    for k in assignment.folds():
        train, evaluation = assignment.split(ds, k)
        nf = fit_nuisances(train, cfg, tree.child('fold', k))
        fold_alpha, terms = _uncentered_terms(nf, evaluation)
        _, train_terms = _uncentered_terms(nf, train)
        alpha[assignment.eval_index(k)] = fold_alpha
        estimates = {c: float(np.mean(terms[c])) for c in COMPONENTS}
        folds.append(OvbFold(
            fold=k,
            estimates=estimates,
            samples={c: IfSamples(terms[c] - estimates[c], c, centered_at=estimates[c]) for c in COMPONENTS},
            train_samples={c: IfSamples(train_terms[c] - estimates[c], c, centered_at=estimates[c])
                           for c in COMPONENTS},
        ))
        logger.debug(f'Fold {k}: ' + ', '.join(f'{c} = {v:.4g}' for c, v in estimates.items()))
    return _assemble(folds, assignment, alpha)


##########
# Bounds #
##########

class OvbBound(NamedTuple):
    rho: float
    eta2_y: float
    eta2_t: float
    tau_s: float
    tau_lo: float
    tau_hi: float
    if_lo: IfSamples
    if_hi: IfSamples
    var_tau: float
    var_lo: float
    var_hi: float
    variant: str = VARIANTS.NONPARAMETRIC
    projection: Tuple[Dict[str, Any], ...] = ()

    @property
    def half_width(self) -> float:
        return self.tau_hi - self.tau_s

    def to_row(self) -> Dict[str, Any]:
        return {
            'eta2': self.eta2_y if self.eta2_y == self.eta2_t else np.nan,
            'rho': self.rho,
            'tau_s': self.tau_s,
            'tau_lo': self.tau_lo,
            'tau_hi': self.tau_hi,
            'var_lo': self.var_lo,
            'var_hi': self.var_hi,
            'projected': self.variant == VARIANTS.PROJECTED,
        }


def _strength(eta2_y: float, eta2_t: float) -> Tuple[float, float]:
    if not 0.0 <= eta2_y < 1.0:
        raise DomainError(f'eta2_y must lie in [0, 1), got {eta2_y}.')
    if not 0.0 <= eta2_t < 1.0:
        raise DomainError(f'eta2_t must lie in [0, 1), got {eta2_t}.')
    return np.sqrt(eta2_y), np.sqrt(eta2_t / (1.0 - eta2_t))


def _fold_bound_samples(f: OvbFold, scale: float, sign: float) -> np.ndarray:
    sigma2 = f.estimates[TARGETS.SIGMA2_S]
    nu2 = f.estimates[TARGETS.NU2_S]
    sigma_nu = np.sqrt(max(sigma2, 0.0) * max(nu2, 0.0))
    coefficient = scale / (2.0 * sigma_nu) if sigma_nu > 0 else 0.0
    return (f.samples[TARGETS.TAU_S].values
            + sign * coefficient * (sigma2 * f.samples[TARGETS.NU2_S].values
                                    + nu2 * f.samples[TARGETS.SIGMA2_S].values))


def ovb_bounds(fit: OvbShortFit, rho: float = data_values.OVB.RHO,
               eta2_y: float = 0.0, eta2_t: float = 0.0) -> OvbBound:
    """Bounds on the ACE and the influence functions of both bounds.

    The bound influence functions combine the component influence functions
    with coefficients from each fold's own short-parameter estimates.
    Variances are medians over folds of the fold sample variance over the
    fold size.

    """
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f'rho must lie in [-1, 1], got {rho}.')
    c_y, c_t = _strength(eta2_y, eta2_t)
    scale = abs(rho) * c_y * c_t
    half_width = scale * np.sqrt(max(fit.sigma2_s, 0.0) * max(fit.nu2_s, 0.0))

    n = fit.assignment.labels.shape[0]
    pooled = {TARGETS.BOUND_LO: np.empty(n), TARGETS.BOUND_HI: np.empty(n)}
    variances = {TARGETS.TAU_S: [], TARGETS.BOUND_LO: [], TARGETS.BOUND_HI: []}
    for f in fit.folds:
        index = fit.assignment.eval_index(f.fold)
        variances[TARGETS.TAU_S].append(one_step_estimate(f.samples[TARGETS.TAU_S])[1])
        for target, sign in ((TARGETS.BOUND_LO, -1.0), (TARGETS.BOUND_HI, 1.0)):
            values = _fold_bound_samples(f, scale, sign)
            pooled[target][index] = values
            variances[target].append(one_step_estimate(IfSamples(values, target))[1])

    return OvbBound(
        rho=rho,
        eta2_y=eta2_y,
        eta2_t=eta2_t,
        tau_s=fit.tau_s,
        tau_lo=fit.tau_s - half_width,
        tau_hi=fit.tau_s + half_width,
        if_lo=IfSamples(pooled[TARGETS.BOUND_LO], TARGETS.BOUND_LO, centered_at=fit.tau_s - half_width),
        if_hi=IfSamples(pooled[TARGETS.BOUND_HI], TARGETS.BOUND_HI, centered_at=fit.tau_s + half_width),
        var_tau=float(np.median(variances[TARGETS.TAU_S])),
        var_lo=float(np.median(variances[TARGETS.BOUND_LO])),
        var_hi=float(np.median(variances[TARGETS.BOUND_HI])),
        variant=fit.variant,
        projection=fit.projection,
    )


def ovb_curve(fit: OvbShortFit, rho: float = data_values.OVB.RHO,
              eta2_grid: Sequence[float] = data_values.OVB.ETA2_GRID) -> List[OvbBound]:
    return [ovb_bounds(fit, rho, eta2, eta2) for eta2 in eta2_grid]


def bounds_frame(bounds: Sequence[OvbBound]) -> pd.DataFrame:
    return pd.DataFrame([b.to_row() for b in bounds], columns=results.BOUNDS_COLUMNS)


##############
# Projection #
##############

def project_short_fit(ds: Dataset, fit: OvbShortFit, constraints: Sequence[CiConstraint],
                      projector: AlternatingProjector,
                      seed: Union[int, SeedTree] = 0) -> OvbShortFit:
    """Projects each component influence function fold by fold and re-estimates.

    A projected fold estimate is the previous estimate plus the mean of the
    projected values; the projected values are recentered at it.

    """
    tree = as_seed_tree(seed)
    folds, diagnostics = [], []
    for f in fit.folds:
        train, evaluation = fit.assignment.split(ds, f.fold)
        estimates, samples = {}, {}
        for c in COMPONENTS:
            result = projector.project(
                f.samples[c], evaluation, constraints,
                seed=tree.child('projection', f.fold, c),
                fit=(f.train_samples[c], train) if projector.off_fold else None,
            )
            projected = result.evaluated
            estimates[c] = one_step_estimate(projected)[0]
            samples[c] = IfSamples(projected.values - (estimates[c] - projected.centered_at), c,
                                   centered_at=estimates[c])
            if not result.converged:
                logger.warning(f'Projection of {c} did not converge on fold {f.fold} '
                               f'after {result.sweeps} sweeps.')
            diagnostics.append({
                'fold': f.fold,
                'component': c,
                'sweeps': result.sweeps,
                'converged': result.converged,
                'delta_history': list(result.delta_history),
                'var_before': float(np.var(f.samples[c].values, ddof=1)),
                'var_after': float(np.var(projected.values, ddof=1)),
            })
        folds.append(f._replace(estimates=estimates, samples=samples))
    return _assemble(folds, fit.assignment, fit.alpha_s, VARIANTS.PROJECTED, tuple(diagnostics))


def ovb_projected(ds: Dataset, K: int = data_values.DEFAULT_FOLDS, seed: Union[int, SeedTree] = 0,
                  cfg: Optional[NuisanceConfig] = None,
                  constraints: Optional[Sequence[CiConstraint]] = None,
                  projector: Optional[AlternatingProjector] = None,
                  rho: float = data_values.OVB.RHO,
                  eta2_grid: Sequence[float] = data_values.OVB.ETA2_GRID,
                  fit: Optional[OvbShortFit] = None) -> List[OvbBound]:
    """Bounds over an eta2 grid after projecting the short-parameter influence functions.

    With no constraints this is the unprojected bound path.

    """
    tree = as_seed_tree(seed)
    fit = fit or short_fit(ds, K, tree, cfg)
    if not constraints:
        return ovb_curve(fit, rho, eta2_grid)
    if projector is None:
        raise ValueError('A projector is required when constraints are supplied.')
    projected = project_short_fit(ds, fit, constraints, projector, tree)
    return ovb_curve(projected, rho, eta2_grid)
