import time
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from sensitivity_projection.constants import data_values, metadata, scenarios
from sensitivity_projection.estimation import (
    AlternatingProjector,
    CondMeanEstimator,
    NuisanceConfig,
    cross_fit_curve,
    ovb_curve,
    ovb_projected,
    short_fit,
)
from sensitivity_projection.estimation.ovb import OVB_NUISANCES
from sensitivity_projection.graphs import CiConstraint
from sensitivity_projection.results_processing import McReport, aggregate_replications
from sensitivity_projection.simulation.dgp import DgpSpec, generate
from sensitivity_projection.utilities import SeedTree, as_seed_tree

TARGETS = metadata.TARGETS
VARIANTS = metadata.VARIANTS

# report names for curve targets
REPORT_TARGETS = {
    TARGETS.CONTRAST: 'tau',
    TARGETS.PSI1: 'psi1',
    TARGETS.PSI0: 'psi0',
}


def _sweeps(details, variant: str) -> float:
    sweeps = [d['sweeps'] for d in details if d is not None]
    return float(np.mean(sweeps)) if variant == VARIANTS.PROJECTED and sweeps else 0.0


def _curve_rows(kind: str, n: int, ds, grid, K, tree, cfg, constraints, projector) -> List[Dict[str, Any]]:
    curve = cross_fit_curve(ds, grid, K, tree, cfg, constraints, projector)
    fold_sweeps = {}
    for p in curve.points:
        if p.target != TARGETS.CONTRAST:
            fold_sweeps.setdefault((p.gamma, p.variant), []).extend(f.projection for f in p.folds)
    rows = []
    for p in curve.points:
        rows.append({
            'kind': kind,
            'n': n,
            'parameter': 'gamma',
            'value': p.gamma,
            'variant': p.variant,
            'target': REPORT_TARGETS[p.target],
            'estimate': p.estimate,
            'variance': p.variance,
            'sweeps': _sweeps(fold_sweeps[(p.gamma, p.variant)] if p.target == TARGETS.CONTRAST
                              else [f.projection for f in p.folds], p.variant),
        })
    return rows


def _bound_rows(kind: str, n: int, ds, grid, K, tree, cfg, constraints, projector, rho) -> List[Dict[str, Any]]:
    fit = short_fit(ds, K, tree, cfg)
    curves = [ovb_curve(fit, rho, grid)]
    if constraints:
        curves.append(ovb_projected(ds, K, tree, cfg, constraints, projector, rho, grid, fit=fit))
    rows = []
    for curve in curves:
        for bound in curve:
            for target, estimate, variance in (('tau_lo', bound.tau_lo, bound.var_lo),
                                               ('tau_hi', bound.tau_hi, bound.var_hi)):
                rows.append({
                    'kind': kind,
                    'n': n,
                    'parameter': 'eta2',
                    'value': bound.eta2_y,
                    'variant': bound.variant,
                    'target': target,
                    'estimate': estimate,
                    'variance': variance,
                    'sweeps': _sweeps(bound.projection, bound.variant),
                })
    return rows


def run_replication(kind: str, n: int, replication: int, seed: SeedTree, grid: Sequence[float], K: int,
                    constraints: Sequence[CiConstraint], projector: Optional[AlternatingProjector],
                    cfg: Optional[NuisanceConfig], rho: float) -> List[Dict[str, Any]]:
    """Report rows of one replication: a fresh dataset, estimated with and without projection."""
    ds, _ = generate(DgpSpec.make(kind, n, seed, replication))
    tree = seed.child('replication', replication)
    scenario = scenarios.DGP_SCENARIOS.get(kind)
    if scenario.parameter == 'eta2':
        return _bound_rows(kind, n, ds, grid, K, tree, cfg or OVB_NUISANCES, constraints, projector, rho)
    return _curve_rows(kind, n, ds, grid, K, tree, cfg, constraints, projector)


def _guarded_replication(*args) -> Union[List[Dict[str, Any]], str]:
    try:
        return run_replication(*args)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        return f'{type(e).__name__}: {e}'


def run_mc(kind: str,
           grid: Optional[Sequence[float]] = None,
           reps: int = data_values.MONTE_CARLO.REPS,
           K: int = data_values.DEFAULT_FOLDS,
           constraints: Optional[Sequence[CiConstraint]] = None,
           projector: Optional[AlternatingProjector] = None,
           cfg: Optional[NuisanceConfig] = None,
           n: Optional[int] = None,
           seed: Union[int, SeedTree] = 0,
           n_jobs: int = 1,
           rho: float = data_values.OVB.RHO) -> McReport:
    """Runs a Monte Carlo experiment on one of the simulation processes.

    Every replication draws its data from the ``("dgp", r)`` node of the seed
    tree and its folds and learners from ``("replication", r)``, so the report
    does not depend on ``n_jobs``. Failed replications are counted and left
    out of the means.

    Parameters
    ----------
    kind
        Name of the data generating process.
    grid
        gamma values, or eta2 values for the bound experiment. Defaults to
        the process's own grid.
    reps
        Number of replications.
    K
        Folds per replication.
    constraints
        Constraints for the projected variant. Without them only the
        nonparametric variant is reported.
    projector
        Projection settings. Defaults to the ensemble policy.
    cfg
        Nuisance learner settings.
    n
        Units per dataset. Defaults to the process's own size.
    seed
        Master seed.
    n_jobs
        Worker processes across replications.
    rho
        Confounding correlation magnitude for the bound experiment.

    Returns
    -------
        Per-row means over replications.

    """
    if reps < 1:
        raise ValueError(f'reps must be at least 1, got {reps}.')
    scenario = scenarios.DGP_SCENARIOS.get(kind)
    grid = tuple(scenario.grid if grid is None else grid)
    n = scenario.n if n is None else n
    constraints = list(constraints or [])
    tree = as_seed_tree(seed)
    if constraints and projector is None:
        projector = AlternatingProjector(CondMeanEstimator(metadata.COND_MEAN_POLICIES.ENSEMBLE, seed=tree))

    logger.info(f'Running {reps} replications of {kind} with n={n} over {scenario.parameter} grid {list(grid)}.')
    start = time.perf_counter()
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_guarded_replication)(kind, n, r, tree, grid, K, constraints, projector, cfg, rho)
        for r in range(reps)
    )
    wall_time = time.perf_counter() - start

    failure_messages = []
    replications = []
    for r, outcome in enumerate(outcomes):
        if isinstance(outcome, str):
            logger.warning(f'Replication {r} failed: {outcome}')
            failure_messages.append(f'{r}: {outcome}')
            replications.append(None)
        else:
            replications.append(outcome)

    report = McReport(
        rows=aggregate_replications(replications),
        kind=kind,
        n=n,
        reps=reps,
        failures=len(failure_messages),
        seed=int(tree.master_seed),
        wall_time=wall_time,
        failure_messages=tuple(failure_messages),
    )
    if not report.valid:
        logger.warning(f'{report.failures} of {reps} replications failed; the run is invalid.')
    logger.info(f'Finished {reps} replications in {wall_time:.1f} seconds.')
    return report
