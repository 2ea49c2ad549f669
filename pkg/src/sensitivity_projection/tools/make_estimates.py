from pathlib import Path
from typing import Optional

from loguru import logger
from layered_config_tree import LayeredConfigTree as ConfigTree

from sensitivity_projection.constants import metadata, results
from sensitivity_projection.data import load_csv, validate_dataset
from sensitivity_projection.estimation import bounds_frame, cross_fit_curve, ovb_projected, short_fit
from sensitivity_projection.graphs import load_constraints
from sensitivity_projection.results_processing import write_summary
from sensitivity_projection.tools import configuration


def _prepare_output(output_dir: str) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def build_estimates(data_path: str, schema_path: str, constraints_path: Optional[str],
                    output_dir: str, config: ConfigTree) -> None:
    output_dir = _prepare_output(output_dir)
    settings = config.to_dict()

    logger.info(f'Reading data from {data_path}.')
    ds = load_csv(data_path, schema_path)
    report = validate_dataset(ds, require_binary_outcome=True)
    if not report.is_valid:
        raise ValueError('; '.join(f'{issue.column}: {issue.message}' for issue in report.errors))
    logger.info(f'Loaded {ds.n} units with covariates {list(ds.covariate_names)}.')

    constraints = []
    if constraints_path is not None:
        constraints = load_constraints(constraints_path, ds.covariate_names)
        logger.info(f'Projecting onto {len(constraints)} constraints from {constraints_path}.')

    projector = configuration.projector(config)
    curve = cross_fit_curve(
        ds,
        gammas=configuration.gammas(config),
        K=int(settings['estimation']['folds']),
        seed=int(settings['run']['seed']),
        cfg=configuration.nuisance_config(config),
        constraints=constraints,
        projector=projector if constraints else None,
        n_jobs=int(settings['run']['jobs']),
    )

    curve_path = output_dir / results.CURVE_FILE
    logger.info(f'Writing sensitivity curve to {curve_path}.')
    curve.to_frame().to_csv(curve_path, index=False)
    arm_path = output_dir / results.ARM_CURVE_FILE
    logger.info(f'Writing per-arm curves to {arm_path}.')
    curve.arm_frame().to_csv(arm_path, index=False)
    for variant, breakdown in curve.to_dict()['breakdown'].items():
        logger.info(f'{variant} interval for the ACE first covers 0 at gamma {breakdown}.')

    write_summary({
        'command': 'estimate',
        'data': str(data_path),
        'constraints': [str(c) for c in constraints],
        'configuration': settings,
        'projector': projector.to_dict() if constraints else None,
        'curve': curve.to_dict(),
    }, output_dir)
    logger.info('**DONE**')


def build_bounds(data_path: str, schema_path: str, constraints_path: Optional[str],
                 output_dir: str, config: ConfigTree) -> None:
    output_dir = _prepare_output(output_dir)
    settings = config.to_dict()

    logger.info(f'Reading data from {data_path}.')
    ds = load_csv(data_path, schema_path)
    report = validate_dataset(ds)
    if not report.is_valid:
        raise ValueError('; '.join(f'{issue.column}: {issue.message}' for issue in report.errors))

    seed = int(settings['run']['seed'])
    K = int(settings['estimation']['folds'])
    rho = float(settings['ovb']['rho'])
    grid = [float(eta2) for eta2 in settings['ovb']['eta2']]
    cfg = configuration.nuisance_config(config, outcome_task=metadata.TASKS.REGRESSION)

    logger.info(f'Fitting short parameters over {K} folds.')
    fit = short_fit(ds, K, seed, cfg)
    logger.info(f'tau_s = {fit.tau_s:.4g}, sigma2_s = {fit.sigma2_s:.4g}, nu2_s = {fit.nu2_s:.4g}.')
    bounds = ovb_projected(ds, K, seed, cfg, rho=rho, eta2_grid=grid, fit=fit)

    constraints = []
    projector = None
    if constraints_path is not None:
        constraints = load_constraints(constraints_path, ds.covariate_names)
        projector = configuration.projector(config)
        logger.info(f'Projecting the short influence functions onto {len(constraints)} constraints.')
        bounds = bounds + ovb_projected(ds, K, seed, cfg, constraints, projector, rho, grid, fit=fit)

    bounds_path = output_dir / results.BOUNDS_FILE
    logger.info(f'Writing bounds to {bounds_path}.')
    bounds_frame(bounds)[results.BOUNDS_COLUMNS].to_csv(bounds_path, index=False)

    write_summary({
        'command': 'ovb',
        'data': str(data_path),
        'constraints': [str(c) for c in constraints],
        'configuration': settings,
        'projector': projector.to_dict() if projector is not None else None,
        'short_parameters': {**fit.components, 'folds': [f.estimates for f in fit.folds]},
        'bounds': [
            {**b.to_row(), 'var_tau': b.var_tau, 'projection': list(b.projection)}
            for b in bounds
        ],
    }, output_dir)
    logger.info('**DONE**')
