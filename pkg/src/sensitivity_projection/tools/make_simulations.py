from pathlib import Path

from loguru import logger
from layered_config_tree import LayeredConfigTree as ConfigTree

from sensitivity_projection.constants import metadata, scenarios
from sensitivity_projection.graphs import load_constraints
from sensitivity_projection.results_processing import emit_table, write_summary
from sensitivity_projection.simulation import COVARIATE_NAMES, run_mc
from sensitivity_projection.tools import configuration


def build_simulation(kind: str, output_dir: str, config: ConfigTree) -> None:
    """Runs one Monte Carlo experiment and writes its tables and summary.

    Parameters
    ----------
    kind
        Name of the data generating process.
    output_dir
        Directory for ``table.csv``, ``table.md`` and ``summary.json``.
        Created if it doesn't exist.
    config
        Run configuration with the experiment spec layered in.

    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    settings = config.to_dict()
    scenario = scenarios.DGP_SCENARIOS.get(kind)
    simulation = settings['simulation']

    constraint_file = simulation.get('constraints', scenario.constraint_file)
    constraints = load_constraints(configuration.constraint_path(constraint_file), COVARIATE_NAMES)
    logger.info(f'Projecting onto {len(constraints)} constraints from {constraint_file}.')

    if scenario.parameter == 'eta2':
        grid = [float(eta2) for eta2 in simulation.get('grid', settings['ovb']['eta2'])]
    else:
        grid = [float(gamma) for gamma in simulation.get('grid', settings['estimation']['gammas'])]
    task = metadata.TASKS.PROBABILITY if scenario.binary_outcome else metadata.TASKS.REGRESSION

    report = run_mc(
        kind,
        grid=grid,
        reps=int(simulation['reps']),
        K=int(settings['estimation']['folds']),
        constraints=constraints,
        projector=configuration.projector(config),
        cfg=configuration.nuisance_config(config, outcome_task=task),
        n=int(simulation.get('n', scenario.n)),
        seed=int(settings['run']['seed']),
        n_jobs=int(settings['run']['jobs']),
        rho=float(settings['ovb']['rho']),
    )
    report = report._replace(config=settings)

    write_summary(report.to_dict(), output_dir)
    if not report.rows.empty:
        emit_table(report, output_dir)
    if not report.valid:
        raise RuntimeError(f'{report.failures} of {report.reps} replications of {kind} failed.')
    logger.info('**DONE**')
