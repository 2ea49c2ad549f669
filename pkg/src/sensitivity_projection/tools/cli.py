from typing import Any, Dict, List, Optional

import click
from loguru import logger
from vivarium.framework.utilities import handle_exceptions

from sensitivity_projection.constants import scenarios
from sensitivity_projection.tools import (
    build_bounds,
    build_constraints,
    build_dsep,
    build_estimates,
    build_simulation,
    configure_logging_to_terminal,
)
from sensitivity_projection.tools.configuration import ConfigurationError, build_configuration


def _float_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        return [float(item) for item in value.split(',')]
    except ValueError:
        raise click.BadParameter(f'expected a comma separated list of numbers, got {value!r}.')


def _name_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    names = [item.strip() for item in value.split(',')]
    if not all(names):
        raise click.BadParameter(f'empty name in {value!r}.')
    return names


def _configure(config_file: Optional[str], overrides: Dict[str, Any], experiment: Optional[str] = None):
    try:
        return build_configuration(config_file, experiment, overrides)
    except ConfigurationError as e:
        raise click.UsageError(str(e))


def _common_options(func):
    func = click.option('--pdb', 'with_debugger',
                        is_flag=True,
                        help='Drop into python debugger if an error occurs.')(func)
    func = click.option('-v', 'verbose',
                        count=True,
                        help='Configure logging verbosity.')(func)
    return func


def _run_options(func):
    func = click.option('-o', '--output-dir',
                        default='.',
                        show_default=True,
                        type=click.Path(file_okay=False),
                        help='Directory for the output files. Created if it does not exist.')(func)
    func = click.option('--jobs', type=int, help='Worker processes. Results do not depend on it.')(func)
    func = click.option('--seed', type=int, help='Master seed for every random draw.')(func)
    func = click.option('--k', 'folds', type=int, help='Cross-fitting folds.')(func)
    func = click.option('--config', 'config_file',
                        type=click.Path(exists=True, dir_okay=False),
                        help='YAML file overriding the default configuration.')(func)
    return func


@click.group()
def sensproj():
    """Sensitivity analysis for the average causal effect with influence
    function projection onto covariate independence submodels."""
    pass


@sensproj.command()
@click.option('--dag', 'dag_path', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Graph file with "A -> B" statements.')
@click.argument('a')
@click.argument('b')
@click.option('--given', callback=_name_list, help='Comma separated conditioning set.')
@_common_options
def dsep(dag_path: str, a: str, b: str, given: Optional[List[str]], verbose: int, with_debugger: bool) -> None:
    """Tests whether A and B are d-separated given a set of vertices."""
    configure_logging_to_terminal(verbose)
    main = handle_exceptions(build_dsep, logger, with_debugger=with_debugger)
    separated = main(dag_path, a, b, given or [])
    click.echo('true' if separated else 'false')


@sensproj.command()
@click.option('--dag', 'dag_path', required=True,
              type=click.Path(exists=True, dir_okay=False),
              help='Graph file with "A -> B" statements.')
@click.option('--covariates', callback=_name_list,
              help='Comma separated covariates to enumerate over. Defaults to every vertex.')
@click.option('--max-cond', default=2, show_default=True, type=click.IntRange(min=0),
              help='Largest conditioning set size.')
@click.option('--local-markov', is_flag=True,
              help='Emit the ordered local Markov basis instead of every implied independence.')
@click.option('-o', '--output', 'output_file', type=click.Path(dir_okay=False),
              help='Constraint file to write. Printed to standard output otherwise.')
@_common_options
def constraints(dag_path: str, covariates: Optional[List[str]], max_cond: int, local_markov: bool,
                output_file: Optional[str], verbose: int, with_debugger: bool) -> None:
    """Derives covariate independence constraints from a DAG."""
    configure_logging_to_terminal(verbose)
    main = handle_exceptions(build_constraints, logger, with_debugger=with_debugger)
    text = main(dag_path, covariates, max_cond, local_markov, output_file)
    if output_file is None:
        click.echo(text, nl=False)


@sensproj.command()
@click.option('--data', 'data_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='CSV file with a header line.')
@click.option('--schema', 'schema_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='YAML mapping of column names to roles.')
@click.option('--constraints', 'constraints_path', type=click.Path(exists=True, dir_okay=False),
              help='Constraint file. Adds the projected variant.')
@click.option('--gamma', 'gammas', callback=_float_list, help='Comma separated sensitivity parameters.')
@_run_options
@_common_options
def estimate(data_path: str, schema_path: str, constraints_path: Optional[str], gammas: Optional[List[float]],
             config_file: Optional[str], folds: Optional[int], seed: Optional[int], jobs: Optional[int],
             output_dir: str, verbose: int, with_debugger: bool) -> None:
    """Estimates the sensitivity curve of the average causal effect."""
    configure_logging_to_terminal(verbose)
    config = _configure(config_file, {
        'run': {'seed': seed, 'jobs': jobs},
        'estimation': {'folds': folds, 'gammas': gammas},
    })
    main = handle_exceptions(build_estimates, logger, with_debugger=with_debugger)
    main(data_path, schema_path, constraints_path, output_dir, config)


@sensproj.command()
@click.option('--data', 'data_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='CSV file with a header line.')
@click.option('--schema', 'schema_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='YAML mapping of column names to roles.')
@click.option('--constraints', 'constraints_path', type=click.Path(exists=True, dir_okay=False),
              help='Constraint file. Adds projected bounds.')
@click.option('--eta2', callback=_float_list, help='Comma separated confounding strengths.')
@click.option('--rho', type=float, help='Correlation of the confounding errors, in [-1, 1].')
@_run_options
@_common_options
def ovb(data_path: str, schema_path: str, constraints_path: Optional[str], eta2: Optional[List[float]],
        rho: Optional[float], config_file: Optional[str], folds: Optional[int], seed: Optional[int],
        jobs: Optional[int], output_dir: str, verbose: int, with_debugger: bool) -> None:
    """Bounds the average causal effect under omitted variable bias."""
    configure_logging_to_terminal(verbose)
    config = _configure(config_file, {
        'run': {'seed': seed, 'jobs': jobs},
        'estimation': {'folds': folds},
        'ovb': {'eta2': eta2, 'rho': rho},
    })
    main = handle_exceptions(build_bounds, logger, with_debugger=with_debugger)
    main(data_path, schema_path, constraints_path, output_dir, config)


@sensproj.command()
@click.option('--spec', 'kind', required=True, type=click.Choice(scenarios.DGP_SCENARIOS.names),
              help='Data generating process to simulate.')
@click.option('--n', type=click.IntRange(min=10), help='Units per replication.')
@click.option('--reps', type=int, help='Number of replications.')
@click.option('--gamma', 'gammas', callback=_float_list, help='Comma separated gamma grid.')
@click.option('--eta2', callback=_float_list, help='Comma separated eta2 grid for the ovb process.')
@click.option('--constraints', 'constraints_path', type=click.Path(exists=True, dir_okay=False),
              help='Constraint file replacing the experiment default.')
@_run_options
@_common_options
def simulate(kind: str, n: Optional[int], reps: Optional[int], gammas: Optional[List[float]],
             eta2: Optional[List[float]], constraints_path: Optional[str], config_file: Optional[str],
             folds: Optional[int], seed: Optional[int], jobs: Optional[int], output_dir: str,
             verbose: int, with_debugger: bool) -> None:
    """Runs a Monte Carlo experiment on a simulated process."""
    configure_logging_to_terminal(verbose)
    parameter = scenarios.DGP_SCENARIOS.get(kind).parameter
    grid, unused = (eta2, ('--gamma', gammas)) if parameter == 'eta2' else (gammas, ('--eta2', eta2))
    if unused[1] is not None:
        raise click.BadParameter(f'{kind} sweeps {parameter}.', param_hint=unused[0])
    config = _configure(config_file, {
        'run': {'seed': seed, 'jobs': jobs},
        'estimation': {'folds': folds},
        'simulation': {'n': n, 'reps': reps, 'grid': grid, 'constraints': constraints_path},
    }, experiment=kind)
    main = handle_exceptions(build_simulation, logger, with_debugger=with_debugger)
    main(kind, output_dir, config)
