import json

import pandas as pd
import pytest
from click.testing import CliRunner
from loguru import logger

from sensitivity_projection.constants import results
from sensitivity_projection.data import write_csv
from sensitivity_projection.graphs import parse_constraints
from sensitivity_projection.tools.cli import sensproj

GRAPH = """
x2 -> x3
x1 -> x4; x2 -> x4
x1 -> t; x2 -> t; x3 -> t; x4 -> t
t -> y; x1 -> y; x2 -> y; x3 -> y; x4 -> y
"""

FAST_CONFIG = """
learner:
    candidates: [linear]
    cv_folds: 2
projection:
    policy: exact-discrete
    learner:
        candidates: [linear]
        cv_folds: 2
"""

SIMULATION_CONFIG = """
learner:
    candidates: [linear]
    cv_folds: 2
projection:
    max_sweeps: 3
    reference_size: 20
    learner:
        candidates: [linear]
        cv_folds: 2
"""


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    logger.remove()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / 'g.txt').write_text(GRAPH)
    (tmp_path / 'fast.yaml').write_text(FAST_CONFIG)
    (tmp_path / 'schema.yaml').write_text('t: treatment\ny: outcome\n')
    (tmp_path / 'c.txt').write_text('x1 _||_ x2\nx1 _||_ x3\n')
    return tmp_path


def test_constraints_to_stdout(runner, workspace):
    result = runner.invoke(sensproj, ['constraints', '--dag', str(workspace / 'g.txt'),
                                      '--covariates', 'x1,x2,x3,x4', '--max-cond', '1'])
    assert result.exit_code == 0, result.output
    constraints = parse_constraints(result.output)
    assert [str(c) for c in constraints] == [
        'x1 _||_ x2', 'x1 _||_ x2 | x3', 'x1 _||_ x3', 'x1 _||_ x3 | x2', 'x3 _||_ x4 | x2',
    ]


def test_constraints_to_file(runner, workspace):
    output = workspace / 'lm.txt'
    result = runner.invoke(sensproj, ['constraints', '--dag', str(workspace / 'g.txt'),
                                      '--covariates', 'x1,x2,x3,x4', '--local-markov', '-o', str(output)])
    assert result.exit_code == 0, result.output
    assert output.read_text() == 'x1 _||_ x2\nx1 _||_ x3 | x2\nx3 _||_ x4 | x1, x2\n'


def test_constraints_reject_negative_size(runner, workspace):
    result = runner.invoke(sensproj, ['constraints', '--dag', str(workspace / 'g.txt'), '--max-cond', '-1'])
    assert result.exit_code == 2


@pytest.mark.parametrize('extra, expected', [([], 'true'), (['--given', 'x4'], 'false'), (['--given', 'x3'], 'true')])
def test_dsep(runner, workspace, extra, expected):
    result = runner.invoke(sensproj, ['dsep', '--dag', str(workspace / 'g.txt'), 'x1', 'x2'] + extra)
    assert result.exit_code == 0, result.output
    assert result.output.strip().splitlines()[-1] == expected


def test_dsep_unknown_vertex_fails(runner, workspace):
    result = runner.invoke(sensproj, ['dsep', '--dag', str(workspace / 'g.txt'), 'x1', 'x9'])
    assert result.exit_code == 1


@pytest.fixture
def binary_data(workspace, discrete_observational):
    return write_csv(discrete_observational, workspace / 'd.csv')


def _estimate_args(workspace, data_path, *extra):
    return ['estimate', '--data', str(data_path), '--schema', str(workspace / 'schema.yaml'),
            '--config', str(workspace / 'fast.yaml'), '--k', '3', '--seed', '7',
            '-o', str(workspace / 'out')] + list(extra)


def test_estimate(runner, workspace, binary_data):
    result = runner.invoke(sensproj, _estimate_args(workspace, binary_data, '--gamma', '-2,0,2',
                                                    '--constraints', str(workspace / 'c.txt')))
    assert result.exit_code == 0, result.output

    curve = pd.read_csv(workspace / 'out' / results.CURVE_FILE)
    assert list(curve.columns) == results.CURVE_COLUMNS
    assert len(curve) == 3 * 2
    assert list(curve['projected']) == [False] * 3 + [True] * 3
    assert list(curve['gamma']) == [-2.0, 0.0, 2.0] * 2

    arms = pd.read_csv(workspace / 'out' / results.ARM_CURVE_FILE)
    assert list(arms.columns) == results.ARM_CURVE_COLUMNS
    assert len(arms) == 3 * 2 * 2
    assert set(arms['target']) == {'psi1', 'psi0'}

    summary = json.loads((workspace / 'out' / results.SUMMARY_FILE).read_text())
    assert summary['command'] == 'estimate'
    assert summary['constraints'] == ['x1 _||_ x2', 'x1 _||_ x3']
    assert summary['configuration']['estimation']['folds'] == 3
    assert summary['configuration']['run']['seed'] == 7
    assert summary['projector']['estimator']['policy'] == 'exact-discrete'


def test_estimate_writes_one_ace_row_per_gamma_and_variant(runner, workspace, binary_data):
    result = runner.invoke(sensproj, _estimate_args(workspace, binary_data, '--gamma', '-4,-2,0,2,4',
                                                    '--constraints', str(workspace / 'c.txt')))
    assert result.exit_code == 0, result.output
    curve = pd.read_csv(workspace / 'out' / results.CURVE_FILE)
    assert len(curve) == 10
    assert curve.groupby('projected')['gamma'].apply(list).to_dict() == {
        False: [-4.0, -2.0, 0.0, 2.0, 4.0],
        True: [-4.0, -2.0, 0.0, 2.0, 4.0],
    }


def test_estimate_is_reproducible(runner, workspace, binary_data):
    runner.invoke(sensproj, _estimate_args(workspace, binary_data, '--gamma', '0,1'))
    first = (workspace / 'out' / results.CURVE_FILE).read_text()
    runner.invoke(sensproj, _estimate_args(workspace, binary_data, '--gamma', '0,1'))
    assert (workspace / 'out' / results.CURVE_FILE).read_text() == first


@pytest.mark.parametrize('extra', [
    ['--k', '1'],
    ['--gamma', '0,abc'],
    ['--gamma', '25'],
])
def test_estimate_configuration_errors(runner, workspace, binary_data, extra):
    result = runner.invoke(sensproj, _estimate_args(workspace, binary_data, *extra))
    assert result.exit_code == 2
    assert not (workspace / 'out' / results.CURVE_FILE).exists()


def test_estimate_rejects_continuous_outcome(runner, workspace, discrete_continuous_outcome):
    data_path = write_csv(discrete_continuous_outcome, workspace / 'continuous.csv')
    result = runner.invoke(sensproj, _estimate_args(workspace, data_path))
    assert result.exit_code == 1
    assert isinstance(result.exception, ValueError)


def test_ovb(runner, workspace, discrete_continuous_outcome):
    data_path = write_csv(discrete_continuous_outcome, workspace / 'continuous.csv')
    result = runner.invoke(sensproj, [
        'ovb', '--data', str(data_path), '--schema', str(workspace / 'schema.yaml'),
        '--config', str(workspace / 'fast.yaml'), '--k', '3', '--eta2', '0.01,0.1,0.25', '--rho', '1',
        '--constraints', str(workspace / 'c.txt'), '-o', str(workspace / 'out'),
    ])
    assert result.exit_code == 0, result.output

    bounds = pd.read_csv(workspace / 'out' / results.BOUNDS_FILE)
    assert list(bounds.columns) == results.BOUNDS_COLUMNS
    assert len(bounds) == 3 * 2
    assert (bounds['tau_lo'] <= bounds['tau_hi']).all()

    summary = json.loads((workspace / 'out' / results.SUMMARY_FILE).read_text())
    assert set(summary['short_parameters']) >= {'tau_s', 'sigma2_s', 'nu2_s', 'folds'}
    assert len(summary['bounds']) == 6


def _simulate_args(workspace, config):
    return ['simulate', '--spec', 'example2', '--n', '120', '--reps', '2', '--gamma', '-1,1',
            '--config', str(workspace / config), '--k', '2', '--seed', '1', '-o', str(workspace / 'sim')]


def test_simulate(runner, workspace):
    (workspace / 'sim.yaml').write_text(SIMULATION_CONFIG)
    result = runner.invoke(sensproj, _simulate_args(workspace, 'sim.yaml'))
    assert result.exit_code == 0, result.output

    table = pd.read_csv(workspace / 'sim' / 'table.csv')
    assert list(table.columns) == results.MC_COLUMNS
    assert sorted(table['value'].unique()) == [-1.0, 1.0]
    assert (workspace / 'sim' / 'table.md').exists()

    summary = json.loads((workspace / 'sim' / results.SUMMARY_FILE).read_text())
    assert summary['valid'] is True
    assert summary['config']['simulation']['n'] == 120
    assert summary['config']['simulation']['constraints'] == 'example2.txt'


def test_simulate_reports_failed_replications(runner, workspace):
    result = runner.invoke(sensproj, _simulate_args(workspace, 'fast.yaml'))
    # exact cell means cannot handle the continuous simulated covariates
    assert result.exit_code == 1
    assert isinstance(result.exception, RuntimeError)
    summary = json.loads((workspace / 'sim' / results.SUMMARY_FILE).read_text())
    assert summary['failures'] == 2
    assert not (workspace / 'sim' / 'table.csv').exists()


def test_simulate_rejects_the_other_grid(runner, workspace):
    result = runner.invoke(sensproj, ['simulate', '--spec', 'ovb', '--gamma', '1', '-o', str(workspace / 'sim')])
    assert result.exit_code == 2
    assert '--gamma' in result.output


def test_simulate_rejects_unknown_process(runner, workspace):
    result = runner.invoke(sensproj, ['simulate', '--spec', 'example9'])
    assert result.exit_code == 2
