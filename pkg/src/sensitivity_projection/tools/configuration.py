"""Layered run configuration.

Values come from ``model_specifications/defaults.yaml``, then an experiment
spec, then a user ``--config`` file, then command line flags, each layer
overriding the ones before it.

"""
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml
from layered_config_tree import LayeredConfigTree as ConfigTree

from sensitivity_projection.constants import data_values, metadata, paths, scenarios
from sensitivity_projection.estimation import AlternatingProjector, CondMeanEstimator, NuisanceConfig
from sensitivity_projection.learners import LearnerConfig

LAYERS = ['base', 'experiment', 'config_file', 'command_line']


class ConfigurationError(ValueError):
    pass


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f'Configuration file {path} does not exist.')
    with path.open() as f:
        data = yaml.full_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f'Configuration file {path} must hold a mapping at the top level.')
    return data


def _prune(overrides: Mapping[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in overrides.items():
        if isinstance(value, Mapping):
            value = _prune(value)
            if value:
                out[key] = value
        elif value is not None:
            out[key] = list(value) if isinstance(value, tuple) else value
    return out


def build_configuration(config_file: Optional[Union[str, Path]] = None,
                        experiment: Optional[str] = None,
                        overrides: Optional[Mapping[str, Any]] = None) -> ConfigTree:
    """Builds and validates the layered configuration of one run.

    Parameters
    ----------
    config_file
        Optional user YAML file.
    experiment
        Optional name of a simulation experiment whose spec is layered in.
    overrides
        Nested mapping of command line values. ``None`` leaves are skipped.

    Returns
    -------
        The validated configuration tree.

    """
    config = ConfigTree(layers=LAYERS)
    config.update(load_yaml(paths.DEFAULTS_SPEC), layer='base', source=str(paths.DEFAULTS_SPEC))
    if experiment is not None:
        try:
            spec_path = scenarios.DGP_SCENARIOS.get(experiment).spec_path
        except ValueError as e:
            raise ConfigurationError(str(e))
        config.update(load_yaml(spec_path), layer='experiment', source=str(spec_path))
    if config_file is not None:
        config.update(load_yaml(config_file), layer='config_file', source=str(config_file))
    overrides = _prune(overrides or {})
    if overrides:
        config.update(overrides, layer='command_line', source='command_line')
    validate_configuration(config)
    return config


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


def validate_configuration(config: ConfigTree) -> None:
    settings = config.to_dict()
    estimation = settings['estimation']
    projection = settings['projection']

    _check(int(settings['run']['seed']) >= 0, f'seed must be non-negative, got {settings["run"]["seed"]}.')
    _check(int(settings['run']['jobs']) != 0, 'jobs must be a positive worker count or negative for all cores.')
    _check(int(estimation['folds']) >= 2, f'K must be at least 2, got {estimation["folds"]}.')
    for gamma in estimation['gammas']:
        _check(abs(float(gamma)) <= data_values.MAX_ABS_GAMMA,
               f'gamma values must satisfy |gamma| <= {data_values.MAX_ABS_GAMMA}, got {gamma}.')
    lo, hi = estimation['propensity_truncation']
    _check(0 < float(lo) < float(hi) < 1,
           f'Propensity truncation bounds must satisfy 0 < lo < hi < 1, got {[lo, hi]}.')

    _check(projection['policy'] in metadata.COND_MEAN_POLICIES,
           f'Unknown projection policy {projection["policy"]}. '
           f'Expected one of {list(metadata.COND_MEAN_POLICIES)}.')
    _check(projection['fit_sample'] in metadata.FIT_SAMPLES,
           f'Unknown fit sample {projection["fit_sample"]}. Expected one of {list(metadata.FIT_SAMPLES)}.')
    _check(float(projection['eps']) > 0, f'eps must be positive, got {projection["eps"]}.')
    _check(int(projection['max_sweeps']) >= 1, f'max_sweeps must be at least 1, got {projection["max_sweeps"]}.')
    _check(int(projection['reference_size']) == 0 or int(projection['reference_size']) >= 2,
           f'reference_size must be 0 or at least 2, got {projection["reference_size"]}.')

    _check(-1.0 <= float(settings['ovb']['rho']) <= 1.0, f'rho must lie in [-1, 1], got {settings["ovb"]["rho"]}.')
    for eta2 in settings['ovb']['eta2']:
        _check(0.0 <= float(eta2) < 1.0, f'eta2 values must lie in [0, 1), got {eta2}.')

    simulation = settings['simulation']
    _check(int(simulation['reps']) >= 1, f'reps must be at least 1, got {simulation["reps"]}.')
    if 'constraints' in simulation:
        constraint_path(simulation['constraints'])

    for section in (settings['learner'], projection['learner']):
        try:
            LearnerConfig.from_dict(section)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f'Invalid learner configuration: {e}')


####################
# Derived settings #
####################

def constraint_path(name: Union[str, Path]) -> Path:
    """A constraint file given either as a path or by name among the shipped fixtures."""
    path = Path(name)
    if path.exists():
        return path
    shipped = paths.CONSTRAINTS_DIR / str(name)
    if shipped.exists():
        return shipped
    raise ConfigurationError(f'Constraint file {name} does not exist.')


def gammas(config: ConfigTree) -> List[float]:
    return [float(g) for g in config.to_dict()['estimation']['gammas']]


def nuisance_config(config: ConfigTree, outcome_task: str = metadata.TASKS.PROBABILITY) -> NuisanceConfig:
    settings = config.to_dict()
    lo, hi = settings['estimation']['propensity_truncation']
    return NuisanceConfig(
        learner=LearnerConfig.from_dict(settings['learner']),
        trunc=(float(lo), float(hi)),
        outcome_task=outcome_task,
    )


def projector(config: ConfigTree) -> AlternatingProjector:
    settings = config.to_dict()
    projection = settings['projection']
    estimator = CondMeanEstimator(
        policy=projection['policy'],
        learner=LearnerConfig.from_dict(projection['learner']),
        seed=int(settings['run']['seed']),
        max_levels=int(projection['max_levels']),
        batch_size=int(projection['batch_size']),
        reference_size=int(projection['reference_size']) or None,
    )
    return AlternatingProjector(
        estimator=estimator,
        eps=float(projection['eps']),
        max_sweeps=int(projection['max_sweeps']),
        fit_sample=projection['fit_sample'],
    )
