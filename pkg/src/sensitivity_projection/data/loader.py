"""Loads, validates and writes observational datasets.

A dataset is a dense covariate matrix with named columns, a binary treatment
and a real outcome. Missing or non-numeric cells are rejected rather than
imputed.

"""
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from loguru import logger

from sensitivity_projection.constants import metadata


class DatasetError(ValueError):
    """Base error for malformed datasets."""


class SchemaError(DatasetError):
    pass


class ParseError(DatasetError):
    pass


class DomainError(DatasetError):
    pass


class Dataset(NamedTuple):
    covariates: np.ndarray
    covariate_names: Tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray
    treatment_name: str = 't'
    outcome_name: str = 'y'

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise SchemaError(f'Unknown covariate {name}. Known covariates: {list(self.covariate_names)}.')

    def columns(self, names: Sequence[str]) -> np.ndarray:
        """Covariate matrix restricted to ``names``, in the order given."""
        return self.covariates[:, [self.column_index(name) for name in names]]

    def subset(self, index: Union[np.ndarray, Sequence[int]]) -> 'Dataset':
        index = np.asarray(index)
        return self._replace(
            covariates=np.asfortranarray(self.covariates[index]),
            treatment=self.treatment[index],
            outcome=self.outcome[index],
        )

    def to_frame(self) -> pd.DataFrame:
        data = pd.DataFrame(self.covariates, columns=list(self.covariate_names))
        data[self.treatment_name] = self.treatment.astype(int)
        data[self.outcome_name] = self.outcome
        return data


def build_dataset(covariates: np.ndarray,
                  treatment: np.ndarray,
                  outcome: np.ndarray,
                  covariate_names: Optional[Sequence[str]] = None,
                  treatment_name: str = 't',
                  outcome_name: str = 'y') -> Dataset:
    """Builds a :class:`Dataset`, enforcing its invariants.

    Parameters
    ----------
    covariates
        An n x p real matrix.
    treatment
        n values in {0, 1}.
    outcome
        n real values.
    covariate_names
        p unique labels. Defaults to ``x1 ... xp``.

    Returns
    -------
        The validated dataset. Covariates are stored column-major.

    """
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, np.newaxis]
    treatment = np.asarray(treatment)
    outcome = np.asarray(outcome, dtype=float)
    n, p = covariates.shape

    if n < 1:
        raise DatasetError('A dataset needs at least one unit.')
    if p < 1:
        raise DatasetError('A dataset needs at least one covariate.')
    if treatment.shape != (n,) or outcome.shape != (n,):
        raise DatasetError(f'Treatment and outcome must have {n} entries to match the covariates, '
                           f'got {treatment.shape} and {outcome.shape}.')

    if covariate_names is None:
        covariate_names = [f'x{i + 1}' for i in range(p)]
    covariate_names = tuple(str(name) for name in covariate_names)
    if len(covariate_names) != p:
        raise SchemaError(f'Expected {p} covariate names, got {len(covariate_names)}.')
    if len(set(covariate_names)) != p:
        duplicates = sorted({name for name in covariate_names if covariate_names.count(name) > 1})
        raise SchemaError(f'Covariate names must be unique. Duplicated: {duplicates}.')

    if not np.all(np.isfinite(covariates)):
        row, col = np.argwhere(~np.isfinite(covariates))[0]
        raise DomainError(f'Non-finite covariate {covariate_names[col]} in row {row + 1}.')
    if not np.all(np.isfinite(outcome)):
        row = np.flatnonzero(~np.isfinite(outcome))[0]
        raise DomainError(f'Non-finite outcome in row {row + 1}.')
    treatment_float = treatment.astype(float)
    bad_treatment = ~np.isin(treatment_float, (0.0, 1.0))
    if bad_treatment.any():
        row = np.flatnonzero(bad_treatment)[0]
        raise DomainError(f'Treatment value {treatment[row]} in row {row + 1} is outside {{0, 1}}.')

    return Dataset(
        covariates=np.asfortranarray(covariates),
        covariate_names=covariate_names,
        treatment=treatment_float.astype(np.int8),
        outcome=outcome,
        treatment_name=treatment_name,
        outcome_name=outcome_name,
    )


###########
# Schemas #
###########

def load_schema(path: Union[str, Path]) -> Dict[str, str]:
    """Reads a column-role mapping from YAML.

    The file may hold the mapping at the top level or under a ``columns`` key.

    """
    path = Path(path)
    with path.open() as f:
        schema = yaml.safe_load(f) or {}
    if isinstance(schema, dict) and 'columns' in schema:
        schema = schema['columns']
    if not isinstance(schema, dict):
        raise SchemaError(f'Schema file {path} must map column names to roles.')
    return {str(column): str(role) for column, role in schema.items()}


def resolve_schema(header: Sequence[str], schema: Mapping[str, str]) -> Dict[str, List[str]]:
    roles = metadata.COLUMN_ROLES
    unknown_roles = {role for role in schema.values() if role not in roles.all}
    if unknown_roles:
        raise SchemaError(f'Unknown column roles {sorted(unknown_roles)}. Expected one of {list(roles.all)}.')
    missing = [column for column in schema if column not in header]
    if missing:
        raise SchemaError(f'Schema columns {missing} are not present in the header {list(header)}.')

    resolved = {role: [] for role in roles.all}
    for column in header:
        resolved[schema.get(column, roles.COVARIATE)].append(column)

    for role in (roles.TREATMENT, roles.OUTCOME):
        if len(resolved[role]) != 1:
            raise SchemaError(f'Schema must name exactly one {role} column, got {resolved[role]}.')
    if not resolved[roles.COVARIATE]:
        raise SchemaError('Schema leaves no covariate columns.')
    return resolved


#######
# CSV #
#######

def load_csv(path: Union[str, Path], schema: Union[Mapping[str, str], str, Path]) -> Dataset:
    """Loads a dataset from a headed CSV file.

    Parameters
    ----------
    path
        CSV file with a header line.
    schema
        Column-role mapping, or a path to a YAML file holding one. Columns
        the schema does not mention are covariates.

    Returns
    -------
        The dataset, with rows in file order.

    """
    path = Path(path)
    if not isinstance(schema, Mapping):
        schema = load_schema(schema)
    if not path.exists():
        raise SchemaError(f'Data file {path} does not exist.')

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    roles = resolve_schema(list(raw.columns), schema)
    columns = (roles[metadata.COLUMN_ROLES.COVARIATE]
               + roles[metadata.COLUMN_ROLES.TREATMENT]
               + roles[metadata.COLUMN_ROLES.OUTCOME])

    parsed = raw[columns].apply(pd.to_numeric, errors='coerce')
    bad = parsed.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        column = columns[col]
        raise ParseError(f'Could not parse value {raw[column].iloc[row]!r} in column {column}, '
                         f'row {row + 1} (line {row + 2}) of {path}.')

    treatment_column = roles[metadata.COLUMN_ROLES.TREATMENT][0]
    outcome_column = roles[metadata.COLUMN_ROLES.OUTCOME][0]
    covariate_columns = roles[metadata.COLUMN_ROLES.COVARIATE]
    logger.debug(f'Loaded {len(parsed)} rows from {path} with covariates {covariate_columns}.')
    return build_dataset(
        covariates=parsed[covariate_columns].to_numpy(dtype=float),
        treatment=parsed[treatment_column].to_numpy(dtype=float),
        outcome=parsed[outcome_column].to_numpy(dtype=float),
        covariate_names=covariate_columns,
        treatment_name=treatment_column,
        outcome_name=outcome_column,
    )


def write_csv(ds: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    ds.to_frame().to_csv(path, index=False, float_format='%.17g')
    return path


##############
# Validation #
##############

class ValidationIssue(NamedTuple):
    severity: str
    column: str
    message: str


class ValidationReport(NamedTuple):
    issues: Tuple[ValidationIssue, ...] = ()

    @property
    def errors(self) -> List[ValidationIssue]:
        return [issue for issue in self.issues if issue.severity == 'error']

    @property
    def warnings(self) -> List[ValidationIssue]:
        return [issue for issue in self.issues if issue.severity == 'warning']

    @property
    def is_valid(self) -> bool:
        return not self.errors

    def __len__(self):
        return len(self.issues)


def validate_dataset(ds: Dataset, require_binary_outcome: bool = False) -> ValidationReport:
    """Lists everything wrong with a dataset instead of raising.

    Non-finite values and, when required, non-binary outcomes are errors.
    Constant covariate columns are warnings.

    """
    issues = []
    for col, name in enumerate(ds.covariate_names):
        column = ds.covariates[:, col]
        finite = np.isfinite(column)
        if not finite.all():
            issues.append(ValidationIssue('error', name, f'{np.sum(~finite)} non-finite values.'))
        elif ds.n > 1 and np.all(column == column[0]):
            issues.append(ValidationIssue('warning', name, f'Constant column with value {column[0]}.'))

    if not np.all(np.isin(ds.treatment, (0, 1))):
        issues.append(ValidationIssue('error', ds.treatment_name, 'Treatment values outside {0, 1}.'))

    finite_outcome = np.isfinite(ds.outcome)
    if not finite_outcome.all():
        issues.append(ValidationIssue('error', ds.outcome_name,
                                      f'{np.sum(~finite_outcome)} non-finite values.'))
    if require_binary_outcome:
        non_binary = ~np.isin(ds.outcome, (0.0, 1.0))
        if non_binary.any():
            rows = (np.flatnonzero(non_binary)[:5] + 1).tolist()
            issues.append(ValidationIssue('error', ds.outcome_name,
                                          f'{non_binary.sum()} non-binary outcome values, first in rows {rows}.'))

    for issue in issues:
        if issue.severity == 'warning':
            logger.warning(f'{issue.column}: {issue.message}')
    return ValidationReport(tuple(issues))
