import json
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader
from loguru import logger

from sensitivity_projection.constants import data_values, paths, results

TABLE_TEMPLATE = 'table.md.j2'
TABLE_FORMATS = ('csv', 'markdown')
COUNT_COLUMNS = ['n', 'reps', 'failures']


class McReport(NamedTuple):
    rows: pd.DataFrame
    kind: str
    n: int
    reps: int
    failures: int
    seed: int
    wall_time: float = 0.0
    failure_messages: Tuple[str, ...] = ()
    config: Optional[Dict[str, Any]] = None

    @property
    def valid(self) -> bool:
        return (self.reps > self.failures
                and self.failures <= data_values.MONTE_CARLO.MAX_FAILURE_FRACTION * self.reps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'n': self.n,
            'reps': self.reps,
            'failures': self.failures,
            'valid': self.valid,
            'seed': self.seed,
            'wall_time': self.wall_time,
            'failure_messages': list(self.failure_messages),
            'config': self.config,
            'rows': self.rows.to_dict(orient='records'),
        }


def aggregate_replications(replications: Sequence[Optional[List[Dict[str, Any]]]]) -> pd.DataFrame:
    """Means over successful replications of each keyed row.

    ``replications`` holds one list of row records per replication, or
    ``None`` for a failed one. Rows are keyed by kind, n, parameter, value,
    variant and target and sorted by those keys.

    """
    failures = sum(r is None for r in replications)
    records = [row for r in replications if r is not None for row in r]
    if not records:
        return pd.DataFrame(columns=results.MC_COLUMNS)
    data = pd.DataFrame(records)
    grouped = data.groupby(results.MC_KEY_COLUMNS, sort=True)
    out = pd.DataFrame({
        'mean_estimate': grouped['estimate'].mean(),
        'mean_variance': grouped['variance'].mean(),
        'reps': grouped['estimate'].size(),
        'failures': failures,
        'mean_sweeps': grouped['sweeps'].mean(),
    }).reset_index()
    return out[results.MC_COLUMNS]


def format_table(data: pd.DataFrame) -> pd.DataFrame:
    """Renders estimates to four significant digits and variances to four decimals."""
    out = data.copy()
    for column in out.columns:
        if column in results.ESTIMATE_COLUMNS:
            out[column] = out[column].map(results.ESTIMATE_FORMAT.format)
        elif column in results.VARIANCE_COLUMNS:
            out[column] = out[column].map(results.VARIANCE_FORMAT.format)
        elif column in COUNT_COLUMNS:
            out[column] = out[column].astype(int).astype(str)
        else:
            out[column] = out[column].astype(str)
    return out


def render_markdown(data: pd.DataFrame) -> str:
    environment = Environment(loader=FileSystemLoader(str(paths.TEMPLATES_DIR)))
    template = environment.get_template(TABLE_TEMPLATE)
    formatted = format_table(data)
    return template.render(columns=list(formatted.columns), rows=formatted.values.tolist())


def emit_table(report: McReport, output_dir: Union[str, Path],
               formats: Sequence[str] = TABLE_FORMATS) -> List[Path]:
    if report.rows.empty:
        raise ValueError(f'Report for {report.kind} has no rows to emit.')
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table_format in formats:
        if table_format == 'csv':
            path = output_dir / f'{results.TABLE_FILE}.csv'
            format_table(report.rows).to_csv(path, index=False)
        elif table_format == 'markdown':
            path = output_dir / f'{results.TABLE_FILE}.md'
            path.write_text(render_markdown(report.rows))
        else:
            raise ValueError(f'Unknown table format {table_format}. Expected one of {TABLE_FORMATS}.')
        logger.info(f'Writing {table_format} table to {path}.')
        written.append(path)
    return written


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set, frozenset)):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'Cannot serialise {type(value).__name__} to JSON.')


def write_summary(summary: Dict[str, Any], output_dir: Union[str, Path]) -> Path:
    path = Path(output_dir) / results.SUMMARY_FILE
    with path.open('w') as f:
        json.dump(summary, f, indent=2, default=_to_builtin, allow_nan=True)
    logger.info(f'Writing run summary to {path}.')
    return path
