from pathlib import Path
from typing import Optional, Sequence

from loguru import logger

from sensitivity_projection.graphs import (
    d_separated,
    format_constraints,
    implied_constraints,
    local_markov_constraints,
    parse_dag,
)


def build_dsep(dag_path: str, a: str, b: str, given: Sequence[str]) -> bool:
    g = parse_dag(Path(dag_path).read_text())
    separated = d_separated(g, a, b, given)
    logger.info(f'{a} and {b} are {"" if separated else "not "}d-separated given {list(given)}.')
    return separated


def build_constraints(dag_path: str, covariates: Optional[Sequence[str]], max_cond: int,
                      local_markov: bool, output_file: Optional[str]) -> str:
    g = parse_dag(Path(dag_path).read_text())
    covariates = list(covariates) if covariates else sorted(g.vertices)
    logger.info(f'Deriving constraints among {covariates} from {dag_path}.')
    if local_markov:
        constraints = local_markov_constraints(g, covariates)
    else:
        constraints = implied_constraints(g, covariates, max_cond)
    text = format_constraints(constraints)
    logger.info(f'Found {len(constraints)} constraints.')
    if output_file is not None:
        Path(output_file).write_text(text)
        logger.info(f'Writing constraints to {output_file}.')
    logger.info('**DONE**')
    return text
