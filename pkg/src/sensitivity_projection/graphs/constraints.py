"""Conditional independence constraints among covariates.

Constraint files hold one constraint per line::

    x1 _||_ x3 | x2, x4

``#`` starts a comment and blank lines are ignored.

"""
import itertools
import re
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from sensitivity_projection.graphs.dag import VERTEX_PATTERN, Dag, d_separated, topological_order

INDEPENDENCE_TOKEN = '_||_'
LINE_PATTERN = re.compile(r'^(?P<i>[^\s|]+)\s+_\|\|_\s+(?P<j>[^\s|]+)\s*(?:\|\s*(?P<S>.*))?$')


class ConstraintSyntaxError(ValueError):
    pass


class CiConstraint(NamedTuple):
    """X_i independent of X_j given X_S, by covariate name."""
    i: str
    j: str
    S: Tuple[str, ...] = ()

    def validate(self) -> 'CiConstraint':
        if self.i == self.j:
            raise ConstraintSyntaxError(f'A constraint needs two distinct covariates, got {self.i} twice.')
        if self.i in self.S or self.j in self.S:
            raise ConstraintSyntaxError(f'{self.i} and {self.j} must not be in the conditioning set {list(self.S)}.')
        if len(set(self.S)) != len(self.S):
            raise ConstraintSyntaxError(f'Conditioning set {list(self.S)} repeats a covariate.')
        return self

    def indices(self, names: Sequence[str]) -> Tuple[int, int, Tuple[int, ...]]:
        """Resolves the constraint against an ordered list of covariate names."""
        names = list(names)
        missing = [name for name in (self.i, self.j) + self.S if name not in names]
        if missing:
            raise ConstraintSyntaxError(f'Constraint {self} references unknown covariates {missing}.')
        return names.index(self.i), names.index(self.j), tuple(names.index(name) for name in self.S)

    @property
    def covariates(self) -> Tuple[str, ...]:
        return (self.i, self.j) + self.S

    def __str__(self):
        text = f'{self.i} {INDEPENDENCE_TOKEN} {self.j}'
        if self.S:
            text += f' | {", ".join(self.S)}'
        return text


def parse_constraints(text: str, names: Optional[Sequence[str]] = None) -> List[CiConstraint]:
    """Parses a constraint file.

    Parameters
    ----------
    text
        Constraint file contents.
    names
        Optional registry of known covariate names. When given, every name
        in the file must be in it.

    Returns
    -------
        The constraints in file order.

    """
    constraints = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        match = LINE_PATTERN.match(line)
        if not match:
            raise ConstraintSyntaxError(f'Line {line_number}: expected "<name> {INDEPENDENCE_TOKEN} <name> '
                                        f'[| <name>, ...]", got {line!r}.')
        conditioning = match.group('S')
        if conditioning is not None:
            S = tuple(name.strip() for name in conditioning.split(','))
            if not all(S):
                raise ConstraintSyntaxError(f'Line {line_number}: empty name in conditioning set {conditioning!r}.')
        else:
            S = ()
        constraint = CiConstraint(match.group('i'), match.group('j'), S)
        for name in constraint.covariates:
            if not VERTEX_PATTERN.match(name):
                raise ConstraintSyntaxError(f'Line {line_number}: invalid covariate name {name!r}.')
            if names is not None and name not in names:
                raise ConstraintSyntaxError(f'Line {line_number}: unknown covariate {name}. '
                                            f'Known covariates: {list(names)}.')
        try:
            constraints.append(constraint.validate())
        except ConstraintSyntaxError as e:
            raise ConstraintSyntaxError(f'Line {line_number}: {e}')
    return constraints


def load_constraints(path: Union[str, Path], names: Optional[Sequence[str]] = None) -> List[CiConstraint]:
    return parse_constraints(Path(path).read_text(), names)


def format_constraints(constraints: Iterable[CiConstraint]) -> str:
    return ''.join(f'{constraint}\n' for constraint in constraints)


###########################
# Constraints from graphs #
###########################

def implied_constraints(g: Dag, covariates: Iterable[str], max_cond: int = 2) -> List[CiConstraint]:
    """Every covariate independence the graph implies with a small conditioning set.

    Parameters
    ----------
    g
        The causal graph, possibly with vertices beyond the covariates.
    covariates
        Vertices among which constraints are enumerated.
    max_cond
        Largest conditioning set size considered.

    Returns
    -------
        Constraints with ``i < j`` and ``S`` sorted, in lexicographic order.

    """
    if max_cond < 0:
        raise ValueError(f'max_cond must be non-negative, got {max_cond}.')
    covariates = sorted(set(covariates))
    g.check(*covariates)

    constraints = []
    for i, j in itertools.combinations(covariates, 2):
        others = [vertex for vertex in covariates if vertex not in (i, j)]
        for size in range(min(max_cond, len(others)) + 1):
            for S in itertools.combinations(others, size):
                if d_separated(g, i, j, S):
                    constraints.append(CiConstraint(i, j, S))
    return sorted(constraints)


def local_markov_constraints(g: Dag, covariates: Iterable[str],
                             order: Optional[Sequence[str]] = None) -> List[CiConstraint]:
    """A constraint basis whose projections can be applied in a single sweep.

    Covariates are visited in topological order. For each covariate ``v``,
    earlier covariates are dropped one at a time from its conditioning set
    whenever the graph makes ``v`` independent of the dropped one given the
    covariates still kept. Each resulting constraint restricts only the
    factor p(x_v | earlier covariates), so the constraints' orthogonal
    complements are mutually orthogonal.

    """
    covariates = set(covariates)
    g.check(*covariates)
    if order is None:
        order = [vertex for vertex in topological_order(g) if vertex in covariates]
    else:
        order = list(order)
        if set(order) != covariates:
            raise ValueError(f'Order {order} must list each covariate exactly once.')
        positions = {vertex: index for index, vertex in enumerate(order)}
        for vertex in order:
            for ancestor in g.ancestors([vertex]) & covariates:
                if positions[ancestor] > positions[vertex]:
                    raise ValueError(f'Order {order} puts {vertex} before its ancestor {ancestor}.')

    constraints = []
    for position, vertex in enumerate(order):
        kept = list(order[:position])
        for earlier in order[:position]:
            rest = [other for other in kept if other != earlier]
            if d_separated(g, vertex, earlier, rest):
                i, j = sorted((vertex, earlier))
                constraints.append(CiConstraint(i, j, tuple(sorted(rest))))
                kept = rest
    return constraints
