from .dag import (
    AcyclicityError,
    Dag,
    GraphError,
    UnknownVertexError,
    d_separated,
    d_separated_moral,
    make_dag,
    parse_dag,
    topological_order,
)
from .constraints import (
    CiConstraint,
    ConstraintSyntaxError,
    format_constraints,
    implied_constraints,
    load_constraints,
    local_markov_constraints,
    parse_constraints,
)
