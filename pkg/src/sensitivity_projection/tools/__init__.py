from .app_logging import add_logging_sink, configure_logging_to_terminal
from .make_constraints import build_constraints, build_dsep
from .make_estimates import build_bounds, build_estimates
from .make_simulations import build_simulation
