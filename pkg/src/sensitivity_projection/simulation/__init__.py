from .dgp import COVARIATE_NAMES, DgpSpec, TruthRecord, generate
from .runner import run_mc, run_replication
