from pathlib import Path

import sensitivity_projection

BASE_DIR = Path(sensitivity_projection.__file__).resolve().parent

MODEL_SPEC_DIR = BASE_DIR / "model_specifications"
CONSTRAINTS_DIR = MODEL_SPEC_DIR / "constraints"
GRAPHS_DIR = MODEL_SPEC_DIR / "graphs"
TEMPLATES_DIR = BASE_DIR / "results_processing" / "templates"

DEFAULTS_SPEC = MODEL_SPEC_DIR / "defaults.yaml"
