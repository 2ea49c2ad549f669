from .loader import (
    Dataset,
    DatasetError,
    DomainError,
    ParseError,
    SchemaError,
    ValidationReport,
    build_dataset,
    load_csv,
    load_schema,
    validate_dataset,
    write_csv,
)
from .folds import FoldAssignment, InfeasibleSplitError, assign_folds
