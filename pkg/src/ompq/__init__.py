"""Orthogonality-guided mixed-precision bit allocation."""

from .allocator import (
    AllocationProblem,
    allocate,
    build_problem,
    choose_method,
    group_problem,
    integerize_dfs,
    integerize_round,
    layer_size_mb,
    objective_coefficients,
    solve_continuous,
)
from .core import (
    ALLOCATION_METHODS,
    IMPORTANCE_FUNCTIONS,
    AllocationResult,
    FeatureMatrix,
    GramMatrix,
    ImportanceVector,
    LayerDescriptor,
    ModelDescriptor,
    OrmMatrix,
    validate_feature_set,
)
from .errors import (
    BadMagic,
    DimMismatch,
    DuplicateName,
    FormatError,
    Infeasible,
    MissingLayer,
    MixedPinInGroup,
    NonFiniteValue,
    OmpqError,
    OrderMismatch,
    SampleMismatch,
    Truncated,
    UnknownLayer,
    UnsupportedVersion,
    ValidationError,
    ZeroFeature,
)
from .model_io import (
    read_descriptor,
    read_dump,
    read_orm_csv,
    write_descriptor,
    write_dump,
    write_orm_csv,
    write_report,
)
from .orm import (
    compute_orm_matrix,
    coupling_sums,
    gram,
    gram_norm,
    importance,
    orm_matrix,
    orm_pair_gram,
    orm_pair_norm,
    select_strategy,
)

__version__ = "0.1.0"

__all__ = [
    "ALLOCATION_METHODS",
    "IMPORTANCE_FUNCTIONS",
    "AllocationProblem",
    "AllocationResult",
    "BadMagic",
    "DimMismatch",
    "DuplicateName",
    "FeatureMatrix",
    "FormatError",
    "GramMatrix",
    "ImportanceVector",
    "Infeasible",
    "LayerDescriptor",
    "MissingLayer",
    "MixedPinInGroup",
    "ModelDescriptor",
    "NonFiniteValue",
    "OmpqError",
    "OrderMismatch",
    "OrmMatrix",
    "SampleMismatch",
    "Truncated",
    "UnknownLayer",
    "UnsupportedVersion",
    "ValidationError",
    "ZeroFeature",
    "allocate",
    "build_problem",
    "choose_method",
    "compute_orm_matrix",
    "coupling_sums",
    "gram",
    "gram_norm",
    "group_problem",
    "importance",
    "integerize_dfs",
    "integerize_round",
    "layer_size_mb",
    "objective_coefficients",
    "orm_matrix",
    "orm_pair_gram",
    "orm_pair_norm",
    "read_descriptor",
    "read_dump",
    "read_orm_csv",
    "select_strategy",
    "solve_continuous",
    "validate_feature_set",
    "write_descriptor",
    "write_dump",
    "write_orm_csv",
    "write_report",
]
