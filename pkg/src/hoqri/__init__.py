"""Low multilinear rank (Tucker) approximation of sparse tensors with HOQRI."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ContractError,
    DegenerateStateError,
    DiagnosticError,
    HoqriError,
    ParseError,
    ShapeError,
)
from .sparse_tensor import SparseTensor, build_mode_buckets, load_tns, norm_sq, write_tns
from .kernels import ttmc_core, ttmc_unfold_dense, ttmctc_elementwise, ttmctc_matrix
from .solvers import (
    IterationTrace,
    SolverConfig,
    TuckerModel,
    check_descent_inequality,
    fit_error,
    hooi,
    hoqri,
    init_factors,
)

__all__ = [
    "CapacityError",
    "ContractError",
    "DegenerateStateError",
    "DiagnosticError",
    "HoqriError",
    "IterationTrace",
    "ParseError",
    "ShapeError",
    "SolverConfig",
    "SparseTensor",
    "TuckerModel",
    "build_mode_buckets",
    "check_descent_inequality",
    "fit_error",
    "hooi",
    "hoqri",
    "init_factors",
    "load_tns",
    "norm_sq",
    "ttmc_core",
    "ttmc_unfold_dense",
    "ttmctc_elementwise",
    "ttmctc_matrix",
    "write_tns",
]
