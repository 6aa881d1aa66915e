"""Numerical laboratory for discrete singular Radon transforms along polynomial maps."""

__version__ = "0.1.0"

from .poly_map import PCube, PolynomialMap, check_condition_C, dilate_cube, probe_condition_L, rho  # noqa: E402
from .lattice_fn import LatticeFunction, SampledMultiplier, dft, idft, local_average, lp_norm, pair  # noqa: E402
from .kernels import CZKernel, kernel_from_spec, make_kernel, verify_cz_bounds  # noqa: E402
from .transform import BudgetExceeded, TruncatedTransform, estimate_operator_norm, maximal  # noqa: E402
from .sparse import (  # noqa: E402
    SparseCollection,
    build_sparse_collection,
    sparse_form,
    sparse_ratio,
    verify_sparsity,
)

__all__ = [
    "__version__", "PCube", "PolynomialMap", "check_condition_C", "dilate_cube", "probe_condition_L", "rho",
    "LatticeFunction", "SampledMultiplier", "dft", "idft", "local_average", "lp_norm", "pair",
    "CZKernel", "kernel_from_spec", "make_kernel", "verify_cz_bounds",
    "BudgetExceeded", "TruncatedTransform", "estimate_operator_norm", "maximal",
    "SparseCollection", "build_sparse_collection", "sparse_form", "sparse_ratio", "verify_sparsity",
]
