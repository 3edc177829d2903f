"""Second-moment estimators for stationary Gaussian processes, their
Berry-Esseen bounds, and a Monte Carlo harness to check them."""

from gpmoments.errors import (
    GPMomentsError,
    InvalidInputError,
    NotEmbeddableError,
    NotPositiveDefiniteError,
    NumericFailureError,
    OutOfRangeError,
)
from gpmoments.kernels import (
    ExpOU,
    FOU1Stationary,
    GenCauchy,
    Kernel,
    Tabulated,
    kernel_from_dict,
    lp_integral,
    rho_eval,
    sigma_z_sq,
    var_VT,
)
from gpmoments.sampler import GridSpec, Path, SeedSpec

__version__ = "0.1.0"

__all__ = [
    "ExpOU", "FOU1Stationary", "GenCauchy", "GPMomentsError", "GridSpec", "InvalidInputError",
    "Kernel", "NotEmbeddableError", "NotPositiveDefiniteError", "NumericFailureError",
    "OutOfRangeError", "Path", "SeedSpec", "Tabulated", "kernel_from_dict", "lp_integral",
    "rho_eval", "sigma_z_sq", "var_VT",
]
