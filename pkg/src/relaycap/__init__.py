"""Outage and adaptive-policy capacity for multihop relayed fading channels."""

from .errors import RelayCapError
from .foxh import (
    ContourSpec,
    HParams,
    eval_h,
    eval_h_cdf_kernel,
    log_gamma_complex,
    mellin_moment,
    select_contour,
)

__version__ = "0.1.0"

__all__ = [
    "RelayCapError",
    "ContourSpec",
    "HParams",
    "eval_h",
    "eval_h_cdf_kernel",
    "log_gamma_complex",
    "mellin_moment",
    "select_contour",
    "__version__",
]
