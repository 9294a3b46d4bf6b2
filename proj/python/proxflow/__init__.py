"""Proximal residual flows.

Arrays are (count, dim) with one sample per row. Configs are JSON strings with
the same keys as the command-line tool.
"""

from ._proxflow import (
    ConvergenceError,
    Flow,
    InvalidArgument,
    NumericalError,
    __version__,
    empirical_kl,
    empirical_w2,
    polar_project,
    sample_toy,
    train,
)

__all__ = [
    "ConvergenceError",
    "Flow",
    "InvalidArgument",
    "NumericalError",
    "__version__",
    "empirical_kl",
    "empirical_w2",
    "polar_project",
    "sample_toy",
    "train",
]
