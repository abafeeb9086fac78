"""Soft-core Widom-Rowlinson model on Cayley trees under spin-flip dynamics."""

from .dynamics import make_kernel
from .regime import classify
from .static_model import InconsistencyError, ModelParams, ParameterError
from .tree import SpinConfiguration, TreeTruncation, build_truncation

__version__ = "0.1.0"

__all__ = [
    "InconsistencyError",
    "ModelParams",
    "ParameterError",
    "SpinConfiguration",
    "TreeTruncation",
    "build_truncation",
    "classify",
    "make_kernel",
]
