"""Nonlinear instrumental-variables regression with linear extrapolation."""
from .data import Dataset, DataFormatError, read_csv, write_csv
from .estimator import NileFit, NileOptions, nile_fit, predict
from .ivtests import TestKind, TestReport
from .splines import SplineBasis, make_cubic_basis

__all__ = [
    "Dataset",
    "DataFormatError",
    "NileFit",
    "NileOptions",
    "SplineBasis",
    "TestKind",
    "TestReport",
    "make_cubic_basis",
    "nile_fit",
    "predict",
    "read_csv",
    "write_csv",
]
__version__ = "0.1.0"
