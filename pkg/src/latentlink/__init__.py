"""Bayesian record linkage and de-duplication via split-merge sampling."""

__version__ = "0.1.0"

from .schema import FieldSchema, GroundTruth, RecordTable
from .state import Hyperparameters, LinkageInvariantError, LinkageState

__all__ = [
    "FieldSchema",
    "GroundTruth",
    "RecordTable",
    "Hyperparameters",
    "LinkageInvariantError",
    "LinkageState",
    "__version__",
]
