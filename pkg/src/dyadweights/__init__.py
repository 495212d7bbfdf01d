"""Dyadic matrix-weight machinery: Haar analysis, weight conditions,
weighted martingale transforms, dyadic shifts and stopping times."""

from .dyadic import (
    DyadicGrid,
    DyadicInterval,
    HaarCoefficients,
    ShiftedGrid,
    haar_decompose,
    haar_reconstruct,
    sample_shifted_grid,
    tree_distance,
)
from .weights import MatrixWeight, average, generate, inverse_weight, weighted_norm
from .conditions import (
    ConditionReport,
    a2zero,
    joint_a2,
    reverse_holder,
    rh_exponent_search,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "DyadicGrid",
    "DyadicInterval",
    "HaarCoefficients",
    "MatrixWeight",
    "ShiftedGrid",
    "a2zero",
    "average",
    "generate",
    "haar_decompose",
    "haar_reconstruct",
    "inverse_weight",
    "joint_a2",
    "reverse_holder",
    "rh_exponent_search",
    "sample_shifted_grid",
    "tree_distance",
    "weighted_norm",
]
