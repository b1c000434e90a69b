"""Exact truncated power series and formal CR-geometry checks."""

from .powerseries import (GaussianRational, Series, SeriesMap, VariableSplit, compose, compose_map,
                          generic_rank, ideal_membership, implicit_solve, invert_map, sigma_conjugate)

__all__ = [
    "GaussianRational", "Series", "SeriesMap", "VariableSplit", "compose", "compose_map",
    "generic_rank", "ideal_membership", "implicit_solve", "invert_map", "sigma_conjugate",
]
