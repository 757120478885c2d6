"""Dyadic-grid laboratory for matrix weights, convex body averages and
sparse domination of singular integrals."""

from .errors import (ConfigError, DegenerateBodyError, DomainError, IllConditionedError,
                     InvalidInputError, MwlabError, NumericError, ResolutionExhausted)
from .grid import DyadicCube, GridFunction, GridGeometry
from .weights import MatrixWeight, generate_weight, identity_weight

__version__ = "0.1.0"

__all__ = ["ConfigError", "DegenerateBodyError", "DomainError", "IllConditionedError",
           "InvalidInputError", "MwlabError", "NumericError", "ResolutionExhausted",
           "DyadicCube", "GridFunction", "GridGeometry", "MatrixWeight", "generate_weight",
           "identity_weight", "__version__"]
