"""Reduced-basis approximation of parametrized Maxwell cavity eigenproblems.

Curl-curl eigenvalue systems on morphing brick cavities are assembled with
lowest-order hexahedral edge elements, gauged by a tree-cotree split to
remove the gradient nullspace, compressed by POD plus greedy enrichment,
and swept along the deformation parameter with eigenmode tracking.
"""

from .errors import (
    ConfigError,
    DegenerateCellError,
    EigensolverError,
    FactorizationError,
    NumericsError,
    ProjectionError,
    TrackingError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "NumericsError",
    "DegenerateCellError",
    "FactorizationError",
    "EigensolverError",
    "ProjectionError",
    "TrackingError",
    "__version__",
]
