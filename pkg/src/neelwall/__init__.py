"""One-dimensional Neel wall model: static wall, linearization, forced dynamics."""

from .params import (
    DimensionError,
    Grid,
    InvalidParameterError,
    PhysicalParameters,
    RealField,
    RescaledParameters,
    rescale,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "Grid",
    "InvalidParameterError",
    "PhysicalParameters",
    "RealField",
    "RescaledParameters",
    "rescale",
    "__version__",
]
