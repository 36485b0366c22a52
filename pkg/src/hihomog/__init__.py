"""Numerical homogenization of periodic elliptic systems of order 2m on the torus."""
from .coefficients import CoefficientArray, CoefficientError, builtin
from .multiindex import IndexBasis, MultiIndex
from .spectral import SpectralField

__version__ = "0.1.0"

__all__ = ["CoefficientArray", "CoefficientError", "IndexBasis", "MultiIndex", "SpectralField", "builtin",
           "__version__"]
