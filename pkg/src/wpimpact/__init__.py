"""Win-probability based player impact estimation for basketball play-by-play."""

from .errors import NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericalError", "ValidationError", "__version__"]
