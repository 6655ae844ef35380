"""Option-implied equity tail risk and its role in government bond pricing."""

from .exceptions import NumericalError, TailbondError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericalError", "TailbondError", "ValidationError", "__version__"]
