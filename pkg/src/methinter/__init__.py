"""Testing SNP x methylation-curve interactions with penalized functional regression."""
from ._backend import BACKEND
from .errors import ConfigError, DataError, MethInterError, NumericalError, StudyError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "DataError", "MethInterError", "NumericalError", "StudyError",
           "__version__"]
