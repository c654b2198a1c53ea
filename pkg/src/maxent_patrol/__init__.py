"""Max-entropy implementations of marginal coverage in spatio-temporal security games."""
from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
