"""Numerical laboratory for symplectic plugs, their insertion into the round 3-sphere and Moser isotopies."""
from .kernels import BACKEND, CYTHON_AVAILABLE

__version__ = "0.1.0"

__all__ = ["BACKEND", "CYTHON_AVAILABLE", "__version__"]
