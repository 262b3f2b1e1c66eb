"""Simulator for parallelising learning with an active-learning sifter."""
from paractive.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
