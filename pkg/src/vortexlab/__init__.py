"""Vortex reconnection and torus breakdown experiments for Navier-Stokes on the 3-torus."""
from ._accel import NUMBA_ENABLED, backend_name

__version__ = "0.1.0"

__all__ = ["NUMBA_ENABLED", "backend_name", "__version__"]
