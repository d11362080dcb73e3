"""Volatility ratios, cointegration tests and VECM portfolio risk forecasts.

Hot loops live in :mod:`volratio.kernels` and are compiled with numba when it
is installed; set ``VOLRATIO_DISABLE_NUMBA=1`` to use the numpy versions.
"""
from ._accel import HAVE_NUMBA, USE_NUMBA

__version__ = "0.1.0"

__all__ = ["HAVE_NUMBA", "USE_NUMBA", "__version__"]
