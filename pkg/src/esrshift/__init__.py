"""Covariate-shift adaptation for minimum-pressure forecasting.

Kernel Mean Matching importance weights, weight-aware tree ensembles, a
synthetic vacuum-pumping simulator and a windowed MAPE evaluation sweep.
"""

from .errors import EsrShiftError

__version__ = "0.1.0"

__all__ = ["EsrShiftError", "__version__"]
