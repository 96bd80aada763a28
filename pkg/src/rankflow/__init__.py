"""Rank-based diffusions: simulation, stationary laws, concentration bounds and portfolios."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import ModelParams, derive  # noqa: F401
