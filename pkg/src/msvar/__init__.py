"""Bayesian Markov-switching VAR engine.

Conjugate closed-form posterior evaluation, duplication-removed Gibbs and
forecast simulation, exponential-tilting importance sampling for tail
probabilities of future endogenous variables, and a dividend-discount price
forecasting pipeline.
"""

__version__ = "0.1.0"

from .rng import RngStream

__all__ = ["RngStream", "__version__"]
