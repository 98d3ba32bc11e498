"""Hamilton filter and Kim smoother over per-regime predictive densities.

The transition matrix is row-stochastic (``P[i, j]`` moves from i to j), so
prediction is ``P' z`` and the backward smoothing pass applies ``P`` to the
smoothed-to-predicted ratio.  Operations are pure: filters over different
transition draws can run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import FilterError

__all__ = ["FilterOutput", "SmoothedOutput", "hamilton_filter", "hamilton_filter_log", "kim_smoother"]


@dataclass(frozen=True)
class FilterOutput:
    """Forward-pass output.

    ``filtered[u-1]`` is ``z_{u|u}``; ``predicted[u-1]`` is ``z_{u+1|u}`` (one
    step ahead of the same row, so the last row predicts beyond the sample).
    ``eta`` stores the per-row densities the recursion actually used, which may
    be rescaled per row - the filter is invariant to positive row scalings and
    the log likelihood accounts for them separately.
    """

    filtered: np.ndarray
    predicted: np.ndarray
    loglik: float
    eta: np.ndarray


@dataclass(frozen=True)
class SmoothedOutput:
    """Backward-pass output: ``smoothed[u-1]`` is ``z_{u|t}``."""

    smoothed: np.ndarray


def hamilton_filter(eta: NDArray, transition: NDArray, z_initial: NDArray) -> FilterOutput:
    """Run the forward recursion on plain (unlogged) densities.

    Parameters
    ----------
    eta : (t, N) array
        Nonnegative predictive densities; every row needs a positive entry.
    transition : (N, N) array
        Row-stochastic transition matrix.
    z_initial : (N,) array
        ``z_{1|0}``, a probability vector.
    """
    eta = np.atleast_2d(np.asarray(eta, float))
    return _filter_core(eta, np.asarray(transition, float), np.asarray(z_initial, float), 0.0)


def hamilton_filter_log(log_eta: NDArray, transition: NDArray, z_initial: NDArray) -> FilterOutput:
    """Forward recursion on log densities.

    Each row is exponentiated after subtracting its maximum; the subtracted
    constants are restored in the log likelihood.  Matrix-t densities
    underflow for moderate dimensions, so this is the entry point samplers use.
    """
    log_eta = np.atleast_2d(np.asarray(log_eta, float))
    row_max = np.max(log_eta, axis=1)
    if not np.all(np.isfinite(row_max)):
        raise FilterError("a time step has no finite regime density")
    eta = np.exp(log_eta - row_max[:, None])
    return _filter_core(eta, np.asarray(transition, float), np.asarray(z_initial, float),
                        float(np.sum(row_max)))


def _filter_core(eta, transition, z_initial, loglik_offset) -> FilterOutput:
    t, n_regimes = eta.shape
    if transition.shape != (n_regimes, n_regimes):
        raise ValueError("transition matrix does not match the regime count")
    if np.any(eta < 0.0):
        raise ValueError("densities must be nonnegative")
    filtered = np.empty((t, n_regimes))
    predicted = np.empty((t, n_regimes))
    z_pred = z_initial
    loglik = loglik_offset
    for u in range(t):
        joint = z_pred * eta[u]
        norm = joint.sum()
        if norm <= 0.0 or not np.isfinite(norm):
            raise FilterError(f"filtering failed at step {u + 1}: zero density in every regime")
        filtered[u] = joint / norm
        loglik += np.log(norm)
        z_pred = transition.T @ filtered[u]
        predicted[u] = z_pred
    return FilterOutput(filtered=filtered, predicted=predicted, loglik=float(loglik), eta=eta)


def kim_smoother(filter_output: FilterOutput, transition: NDArray) -> SmoothedOutput:
    """Backward smoothing recursion seeded with the last filtered row.

    Zero predicted probabilities mark transitions the matrix forbids; the
    corresponding ratio terms are set to zero because that successor carries
    no backward weight.
    """
    transition = np.asarray(transition, float)
    filtered = filter_output.filtered
    predicted = filter_output.predicted
    t, n_regimes = filtered.shape
    smoothed = np.empty_like(filtered)
    smoothed[t - 1] = filtered[t - 1]
    for u in range(t - 2, -1, -1):
        pred_next = predicted[u]  # the one-step prediction of time u+1 (0-based)
        safe = np.where(pred_next > 0.0, pred_next, 1.0)
        ratio = np.where(pred_next > 0.0, smoothed[u + 1] / safe, 0.0)
        smoothed[u] = filtered[u] * (transition @ ratio)
    return SmoothedOutput(smoothed=smoothed)
