"""Frequentist estimation of regime-switching constant-mean models.

EM for the N-regime AR(0) model with Gaussian errors (E-step: Hamilton filter
plus Kim smoother; M-step: smoothed-probability-weighted means, variances and
transition reestimates), plus the chain summaries reported alongside fits:
stationary probabilities, average persistence times, and the long-run mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import NonErgodicChainError, NumericalError
from .filters import hamilton_filter_log, kim_smoother
from .rng import RngStream, as_generator

__all__ = [
    "MsArZeroFit",
    "ChainSummary",
    "em_fit_msar0",
    "ergodic_probs",
    "persistence_times",
    "longrun_mean",
    "summarize_chain",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MsArZeroFit:
    """Fitted regime-switching constant-mean model.

    Regimes are ordered by descending mean, which resolves label switching
    deterministically ("up", "normal", ..., "down").
    """

    c: np.ndarray          # (N,) regime means
    sigma: np.ndarray      # (N,) regime standard deviations
    p_hat: np.ndarray      # (N, N) row-stochastic transition matrix
    z10: np.ndarray        # (N,) initial probability vector
    loglik: float
    converged: bool
    n_iter: int
    loglik_history: np.ndarray = field(repr=False)
    smoothed: np.ndarray = field(repr=False)  # (T, N) smoothed regime probabilities


@dataclass(frozen=True)
class ChainSummary:
    """Stationary probabilities, persistence times, and the long-run mean."""

    ergodic: np.ndarray
    persistence: np.ndarray
    longrun: float


def _gaussian_logeta(series: np.ndarray, c: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    z = (series[:, None] - c[None, :]) / sigma[None, :]
    return -0.5 * z * z - np.log(sigma)[None, :] - math.log(_SQRT_2PI)


def _em_once(series, c, sigma, p_mat, z10, tol, max_iter):
    t_len = series.size
    n = c.size
    loglik_prev = -np.inf
    history = []
    converged = False
    it = 0
    smoothed = None
    for it in range(1, max_iter + 1):
        log_eta = _gaussian_logeta(series, c, sigma)
        fo = hamilton_filter_log(log_eta, p_mat, z10)
        smoothed = kim_smoother(fo, p_mat).smoothed
        history.append(fo.loglik)
        if fo.loglik - loglik_prev < tol and it > 1:
            converged = True
            break
        loglik_prev = fo.loglik

        weights = smoothed.sum(axis=0)
        if np.min(weights) < 1.0:
            return None, np.asarray(history), False, it, None  # degenerate regime
        c = smoothed.T @ series / weights
        var = np.einsum("tj,tj->j", smoothed, (series[:, None] - c[None, :]) ** 2) / weights
        sigma = np.sqrt(np.maximum(var, 1e-12))
        # pairwise smoothed transition responsibilities
        num = np.zeros((n, n))
        for u in range(1, t_len):
            pred = fo.predicted[u - 1]  # z_{u+1|u} one-based
            ratio = np.where(pred > 0, smoothed[u] / np.where(pred > 0, pred, 1.0), 0.0)
            num += np.outer(fo.filtered[u - 1], ratio) * p_mat
        p_mat = num / np.maximum(num.sum(axis=1, keepdims=True), 1e-300)
        z10 = smoothed[0]
    params = (c, sigma, p_mat, z10)
    return params, np.asarray(history), converged, it, smoothed


def em_fit_msar0(
    series: NDArray,
    n_regimes: int,
    *,
    tol: float = 1e-8,
    max_iter: int = 500,
    restarts: int = 20,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> MsArZeroFit:
    """Fit an N-regime constant-mean Gaussian model by EM with restarts.

    The first initialization is deterministic (quantile-spread means, sticky
    transitions); the remaining ``restarts - 1`` perturb it randomly.  The
    best likelihood wins.  A restart is abandoned if some regime's total
    smoothed weight falls below one observation.
    """
    series = np.asarray(series, float).ravel()
    t_len = series.size
    if t_len <= 10 * n_regimes:
        raise ValueError(f"series of length {t_len} is too short for {n_regimes} regimes")
    if n_regimes == 1:
        c = np.array([series.mean()])
        sigma = np.array([series.std()])  # MLE normalization
        ll = float(np.sum(_gaussian_logeta(series, c, sigma)))
        return MsArZeroFit(c, sigma, np.ones((1, 1)), np.ones(1), ll, True, 0,
                           np.array([ll]), np.ones((t_len, 1)))
    gen = as_generator(rng)
    spread = np.quantile(series, np.linspace(0.85, 0.15, n_regimes))
    base_sigma = np.full(n_regimes, series.std())
    best = None
    for r in range(max(restarts, 1)):
        if r == 0:
            c0, s0 = spread.copy(), base_sigma.copy()
            p0 = np.full((n_regimes, n_regimes), 0.1 / max(n_regimes - 1, 1))
            np.fill_diagonal(p0, 0.9)
            z0 = np.full(n_regimes, 1.0 / n_regimes)
        else:
            c0 = spread + gen.normal(0.0, series.std(), n_regimes)
            s0 = base_sigma * gen.uniform(0.5, 1.5, n_regimes)
            p0 = gen.dirichlet(np.full(n_regimes, 2.0), size=n_regimes)
            p0 = 0.5 * p0 + 0.5 * np.eye(n_regimes)
            p0 /= p0.sum(axis=1, keepdims=True)
            z0 = gen.dirichlet(np.ones(n_regimes))
        params, history, conv, n_iter, smoothed = _em_once(
            series, c0, s0, p0, z0, tol, max_iter
        )
        if params is None:
            continue
        if best is None or history[-1] > best[1][-1]:
            best = (params, history, conv, n_iter, smoothed)
    if best is None:
        raise NumericalError("every EM restart collapsed onto a degenerate regime")
    (c, sigma, p_mat, z10), history, conv, n_iter, smoothed = best
    order = np.argsort(-c)
    return MsArZeroFit(
        c=c[order],
        sigma=sigma[order],
        p_hat=p_mat[np.ix_(order, order)],
        z10=z10[order],
        loglik=float(history[-1]),
        converged=bool(conv),
        n_iter=int(n_iter),
        loglik_history=history,
        smoothed=smoothed[:, order],
    )


def ergodic_probs(p_hat: NDArray, *, row_tol: float = 2e-3) -> np.ndarray:
    """Stationary distribution: the probability vector fixed by the chain.

    Accepts published (rounded) matrices whose rows sum to one within
    ``row_tol`` and renormalizes before solving.  Raises if the unit
    eigenvalue is not simple.
    """
    p = np.asarray(p_hat, float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(p < -1e-12):
        raise ValueError("transition probabilities must be nonnegative")
    row_sums = p.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > row_tol:
        raise ValueError(f"rows must sum to 1 within {row_tol}")
    p = p / row_sums[:, None]
    eigvals = np.linalg.eigvals(p)
    if np.sum(np.abs(eigvals - 1.0) < 1e-8) != 1:
        raise NonErgodicChainError("unit eigenvalue is not simple; chain is not ergodic")
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def persistence_times(p_hat: NDArray) -> np.ndarray:
    """Expected consecutive stay per regime, ``1 / (1 - p_jj)``."""
    diag = np.diag(np.asarray(p_hat, float))
    if np.any(diag >= 1.0):
        raise ValueError("absorbing regime: a diagonal entry equals 1")
    return 1.0 / (1.0 - diag)


def longrun_mean(c: NDArray, ergodic: NDArray) -> float:
    """Stationary-weighted average of the regime means."""
    c = np.asarray(c, float).ravel()
    ergodic = np.asarray(ergodic, float).ravel()
    if c.size != ergodic.size:
        raise ValueError("length mismatch between means and probabilities")
    return float(c @ ergodic)


def summarize_chain(p_hat: NDArray, c: NDArray) -> ChainSummary:
    """Bundle the three chain summaries for a fitted transition matrix."""
    pi = ergodic_probs(p_hat)
    return ChainSummary(ergodic=pi, persistence=persistence_times(p_hat),
                        longrun=longrun_mean(c, pi))
