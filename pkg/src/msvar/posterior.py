"""Closed-form conjugate posterior machinery.

Per-regime sufficient statistics and every density that follows from the
normal-inverse-Wishart conjugacy: the marginal likelihood of the observed
block given a regime path, one-step and multi-step predictive densities, the
exact path-mixture density for small instances, and posterior coefficient
means.  Everything is parameterized by three per-regime accumulators
(design Gram, data-design cross moment, data Gram), so statistics extend
incrementally in O(d^2) per observation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .distributions import chol_spd, log_mv_gamma, logdet_from_chol
from .errors import EnumerationLimitError, NumericalError
from .priors import NiwPrior
from .regimes import DirichletPriorSet, RegimeVector, dedup_order, regime_path_logdensity

__all__ = [
    "ModelDims",
    "DesignRow",
    "RegimeStats",
    "PosteriorStats",
    "design_matrix_from_data",
    "assemble_design",
    "sufficient_stats",
    "log_marginal_y",
    "log_marginal_from_stats",
    "one_step_predictive_logpdf",
    "prior_predictive_logeta",
    "log_predictive_future",
    "exact_mixture_logdensity",
    "coef_posterior_mean",
    "approx_forecast_mean",
]

_LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class ModelDims:
    """Dimension bundle: endogenous n, exogenous l, lags p, regimes N, horizon T, observed t."""

    n: int
    l: int
    p: int
    n_regimes: int
    horizon_end: int
    t_observed: int

    def __post_init__(self):
        if min(self.n, self.l, self.p, self.n_regimes) < 1:
            raise ValueError("all dimensions must be positive")
        if not 0 < self.t_observed <= self.horizon_end:
            raise ValueError("t_observed must lie in 1..horizon_end")

    @property
    def d(self) -> int:
        return self.l + self.n * self.p


@dataclass(frozen=True)
class DesignRow:
    """One regression vector: exogenous block plus p stacked lags (most recent first)."""

    psi: np.ndarray   # (l,)
    lags: np.ndarray  # (p, n), row 0 = y_{t-1}

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.psi), np.asarray(self.lags).ravel()])


def assemble_design(psi: NDArray, recent_lags: NDArray) -> np.ndarray:
    """Stack an exogenous vector and a (p, n) lag window (most recent first)."""
    return np.concatenate([np.atleast_1d(np.asarray(psi, float)),
                           np.asarray(recent_lags, float).ravel()])


def design_matrix_from_data(
    y_obs: NDArray, psi: NDArray, y_init: NDArray
) -> np.ndarray:
    """Design matrix (t, d) for observed data.

    ``y_init`` holds the p pre-sample values, most recent first, so row u of
    the result is ``(psi_u, y_{u-1}, ..., y_{u-p})``.
    """
    y_obs = np.atleast_2d(np.asarray(y_obs, float))
    psi = np.atleast_2d(np.asarray(psi, float))
    y_init = np.atleast_2d(np.asarray(y_init, float))
    t = y_obs.shape[0]
    p = y_init.shape[0]
    full = np.vstack([y_init[::-1], y_obs])  # chronological: y_{1-p} .. y_t
    rows = []
    for u in range(1, t + 1):
        lags = full[p + u - 2 :: -1][:p]  # y_{u-1}, ..., y_{u-p}
        rows.append(np.concatenate([psi[u - 1], lags.ravel()]))
    return np.asarray(rows)


def _coerce_designs(designs) -> np.ndarray:
    if isinstance(designs, np.ndarray):
        return np.atleast_2d(np.asarray(designs, float))
    return np.asarray([d.vector if isinstance(d, DesignRow) else np.asarray(d, float).ravel()
                       for d in designs])


class RegimeStats:
    """Sufficient statistics of one regime given data assigned to it.

    Carries the accumulators ``sum YY'``, ``sum yY'``, ``sum yy'`` and the
    derived quantities of the conjugate update: the posterior coefficient
    scale ``lambda_t = sum YY' + lambda0^{-1}``, the posterior coefficient
    mean ``c``, the residual matrix ``bbar`` (PSD), and the inverse-Wishart
    posterior scale ``bbar + v0`` with degrees of freedom ``nu0 + q``.
    Instances are immutable snapshots; :meth:`extended` returns a new one.
    """

    __slots__ = (
        "regime", "prior", "q", "s_dd", "s_yd", "s_yy",
        "lambda_t", "c", "bbar", "scale", "nu_post",
        "lambda_chol", "lambda_logdet", "scale_chol", "scale_logdet",
    )

    def __init__(self, regime: int, prior: NiwPrior, q: int,
                 s_dd: np.ndarray, s_yd: np.ndarray, s_yy: np.ndarray):
        self.regime = regime
        self.prior = prior
        self.q = int(q)
        self.s_dd = s_dd
        self.s_yd = s_yd
        self.s_yy = s_yy
        lambda_t = s_dd + prior.lambda0_inv
        lambda_t = 0.5 * (lambda_t + lambda_t.T)
        lam_chol = chol_spd(lambda_t, name="lambda_t")
        c = cho_solve((lam_chol, True), (s_yd + prior.pi0_lam).T, check_finite=False).T
        bbar = s_yy + prior.pi0_quad - c @ lambda_t @ c.T
        bbar = 0.5 * (bbar + bbar.T)
        scale = bbar + prior.v0
        self.lambda_t = lambda_t
        self.c = c
        self.bbar = bbar
        self.scale = scale
        self.nu_post = prior.nu0 + self.q
        self.lambda_chol = lam_chol
        self.lambda_logdet = logdet_from_chol(lam_chol)
        self.scale_chol = chol_spd(scale, name="bbar + v0")
        self.scale_logdet = logdet_from_chol(self.scale_chol)

    @classmethod
    def empty(cls, regime: int, prior: NiwPrior) -> "RegimeStats":
        d, n = prior.d, prior.n
        return cls(regime, prior, 0, np.zeros((d, d)), np.zeros((n, d)), np.zeros((n, n)))

    @classmethod
    def from_blocks(cls, regime: int, prior: NiwPrior,
                    design_cols: np.ndarray, y_cols: np.ndarray) -> "RegimeStats":
        """Build from the (d, q) design and (n, q) data columns of this regime."""
        return cls(regime, prior, design_cols.shape[1],
                   design_cols @ design_cols.T, y_cols @ design_cols.T, y_cols @ y_cols.T)

    def extended(self, design_cols: np.ndarray, y_cols: np.ndarray) -> "RegimeStats":
        """New snapshot with extra observation columns appended."""
        return RegimeStats(
            self.regime, self.prior, self.q + design_cols.shape[1],
            self.s_dd + design_cols @ design_cols.T,
            self.s_yd + y_cols @ design_cols.T,
            self.s_yy + y_cols @ y_cols.T,
        )

    def lambda_inv_quad(self, vec: np.ndarray) -> float:
        """Quadratic form ``vec' lambda_t^{-1} vec``."""
        w = solve_triangular(self.lambda_chol, vec, lower=True, check_finite=False)
        return float(w @ w)

    def bbar_second_form(self, design_cols: np.ndarray, y_cols: np.ndarray) -> np.ndarray:
        """The equivalent q-space expression for ``bbar``:
        ``R (I_q + Y' lambda0 Y)^{-1} R'`` with ``R = y - pi0 Y``.  Costs
        O(q^2 d + q^3); used for cross-validation of the accumulator form.
        """
        q = design_cols.shape[1]
        resid = y_cols - self.prior.pi0_mat @ design_cols
        phi_inv = np.eye(q) + design_cols.T @ self.prior.lambda0 @ design_cols
        sol = np.linalg.solve(phi_inv, resid.T)
        return resid @ sol


@dataclass(frozen=True)
class PosteriorStats:
    """Per-regime statistics of the observed block for one regime path."""

    by_regime: Mapping[int, RegimeStats]
    priors: tuple[NiwPrior, ...]
    t: int

    def for_regime(self, regime: int) -> RegimeStats:
        st = self.by_regime.get(regime)
        if st is None:
            st = RegimeStats.empty(regime, self.priors[regime - 1])
        return st

    @property
    def regimes(self) -> tuple[int, ...]:
        return tuple(self.by_regime)


def _path_states(path) -> np.ndarray:
    if isinstance(path, RegimeVector):
        return path.as_array()
    return np.asarray(path, dtype=np.int64).ravel()


def sufficient_stats(
    y_obs: NDArray,
    designs,
    path,
    priors: Sequence[NiwPrior],
    *,
    regimes=None,
    check: bool = True,
    check_tol: float = 1e-10,
) -> PosteriorStats:
    """Per-regime conjugate statistics for an observed block and its path.

    Parameters
    ----------
    y_obs : (t, n) array
        Observed endogenous rows.
    designs : (t, d) array or sequence of DesignRow
        Regression vectors aligned with the observations.
    path : RegimeVector or int array
        Regime path of length t.
    priors : sequence of NiwPrior
        One prior per regime, indexed by regime - 1.
    regimes : iterable of int, optional
        Restrict the computation to these regimes (e.g. only those recurring
        in a forecast segment).
    check : bool
        Cross-validate ``bbar`` against its q-space second form; relative
        agreement better than ``check_tol`` is enforced.
    """
    y = np.atleast_2d(np.asarray(y_obs, float))
    d_mat = _coerce_designs(designs)
    states = _path_states(path)
    t = states.size
    if y.shape[0] != t or d_mat.shape[0] != t:
        raise ValueError("observations, designs and path must have equal length")
    wanted = dedup_order(states) if regimes is None else tuple(regimes)
    by_regime: dict[int, RegimeStats] = {}
    for k in wanted:
        mask = states == k
        if not mask.any():
            continue
        cols = d_mat[mask].T  # (d, q)
        ycols = y[mask].T     # (n, q)
        st = RegimeStats.from_blocks(k, priors[k - 1], cols, ycols)
        if check:
            other = st.bbar_second_form(cols, ycols)
            scale = max(1.0, float(np.max(np.abs(st.bbar))))
            if np.max(np.abs(st.bbar - other)) > check_tol * scale:
                raise NumericalError(
                    f"bbar cross-check failed for regime {k}: the two algebraic forms disagree"
                )
        by_regime[k] = st
    return PosteriorStats(by_regime, tuple(priors), t)


def log_marginal_from_stats(stats: PosteriorStats) -> float:
    """Log marginal likelihood of the observed block given its regime path."""
    total = -0.5 * stats.priors[0].n * stats.t * _LOG_PI
    for st in stats.by_regime.values():
        pr = st.prior
        n = pr.n
        total += (
            -0.5 * n * (pr.lambda0_logdet + st.lambda_logdet)
            + log_mv_gamma(n, 0.5 * (pr.nu0 + st.q))
            - log_mv_gamma(n, 0.5 * pr.nu0)
            + 0.5 * pr.nu0 * pr.v0_logdet
            - 0.5 * (pr.nu0 + st.q) * st.scale_logdet
        )
    return float(total)


def log_marginal_y(y_obs, designs, path, priors) -> float:
    """Marginal log likelihood of ``y_obs`` given a regime path (coefficients
    and covariances integrated out under the NIW priors)."""
    stats = sufficient_stats(y_obs, designs, path, priors, check=False)
    return log_marginal_from_stats(stats)


def one_step_predictive_logpdf(
    y_t: NDArray,
    design,
    regime: int,
    stats: PosteriorStats | None,
    priors: Sequence[NiwPrior],
) -> float:
    """Log predictive density of one observation given a regime.

    ``stats`` carries the statistics of the data observed so far; with empty
    statistics this is the literal prior-hyperparameter density of one point.
    Sequentially updated statistics make the chain rule with the joint
    marginal hold exactly.
    """
    y_t = np.asarray(y_t, float).ravel()
    vec = design.vector if isinstance(design, DesignRow) else np.asarray(design, float).ravel()
    pr = priors[regime - 1]
    st = stats.for_regime(regime) if stats is not None else RegimeStats.empty(regime, pr)
    n = pr.n
    c_scalar = 1.0 + st.lambda_inv_quad(vec)
    resid = y_t - st.c @ vec
    w = solve_triangular(st.scale_chol, resid, lower=True, check_finite=False)
    quad = float(w @ w)
    nu = st.nu_post
    return float(
        -0.5 * n * _LOG_PI
        - 0.5 * n * math.log(c_scalar)
        + log_mv_gamma(n, 0.5 * (nu + 1.0))
        - log_mv_gamma(n, 0.5 * nu)
        - 0.5 * st.scale_logdet
        - 0.5 * (nu + 1.0) * math.log1p(quad / c_scalar)
    )


def prior_predictive_logeta(y_obs, designs, priors: Sequence[NiwPrior]) -> np.ndarray:
    """(t, N) matrix of per-time, per-regime predictive log densities under the
    prior hyperparameters - the regime-conditional densities the filter runs on.

    Vectorized equivalent of :func:`one_step_predictive_logpdf` with empty
    statistics for every time point and regime.
    """
    y = np.atleast_2d(np.asarray(y_obs, float))
    d_mat = _coerce_designs(designs)
    t = y.shape[0]
    out = np.empty((t, len(priors)))
    for j, pr in enumerate(priors):
        n = pr.n
        c_vec = 1.0 + np.einsum("td,de,te->t", d_mat, pr.lambda0, d_mat)
        resid = y - d_mat @ pr.pi0_mat.T  # (t, n)
        w = solve_triangular(pr.v0_chol, resid.T, lower=True, check_finite=False)
        quad = np.sum(w * w, axis=0)
        out[:, j] = (
            -0.5 * n * _LOG_PI
            - 0.5 * n * np.log(c_vec)
            + log_mv_gamma(n, 0.5 * (pr.nu0 + 1.0))
            - log_mv_gamma(n, 0.5 * pr.nu0)
            - 0.5 * pr.v0_logdet
            - 0.5 * (pr.nu0 + 1.0) * np.log1p(quad / c_vec)
        )
    return out


def log_predictive_future(
    y_future: NDArray,
    designs_future,
    path,
    stats_t: PosteriorStats,
    priors: Sequence[NiwPrior],
    *,
    check: bool = True,
    check_tol: float = 1e-8,
) -> float:
    """Log predictive density of a future block given the full regime path.

    The value is the difference of the joint marginal at the end of the
    horizon and at the forecast origin, written per regime: recurring regimes
    contribute posterior-form ratios, new regimes prior-form terms.  The
    horizon-end inverse-Wishart scale is computed both by direct accumulation
    and by the rank-q* recursive update from the origin statistics; the two
    must agree to ``check_tol`` relative.
    """
    yf = np.atleast_2d(np.asarray(y_future, float))
    df = _coerce_designs(designs_future)
    states = _path_states(path)
    h = yf.shape[0]
    t = states.size - h
    if t != stats_t.t:
        raise ValueError("stats_t does not match the observed prefix length")
    future_states = states[t:]
    n = priors[0].n
    total = -0.5 * n * h * _LOG_PI
    for k in dedup_order(future_states):
        pr = priors[k - 1]
        mask = future_states == k
        cols = df[mask].T
        ycols = yf[mask].T
        st_t = stats_t.for_regime(k)
        st_end = st_t.extended(cols, ycols)
        if check:
            resid = ycols - st_t.c @ cols
            qstar = cols.shape[1]
            inner = np.eye(qstar) + cols.T @ cho_solve(
                (st_t.lambda_chol, True), cols, check_finite=False
            )
            scale_rec = st_t.scale + resid @ np.linalg.solve(inner, resid.T)
            scale = max(1.0, float(np.max(np.abs(st_end.scale))))
            if np.max(np.abs(scale_rec - st_end.scale)) > check_tol * scale:
                raise NumericalError(
                    f"recursive scale update disagrees with direct accumulation for regime {k}"
                )
        total += (
            0.5 * n * (st_t.lambda_logdet - st_end.lambda_logdet)
            + log_mv_gamma(n, 0.5 * (pr.nu0 + st_end.q))
            - log_mv_gamma(n, 0.5 * (pr.nu0 + st_t.q))
            + 0.5 * (pr.nu0 + st_t.q) * st_t.scale_logdet
            - 0.5 * (pr.nu0 + st_end.q) * st_end.scale_logdet
        )
    return float(total)


def exact_mixture_logdensity(
    y_obs,
    designs,
    priors: Sequence[NiwPrior],
    dirichlet: DirichletPriorSet,
    *,
    limit: int = 1_000_000,
) -> float:
    """Exact log density of the observed block with the regime path summed out.

    Enumerates all N^t paths; refuses beyond ``limit`` because the count grows
    hopelessly fast (3^30 is already astronomically beyond reach).
    """
    y = np.atleast_2d(np.asarray(y_obs, float))
    t = y.shape[0]
    n_regimes = dirichlet.n_regimes
    n_paths = n_regimes**t
    if n_paths > limit:
        raise EnumerationLimitError(
            f"enumeration of {n_regimes}^{t} = {n_paths} paths exceeds the bound {limit}"
        )
    d_mat = _coerce_designs(designs)
    vals = np.empty(n_paths)
    for i, states in enumerate(itertools.product(range(1, n_regimes + 1), repeat=t)):
        arr = np.asarray(states, dtype=np.int64)
        vals[i] = log_marginal_y(y, d_mat, arr, priors) + regime_path_logdensity(arr, dirichlet)
    return float(logsumexp(vals))


def coef_posterior_mean(stats: PosteriorStats, regime: int) -> np.ndarray:
    """Posterior mean coefficient matrix: the conjugate update for regimes with
    data, the prior mean for unseen regimes (the two coincide at q = 0)."""
    return stats.for_regime(regime).c


def approx_forecast_mean(
    coef_means: Mapping[int, np.ndarray],
    future_path,
    recent_lags: NDArray,
    psi_future: NDArray,
) -> np.ndarray:
    """Iterated plug-in mean forecast.

    Each step applies the regime's mean coefficient matrix to a design vector
    built from previous forecasts; the one-step case is exact, deeper horizons
    replace E[coef * design] by E[coef] * E[design].
    """
    states = _path_states(future_path)
    lags = np.atleast_2d(np.asarray(recent_lags, float)).copy()
    psi = np.atleast_2d(np.asarray(psi_future, float))
    out = np.empty((states.size, lags.shape[1]))
    for i, k in enumerate(states):
        vec = assemble_design(psi[i], lags)
        out[i] = coef_means[int(k)] @ vec
        lags = np.vstack([out[i], lags[:-1]])
    return out
