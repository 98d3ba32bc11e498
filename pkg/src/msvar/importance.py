"""Exponential-tilting importance sampling for tail probabilities.

Estimates P(z'y_u > x | data) for future steps u.  Each replication reuses
the general simulation (regimes, partition, covariance draws, future path);
at every targeted step the coefficient vector and observation are re-drawn
from mean-shifted normals and the indicator is reweighted by the likelihood
ratio ``exp(-theta X + psi(theta))``.  Design vectors come from the general
(untilted) path, so tilted draws never feed forward and each step's estimator
is unbiased on its own.

The tilt re-draws a coefficient vector at every targeted step even when the
same regime repeats - an intentional departure from duplication removal
inside this stage only, because the optimal tilt depends on the step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve, solve_triangular

from .distributions import chol_spd
from .posterior import design_matrix_from_data
from .rng import RngStream
from .sampler import MsVarModel, TrainingData, _forecast_stage, gibbs_sp

__all__ = [
    "TiltSpec",
    "IsEstimate",
    "IsResult",
    "psi",
    "optimal_tilt",
    "likelihood_ratio",
    "estimate_tail_probabilities",
]


@dataclass(frozen=True)
class TiltSpec:
    """A tail event: direction ``z`` (weights over endogenous variables),
    threshold ``x``, at future step ``u`` (1-based offset from the origin)."""

    z: np.ndarray
    x: float
    u: int

    def __post_init__(self):
        z = np.asarray(self.z, float).ravel()
        if not np.any(z != 0.0):
            raise ValueError("direction vector must be nonzero")
        if self.u < 1:
            raise ValueError("future step index must be >= 1")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class IsEstimate:
    """Tail-probability estimate with its sampling diagnostics."""

    u: int
    x: float
    p_hat: float
    std_error: float
    ess: float
    variance_reduction: float
    n_draws: int


@dataclass(frozen=True)
class IsResult:
    """Per-tilt estimates plus the raw draws behind them."""

    estimates: list[IsEstimate]
    x_samples: np.ndarray  # (n_tilts, L)
    weights: np.ndarray    # (n_tilts, L) values of 1{X > x} * likelihood ratio
    ratios: np.ndarray     # (n_tilts, L) likelihood ratios
    thetas: np.ndarray     # (n_tilts, L)


def psi(theta: float, z: NDArray, design: NDArray, coef_mean: NDArray,
        sigma: NDArray, lambda_quadform: float) -> float:
    """Cumulant generating function of ``X = z'y`` under the re-draw scheme.

    ``theta * z' coef_mean design + theta^2/2 * (1 + lambda_quadform) * z' sigma z``
    where ``coef_mean`` is the posterior mean for recurring regimes and the
    prior mean for new ones, with the matching coefficient-scale quadratic form.
    """
    z = np.asarray(z, float).ravel()
    mean_x = float(z @ (np.asarray(coef_mean) @ np.asarray(design, float).ravel()))
    var_x = (1.0 + lambda_quadform) * float(z @ np.asarray(sigma) @ z)
    return theta * mean_x + 0.5 * theta * theta * var_x


def optimal_tilt(x: float, z: NDArray, design: NDArray, coef_mean: NDArray,
                 sigma: NDArray, lambda_quadform: float) -> float:
    """Variance-minimizing tilt, clamped at zero.

    Minimizes the exponential bound ``exp(-2 theta x + 2 psi(theta))``; the
    minimizer is ``(x - z' coef_mean design) / ((1 + quadform) z' sigma z)``.
    Thresholds below the predictive mean give theta = 0 (plain Monte Carlo).
    """
    z = np.asarray(z, float).ravel()
    var_x = (1.0 + lambda_quadform) * float(z @ np.asarray(sigma) @ z)
    if var_x <= 0.0:
        raise ValueError("degenerate tilt variance: z' sigma z must be positive")
    mean_x = float(z @ (np.asarray(coef_mean) @ np.asarray(design, float).ravel()))
    return max(0.0, (x - mean_x) / var_x)


def likelihood_ratio(x_val: float, theta: float, psi_val: float) -> float:
    """``exp(-theta X + psi(theta))`` - the change-of-measure weight."""
    return math.exp(-theta * x_val + psi_val)


def estimate_tail_probabilities(
    model: MsVarModel,
    data: TrainingData,
    tilts: Sequence[TiltSpec],
    n_draws: int,
    rng: RngStream,
    *,
    psi_future: NDArray | None = None,
    burnin: int = 500,
    thin: int = 1,
    regime_update: str = "marginal",
    force_theta: float | None = None,
    threads: int = 1,
) -> IsResult:
    """Tilted Monte-Carlo estimates of P(z'y_u > x | data) for each tilt.

    ``force_theta=0.0`` disables the change of measure: with the same stream
    the estimator is then exactly the naive Monte-Carlo indicator average.
    """
    if not tilts:
        raise ValueError("need at least one tilt specification")
    if not isinstance(rng, RngStream):
        raise TypeError("estimate_tail_probabilities needs an RngStream")
    horizon = max(spec.u for spec in tilts)
    if psi_future is None:
        if model.l != 1:
            raise ValueError("psi_future is required when the exogenous dimension exceeds 1")
        psi_future = np.ones((horizon, 1))
    psi_future = np.atleast_2d(np.asarray(psi_future, float))
    t = data.t
    designs = data.designs()
    gibbs_draws = gibbs_sp(
        data.y, designs, model.priors, model.dirichlet,
        iters=burnin + n_draws * thin, burnin=burnin, thin=thin,
        rng=rng, regime_update=regime_update,
    )[:n_draws]

    n_tilts = len(tilts)
    x_samples = np.empty((n_tilts, n_draws))
    ratios = np.empty((n_tilts, n_draws))
    thetas = np.empty((n_tilts, n_draws))
    stats_cache: dict = {}
    recent = data.recent_lags(model.p)

    def run_one(i: int) -> np.ndarray:
        gen = rng.shifted(1 + i).generator()
        draw, y_future, stats = _forecast_stage(
            model, data, designs, gibbs_draws[i], horizon, psi_future, gen, stats_cache
        )
        # future design rows from the general (untilted) path
        fut_designs = design_matrix_from_data(y_future, psi_future, recent)
        out = np.empty((3, n_tilts))
        for j, spec in enumerate(tilts):
            s_u = int(draw.path[t + spec.u - 1])
            vec = fut_designs[spec.u - 1]
            sigma = draw.coefficients[s_u][1]
            st = stats.for_regime(s_u)
            pr = model.priors[s_u - 1]
            if st.q > 0:  # recurring regime: posterior statistics through t
                coef_mean = st.c
                lam_vec = cho_solve((st.lambda_chol, True), vec, check_finite=False)
            else:  # new regime: prior hyperparameters
                coef_mean = pr.pi0_mat
                lam_vec = pr.lambda0 @ vec
            quad = float(vec @ lam_vec)
            if force_theta is not None:
                theta = float(force_theta)
            else:
                theta = optimal_tilt(spec.x, spec.z, vec, coef_mean, sigma, quad)
            sig_chol = chol_spd(sigma)
            sig_z = sigma @ spec.z
            # coefficient re-draw: mean shift theta * (sigma z)(scale vec)'
            zmat = gen.standard_normal(coef_mean.shape)
            if st.q > 0:
                col_part = solve_triangular(st.lambda_chol.T, zmat.T, lower=False,
                                            check_finite=False).T
            else:
                col_part = zmat @ chol_spd(pr.lambda0).T
            coef_star = coef_mean + theta * np.outer(sig_z, lam_vec) + sig_chol @ col_part
            y_star = coef_star @ vec + theta * sig_z + sig_chol @ gen.standard_normal(pr.n)
            x_val = float(spec.z @ y_star)
            psi_val = psi(theta, spec.z, vec, coef_mean, sigma, quad)
            out[0, j] = x_val
            out[1, j] = likelihood_ratio(x_val, theta, psi_val)
            out[2, j] = theta
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, res in enumerate(pool.map(run_one, range(n_draws))):
                x_samples[:, i], ratios[:, i], thetas[:, i] = res
    else:
        for i in range(n_draws):
            res = run_one(i)
            x_samples[:, i], ratios[:, i], thetas[:, i] = res

    estimates = []
    for j, spec in enumerate(tilts):
        w = np.where(x_samples[j] > spec.x, ratios[j], 0.0)
        p_hat = float(w.mean())
        var_w = float(w.var(ddof=1)) if n_draws > 1 else 0.0
        se = math.sqrt(var_w / n_draws)
        ess = float(ratios[j].sum() ** 2 / np.sum(ratios[j] ** 2))
        naive_var = p_hat * (1.0 - p_hat)
        vrf = naive_var / var_w if var_w > 0 else float("nan")
        estimates.append(IsEstimate(u=spec.u, x=spec.x, p_hat=p_hat, std_error=se,
                                    ess=ess, variance_reduction=float(vrf),
                                    n_draws=n_draws))
    weights = np.where(x_samples > np.array([s.x for s in tilts])[:, None], ratios, 0.0)
    return IsResult(estimates=estimates, x_samples=x_samples, weights=weights,
                    ratios=ratios, thetas=thetas)
