"""Joint simulation of the regime-switching VAR posterior.

The factorization runs right to left: Gibbs draws of (observed-path, transition
matrix), future regimes by the Markov property, one coefficient/covariance
draw per distinct future regime (duplication removed - recurring regimes from
posterior statistics, new regimes from the prior), and the future endogenous
block in a single banded triangular solve rather than step-by-step iteration.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import get_lapack_funcs, solve_triangular

from .distributions import chol_spd, sample_inverse_wishart, sample_niw
from .errors import EnumerationLimitError, NumericalError
from .filters import hamilton_filter_log, kim_smoother
from .posterior import (
    PosteriorStats,
    design_matrix_from_data,
    log_marginal_y,
    prior_predictive_logeta,
    sufficient_stats,
)
from .priors import NiwPrior
from .regimes import DirichletPriorSet, RegimePartition, dedup_partition, transition_counts
from .rng import RngStream, as_generator

__all__ = [
    "MsVarModel",
    "TrainingData",
    "GibbsDraw",
    "ModelDraw",
    "ForecastEnsemble",
    "gibbs_sp",
    "sample_future_regimes",
    "sample_coefficients",
    "sample_future_endogenous",
    "simulate_joint",
]

REGIME_UPDATE_MODES = ("marginal", "ffbs", "exact", "fixed")


@dataclass(frozen=True)
class MsVarModel:
    """Model bundle: one NIW prior per regime plus the Dirichlet transition prior."""

    priors: tuple[NiwPrior, ...]
    dirichlet: DirichletPriorSet
    p: int
    l: int

    def __post_init__(self):
        if len(self.priors) != self.dirichlet.n_regimes:
            raise ValueError("need one NIW prior per regime")
        n, d = self.priors[0].n, self.priors[0].d
        for pr in self.priors:
            if (pr.n, pr.d) != (n, d):
                raise ValueError("all regime priors must share dimensions")
        if d != self.l + n * self.p:
            raise ValueError(f"prior dimension d={d} does not equal l + n*p = {self.l + n * self.p}")
        object.__setattr__(self, "priors", tuple(self.priors))

    @property
    def n(self) -> int:
        return self.priors[0].n

    @property
    def d(self) -> int:
        return self.priors[0].d

    @property
    def n_regimes(self) -> int:
        return self.dirichlet.n_regimes


@dataclass(frozen=True)
class TrainingData:
    """Observed endogenous block, exogenous rows, and the p pre-sample lags."""

    y: np.ndarray       # (t, n)
    psi: np.ndarray     # (t, l)
    y_init: np.ndarray  # (p, n), most recent first

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_2d(np.asarray(self.y, float)))
        object.__setattr__(self, "psi", np.atleast_2d(np.asarray(self.psi, float)))
        object.__setattr__(self, "y_init", np.atleast_2d(np.asarray(self.y_init, float)))
        if self.psi.shape[0] != self.y.shape[0]:
            raise ValueError("psi and y must have the same number of rows")

    @property
    def t(self) -> int:
        return self.y.shape[0]

    def designs(self) -> np.ndarray:
        return design_matrix_from_data(self.y, self.psi, self.y_init)

    def recent_lags(self, p: int) -> np.ndarray:
        """Last p endogenous rows (most recent first), reaching into the pre-sample."""
        full = np.vstack([self.y_init[::-1], self.y])
        return full[: full.shape[0] - p - 1 : -1] if p else np.empty((0, self.y.shape[1]))


@dataclass(frozen=True)
class GibbsDraw:
    """One Gibbs state: observed-path draw and full transition matrix (row 0 initial)."""

    path: np.ndarray
    p_full: np.ndarray


@dataclass(frozen=True)
class ModelDraw:
    """One joint draw: full regime path, transition matrix, and per-regime
    coefficients keyed by the distinct regimes of the forecast segment."""

    path: np.ndarray
    p_full: np.ndarray
    coefficients: dict[int, tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class ForecastEnsemble:
    """L joint draws with their simulated future endogenous paths and seed ledger."""

    draws: list[ModelDraw]
    paths: np.ndarray            # (L, horizon, n)
    seeds: list[tuple[int, int]]

    def __post_init__(self):
        if len(self.draws) < 1:
            raise ValueError("an ensemble needs at least one draw")
        if not np.all(np.isfinite(self.paths)):
            raise NumericalError("simulated future paths contain non-finite values")


def _draw_transition(alpha: np.ndarray, counts: np.ndarray, gen) -> np.ndarray:
    post = alpha + counts
    out = np.empty_like(post)
    for i in range(post.shape[0]):
        out[i] = gen.dirichlet(post[i])
    return out


def _sample_rows(probs: np.ndarray, gen) -> np.ndarray:
    """One categorical draw per row of a row-stochastic matrix, values 1-based."""
    cum = np.cumsum(probs, axis=1)
    cum /= cum[:, -1:]
    u = gen.random(probs.shape[0])
    return 1 + (u[:, None] > cum).sum(axis=1).astype(np.int64)


def _ffbs_path(fo, transition, gen) -> np.ndarray:
    t, n_regimes = fo.filtered.shape
    path = np.empty(t, dtype=np.int64)
    probs = fo.filtered[t - 1]
    path[t - 1] = 1 + _categorical(probs, gen)
    for u in range(t - 2, -1, -1):
        w = fo.filtered[u] * transition[:, path[u + 1] - 1]
        path[u] = 1 + _categorical(w / w.sum(), gen)
    return path


def _categorical(probs: np.ndarray, gen) -> int:
    return int(np.searchsorted(np.cumsum(probs), gen.random() * probs.sum()))


class _ExactPathSampler:
    """Joint draws of the observed path from its exact conditional given the
    transition matrix, by enumeration over all N^t paths with the
    duplication-aware marginal likelihood.  Feasible only for small N^t."""

    def __init__(self, y_obs, designs, priors, n_regimes, t, limit):
        n_paths = n_regimes**t
        if n_paths > limit:
            raise EnumerationLimitError(
                f"exact regime update needs {n_regimes}^{t} = {n_paths} paths, over the bound {limit}"
            )
        self.paths = np.array(
            list(itertools.product(range(1, n_regimes + 1), repeat=t)), dtype=np.int64
        )
        self.log_marg = np.array(
            [log_marginal_y(y_obs, designs, pth, priors) for pth in self.paths]
        )
        self.first = self.paths[:, 0] - 1
        self.from_idx = self.paths[:, :-1] - 1
        self.to_idx = self.paths[:, 1:] - 1

    def draw(self, p_full: np.ndarray, gen) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logw = (
                self.log_marg
                + np.log(p_full[0, self.first])
                + np.sum(np.log(p_full[1:][self.from_idx, self.to_idx]), axis=1)
            )
        logw -= logw.max()
        w = np.exp(logw)
        idx = _categorical(w / w.sum(), gen)
        return self.paths[idx].copy()


def gibbs_sp(
    y_obs: NDArray,
    designs,
    priors: Sequence[NiwPrior],
    dirichlet: DirichletPriorSet,
    iters: int,
    burnin: int,
    thin: int = 1,
    rng: RngStream | np.random.Generator = RngStream(0),
    *,
    regime_update: str = "marginal",
    init_path: NDArray | None = None,
    enum_limit: int = 65536,
) -> list[GibbsDraw]:
    """Gibbs sampler for (observed regime path, transition matrix).

    Alternates Dirichlet row draws of the transition matrix given the path's
    transition counts with a path update given the matrix.  The path update
    follows the filter/smoother machinery: ``"marginal"`` draws each time
    point independently from its smoothed marginal (the default), ``"ffbs"``
    draws the path jointly backward from the filter, ``"exact"`` draws from
    the exact conditional by path enumeration (small instances only), and
    ``"fixed"`` keeps the initial path (transition rows then average to their
    analytic Dirichlet posterior mean).
    """
    if regime_update not in REGIME_UPDATE_MODES:
        raise ValueError(f"regime_update must be one of {REGIME_UPDATE_MODES}")
    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    gen = as_generator(rng)
    y_obs = np.atleast_2d(np.asarray(y_obs, float))
    t = y_obs.shape[0]
    n_regimes = dirichlet.n_regimes

    if n_regimes == 1:
        path = np.ones(t, dtype=np.int64)
        draws = []
        for it in range(iters):
            p_full = np.ones((2, 1))
            if it >= burnin and (it - burnin) % thin == 0:
                draws.append(GibbsDraw(path.copy(), p_full))
        return draws

    log_eta = prior_predictive_logeta(y_obs, designs, priors)
    exact = None
    if regime_update == "exact":
        exact = _ExactPathSampler(y_obs, designs, priors, n_regimes, t, enum_limit)

    if init_path is not None:
        path = np.asarray(init_path, dtype=np.int64).copy()
        if path.size != t:
            raise ValueError("init_path length must match the observations")
    else:
        p0 = dirichlet.alpha / dirichlet.alpha.sum(axis=1, keepdims=True)
        fo = hamilton_filter_log(log_eta, p0[1:], p0[0])
        path = _sample_rows(kim_smoother(fo, p0[1:]).smoothed, gen)

    draws: list[GibbsDraw] = []
    for it in range(iters):
        counts = transition_counts(path, n_regimes).matrix
        p_full = _draw_transition(dirichlet.alpha, counts, gen)
        if regime_update == "marginal":
            fo = hamilton_filter_log(log_eta, p_full[1:], p_full[0])
            path = _sample_rows(kim_smoother(fo, p_full[1:]).smoothed, gen)
        elif regime_update == "ffbs":
            fo = hamilton_filter_log(log_eta, p_full[1:], p_full[0])
            path = _ffbs_path(fo, p_full[1:], gen)
        elif regime_update == "exact":
            path = exact.draw(p_full, gen)
        if it >= burnin and (it - burnin) % thin == 0:
            draws.append(GibbsDraw(path.copy(), p_full))
    return draws


def sample_future_regimes(
    s_t: int, p_hat: NDArray, horizon: int, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Sequential regime draws from the transition rows, starting at state ``s_t``."""
    p_hat = np.asarray(p_hat, float)
    gen = as_generator(rng)
    out = np.empty(horizon, dtype=np.int64)
    state = int(s_t)
    for r in range(horizon):
        state = 1 + _categorical(p_hat[state - 1], gen)
        out[r] = state
    return out


def sample_coefficients(
    partition: RegimePartition,
    stats: PosteriorStats,
    priors: Sequence[NiwPrior],
    rng: RngStream | np.random.Generator,
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """One (coefficient matrix, covariance) draw per distinct future regime.

    Recurring regimes are drawn from their conjugate posterior (inverse-Wishart
    covariance, then a matrix normal centered at the posterior mean with
    column scale ``lambda_t^{-1}``); regimes new to the future segment come
    straight from their prior.  Time points sharing a regime share one object.
    """
    gen = as_generator(rng)
    out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for k in partition.gamma:
        st = stats.for_regime(k)
        if st.q == 0:
            raise ValueError(f"regime {k} is in gamma but has no observed occurrences")
        sigma = sample_inverse_wishart(st.nu_post, st.scale, gen)
        z = gen.standard_normal(st.c.shape)
        # column factor of lambda_t^{-1} is L^{-T} for lambda_t = L L'
        coef = st.c + chol_spd(sigma) @ solve_triangular(
            st.lambda_chol.T, z.T, lower=False, check_finite=False
        ).T
        out[k] = (coef, sigma)
    for k in partition.delta:
        pr = priors[k - 1]
        pi_vec, sigma = sample_niw(pr.pi0, pr.lambda0, pr.nu0, pr.v0, gen)
        out[k] = (pi_vec.reshape((pr.n, pr.d), order="F"), sigma)
    return out


def _coef_blocks(coef: np.ndarray, n: int, p: int, l: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split a stacked coefficient matrix into the exogenous block and lag blocks."""
    a0 = coef[:, :l]
    lags = [coef[:, l + (j - 1) * n : l + j * n] for j in range(1, p + 1)]
    return a0, lags


def sample_future_endogenous(
    draw: ModelDraw,
    recent_lags: NDArray,
    psi_future: NDArray,
    rng: RngStream | np.random.Generator | None = None,
    *,
    shocks: NDArray | None = None,
) -> np.ndarray:
    """Generate the future endogenous block by one banded triangular solve.

    The stacked future system is unit-lower-triangular with block bandwidth p,
    so the whole horizon solves in O(horizon * p * n^2) - no step-by-step
    iteration.  ``shocks`` injects the residual block directly (for paired
    comparisons); otherwise residuals are drawn per step from the regime's
    covariance draw.
    """
    psi_future = np.atleast_2d(np.asarray(psi_future, float))
    recent = np.atleast_2d(np.asarray(recent_lags, float))
    horizon = psi_future.shape[0]
    if len(draw.path) < horizon:
        raise ValueError("the draw's path does not cover the requested horizon")
    future_states = draw.path[-horizon:]
    some_coef = next(iter(draw.coefficients.values()))[0]
    n = some_coef.shape[0]
    p = recent.shape[0]
    l = psi_future.shape[1]
    if some_coef.shape[1] != l + p * n:
        raise ValueError(
            f"coefficient width {some_coef.shape[1]} does not match l + p*n = {l + p * n}"
        )
    m = horizon * n
    band = (p + 1) * n - 1  # lowest subdiagonal reached by a lag-p block

    gen = as_generator(rng) if rng is not None else None
    if shocks is None:
        if gen is None:
            raise ValueError("provide either rng or shocks")
        shocks = np.empty((horizon, n))
        chols: dict[int, np.ndarray] = {}
        for r, k in enumerate(future_states):
            ck = chols.get(int(k))
            if ck is None:
                ck = chols[int(k)] = chol_spd(draw.coefficients[int(k)][1])
            shocks[r] = ck @ gen.standard_normal(n)
    else:
        shocks = np.atleast_2d(np.asarray(shocks, float))

    ab = np.zeros((band + 1, m))
    ab[0, :] = 1.0
    rhs = np.empty(m)
    blocks: dict[int, tuple[np.ndarray, list[np.ndarray]]] = {}
    for r in range(horizon):
        k = int(future_states[r])
        blk = blocks.get(k)
        if blk is None:
            blk = blocks[k] = _coef_blocks(draw.coefficients[k][0], n, p, l)
        a0, lags = blk
        base = a0 @ psi_future[r] + shocks[r]
        for j in range(1, p + 1):
            if r - j >= 0:
                col0 = (r - j) * n
                for a in range(n):
                    row = r * n + a
                    ab[row - col0 - np.arange(n), col0 + np.arange(n)] = -lags[j - 1][a]
            else:
                base = base + lags[j - 1] @ recent[j - r - 1]
        rhs[r * n : (r + 1) * n] = base

    tbtrs = get_lapack_funcs(("tbtrs",), (ab,))[0]
    sol, info = tbtrs(ab, rhs[:, None], uplo="L", trans="N", diag="U")
    if info != 0:
        raise NumericalError(f"banded triangular solve failed with LAPACK info={info}")
    return sol[:, 0].reshape((horizon, n))


def _forecast_stage(
    model: MsVarModel,
    data: TrainingData,
    designs: np.ndarray,
    gibbs_draw: GibbsDraw,
    horizon: int,
    psi_future: np.ndarray,
    gen: np.random.Generator,
    stats_cache: dict | None,
) -> tuple[ModelDraw, np.ndarray, PosteriorStats]:
    t = data.t
    future = sample_future_regimes(int(gibbs_draw.path[-1]), gibbs_draw.p_full[1:], horizon, gen)
    full_path = np.concatenate([gibbs_draw.path, future])
    partition = dedup_partition(full_path, t)
    key = gibbs_draw.path.tobytes() if stats_cache is not None else None
    stats = stats_cache.get(key) if key is not None else None
    if stats is None:
        stats = sufficient_stats(data.y, designs, gibbs_draw.path, model.priors, check=False)
        if key is not None and len(stats_cache) < 256:
            stats_cache[key] = stats
    coeffs = sample_coefficients(partition, stats, model.priors, gen)
    draw = ModelDraw(full_path, gibbs_draw.p_full, coeffs)
    y_future = sample_future_endogenous(draw, data.recent_lags(model.p), psi_future, gen)
    return draw, y_future, stats


def simulate_joint(
    model: MsVarModel,
    data: TrainingData,
    horizon: int,
    n_draws: int,
    rng: RngStream,
    *,
    psi_future: NDArray | None = None,
    burnin: int = 500,
    thin: int = 1,
    regime_update: str = "marginal",
    threads: int = 1,
    enum_limit: int = 65536,
) -> ForecastEnsemble:
    """Full joint simulation: L draws of (path, transition, coefficients, future block).

    The Gibbs chain runs sequentially on the base stream; each retained state
    then drives an independent forecast stage on stream ``base + 1 + draw_index``,
    so per-draw results are reproducible and independent of thread scheduling.
    """
    if not isinstance(rng, RngStream):
        raise TypeError("simulate_joint needs an RngStream for its per-draw seed ledger")
    if psi_future is None:
        if model.l != 1:
            raise ValueError("psi_future is required when the exogenous dimension exceeds 1")
        psi_future = np.ones((horizon, 1))
    psi_future = np.atleast_2d(np.asarray(psi_future, float))
    if psi_future.shape != (horizon, model.l):
        raise ValueError(f"psi_future must be (horizon, l) = {(horizon, model.l)}")
    designs = data.designs()
    gibbs_draws = gibbs_sp(
        data.y, designs, model.priors, model.dirichlet,
        iters=burnin + n_draws * thin, burnin=burnin, thin=thin,
        rng=rng, regime_update=regime_update, enum_limit=enum_limit,
    )[:n_draws]
    stats_cache: dict = {}
    seeds = [(rng.seed, rng.stream_id + 1 + i) for i in range(n_draws)]

    def run_one(i: int):
        gen = rng.shifted(1 + i).generator()
        return _forecast_stage(model, data, designs, gibbs_draws[i], horizon,
                               psi_future, gen, stats_cache)

    results: list = [None] * n_draws
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, res in enumerate(pool.map(run_one, range(n_draws))):
                results[i] = res
    else:
        for i in range(n_draws):
            results[i] = run_one(i)

    paths = np.stack([res[1] for res in results])
    draws = [res[0] for res in results]
    return ForecastEnsemble(draws=draws, paths=paths, seeds=seeds)
