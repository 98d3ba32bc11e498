"""Per-regime normal-inverse-Wishart priors and their Minnesota construction.

The Minnesota prior shrinks each variable's own first-lag coefficient toward a
unit-root flag and everything else toward zero.  It is encoded through dummy
observations: stacking the dummy system and reading off the implied OLS
quantities yields the coefficient prior mean and a diagonal coefficient scale
matrix, independent of the residual covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve

from .distributions import chol_spd, logdet_from_chol, validate_spd

__all__ = [
    "NiwPrior",
    "MinnesotaConfig",
    "DummyObservations",
    "MomentReport",
    "build_dummies",
    "dummies_to_niw",
    "minnesota_niw",
    "validate_moments",
]


@dataclass(frozen=True)
class NiwPrior:
    """Normal-inverse-Wishart hyperparameters for one regime.

    ``Sigma ~ IW(nu0, v0)`` over (n x n) covariances and, given Sigma, the
    column-stacked (n x d) coefficient matrix has law ``N(pi0, lambda0 (x) Sigma)``.
    Derived quantities used in every posterior formula are precomputed here.
    """

    pi0: np.ndarray       # (n*d,) coefficient prior mean, column-stacked
    lambda0: np.ndarray   # (d, d) SPD coefficient scale
    nu0: float
    v0: np.ndarray        # (n, n) SPD inverse-Wishart scale

    # derived, filled in __post_init__
    n: int = field(init=False)
    d: int = field(init=False)
    pi0_mat: np.ndarray = field(init=False, repr=False)
    lambda0_inv: np.ndarray = field(init=False, repr=False)
    lambda0_logdet: float = field(init=False, repr=False)
    v0_logdet: float = field(init=False, repr=False)
    pi0_lam: np.ndarray = field(init=False, repr=False)   # pi0_mat @ lambda0_inv
    pi0_quad: np.ndarray = field(init=False, repr=False)  # pi0_mat @ lambda0_inv @ pi0_mat'
    v0_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = validate_spd(self.lambda0, "lambda0")
        v0 = validate_spd(self.v0, "v0")
        pi0 = np.asarray(self.pi0, dtype=float).ravel()
        n = v0.shape[0]
        d = lam.shape[0]
        if pi0.size != n * d:
            raise ValueError(f"pi0 has size {pi0.size}, expected n*d = {n * d}")
        if self.nu0 <= n - 1:
            raise ValueError(f"nu0 must exceed n-1 = {n - 1}, got {self.nu0}")
        lam_chol = chol_spd(lam, name="lambda0")
        v0_chol = chol_spd(v0, name="v0")
        pi0_mat = pi0.reshape((n, d), order="F")
        lam_inv = cho_solve((lam_chol, True), np.eye(d), check_finite=False)
        lam_inv = 0.5 * (lam_inv + lam_inv.T)
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "lambda0", lam)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "pi0_mat", pi0_mat)
        object.__setattr__(self, "lambda0_inv", lam_inv)
        object.__setattr__(self, "lambda0_logdet", logdet_from_chol(lam_chol))
        object.__setattr__(self, "v0_logdet", logdet_from_chol(v0_chol))
        object.__setattr__(self, "pi0_lam", pi0_mat @ lam_inv)
        object.__setattr__(self, "pi0_quad", pi0_mat @ lam_inv @ pi0_mat.T)
        object.__setattr__(self, "v0_chol", v0_chol)


@dataclass(frozen=True)
class MinnesotaConfig:
    """Shrinkage settings for one regime.

    ``phi`` flags unit-root variables (first own-lag mean 1) versus stationary
    ones (mean 0); ``eps`` is the diffuse-intercept scale; ``lambda1`` the
    overall tightness; ``lambda2`` the lag-decay exponent; ``tau`` per-variable
    scaling.  ``intercept_mean`` optionally centers the intercept column away
    from zero (it enters the first dummy column scaled by ``eps``).
    """

    phi: np.ndarray
    eps: float
    lambda1: float
    lambda2: float
    tau: np.ndarray
    p: int
    l: int
    intercept_mean: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).ravel()
        tau = np.asarray(self.tau, dtype=float).ravel()
        if phi.size != tau.size:
            raise ValueError("phi and tau must have the same length")
        if not np.all((phi == 0.0) | (phi == 1.0)):
            raise ValueError("phi entries must be 0 or 1")
        if self.eps <= 0 or self.lambda1 <= 0 or np.any(tau <= 0):
            raise ValueError("eps, lambda1 and tau must be positive")
        if self.lambda2 < 0:
            raise ValueError("lambda2 must be nonnegative")
        if self.p < 1 or self.l < 1:
            raise ValueError("lag order p and exogenous dimension l must be >= 1")
        c = self.intercept_mean
        c = np.zeros(phi.size) if c is None else np.asarray(c, dtype=float).ravel()
        if c.size != phi.size:
            raise ValueError("intercept_mean must have length n")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "intercept_mean", c)

    @property
    def n(self) -> int:
        return self.phi.size

    @property
    def d(self) -> int:
        return self.l + self.n * self.p


@dataclass(frozen=True)
class DummyObservations:
    """Dummy data (n x d) and dummy design (d x d) matrices; the design has full rank."""

    yhat: np.ndarray
    design: np.ndarray

    def __post_init__(self):
        yhat = np.asarray(self.yhat, dtype=float)
        design = np.asarray(self.design, dtype=float)
        d = design.shape[0]
        if design.shape != (d, d) or yhat.shape[1] != d:
            raise ValueError("dummy matrices must be (n, d) and (d, d)")
        if np.linalg.matrix_rank(design) < d:
            raise ValueError("dummy design matrix is rank deficient")
        object.__setattr__(self, "yhat", yhat)
        object.__setattr__(self, "design", design)


def build_dummies(cfg: MinnesotaConfig) -> DummyObservations:
    """Assemble the Minnesota dummy matrices.

    The dummy data block is ``[eps*c : lambda1 diag(phi_i tau_i) : 0_{n x n(p-1)}]``
    and the dummy design is block diagonal with ``eps I_l`` and
    ``lambda1 (J (x) diag(tau))`` where ``J = diag(1^lambda2, ..., p^lambda2)``.
    """
    n, p, l, d = cfg.n, cfg.p, cfg.l, cfg.d
    yhat = np.zeros((n, d))
    yhat[:, 0] = cfg.eps * cfg.intercept_mean
    yhat[:, l:l + n] = cfg.lambda1 * np.diag(cfg.phi * cfg.tau)
    design = np.zeros((d, d))
    design[:l, :l] = cfg.eps * np.eye(l)
    decay = np.arange(1, p + 1, dtype=float) ** cfg.lambda2
    design[l:, l:] = cfg.lambda1 * np.kron(np.diag(decay), np.diag(cfg.tau))
    return DummyObservations(yhat, design)


def dummies_to_niw(dummies: DummyObservations, nu0: float, v0: NDArray) -> NiwPrior:
    """Convert dummy observations into the implied NIW prior.

    ``pi0 = vec(yhat design' (design design')^{-1})`` is the OLS fit of the
    dummy system and ``lambda0 = (design design')^{-1}``; with the Minnesota
    construction the latter is exactly diagonal.  ``nu0`` and ``v0`` are
    supplied directly (weakest proper choice is ``nu0 = n + 2``).
    """
    yh, yd = dummies.yhat, dummies.design
    gram = yd @ yd.T
    gram_chol = chol_spd(gram, name="dummy Gram matrix")
    lambda0 = cho_solve((gram_chol, True), np.eye(gram.shape[0]), check_finite=False)
    lambda0 = 0.5 * (lambda0 + lambda0.T)
    coef_mean = cho_solve((gram_chol, True), (yh @ yd.T).T, check_finite=False).T
    return NiwPrior(coef_mean.reshape(-1, order="F"), lambda0, nu0, np.asarray(v0, dtype=float))


def minnesota_niw(cfg: MinnesotaConfig, nu0: float, v0: NDArray) -> NiwPrior:
    """Convenience: dummy construction followed by the NIW conversion."""
    return dummies_to_niw(build_dummies(cfg), nu0, v0)


@dataclass(frozen=True)
class MomentReport:
    """Worst deviation of the implied prior moments from the target conditions."""

    max_violation: float
    worst: str


def validate_moments(prior: NiwPrior, cfg: MinnesotaConfig, sigma_diag: NDArray) -> MomentReport:
    """Check the implied prior means and variances of every coefficient.

    Conditional on a diagonal residual covariance with entries ``sigma_diag``,
    the targets are: intercept column mean ``cfg.intercept_mean`` and variance
    ``(sigma_i / eps)^2``; first own-lag mean ``phi_i``; all other means 0;
    lag-``ell`` variance ``(sigma_i / (ell^lambda2 lambda1 tau_j))^2``.
    Returns the maximum absolute violation over all coefficients.
    """
    n, p, l, d = cfg.n, cfg.p, cfg.l, cfg.d
    if prior.n != n or prior.d != d:
        raise ValueError("prior dimensions do not match the config")
    sigma_diag = np.asarray(sigma_diag, dtype=float).ravel()
    mean = prior.pi0_mat
    # vec convention: Var((coef)_{i, col}) = lambda0[col, col] * Sigma[i, i]
    var = np.outer(sigma_diag**2, np.diag(prior.lambda0))

    exp_mean = np.zeros((n, d))
    exp_mean[:, 0] = cfg.intercept_mean
    exp_mean[:, l:l + n] = np.diag(cfg.phi)
    exp_var = np.empty((n, d))
    exp_var[:, :l] = (sigma_diag[:, None] / cfg.eps) ** 2
    for ell in range(1, p + 1):
        cols = slice(l + (ell - 1) * n, l + ell * n)
        denom = ell**cfg.lambda2 * cfg.lambda1 * cfg.tau
        exp_var[:, cols] = (sigma_diag[:, None] / denom[None, :]) ** 2

    mean_err = np.abs(mean - exp_mean)
    var_err = np.abs(var - exp_var)
    worst = "mean" if mean_err.max() >= var_err.max() else "variance"
    return MomentReport(max_violation=float(max(mean_err.max(), var_err.max())), worst=worst)
