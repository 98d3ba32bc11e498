"""Sampling and density primitives shared by the whole package.

All densities are computed and returned in log space: the per-regime products
that drive the marginal likelihood underflow after a few dozen observations
otherwise.  All samplers are deterministic functions of their inputs and an
:class:`~msvar.rng.RngStream`.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import gammaln

from .errors import NumericalError
from .rng import RngStream, as_generator

__all__ = [
    "validate_spd",
    "chol_spd",
    "log_mv_gamma",
    "sample_dirichlet",
    "sample_inverse_wishart",
    "sample_matrix_normal",
    "sample_niw",
    "matrix_t_logpdf",
]

#: relative symmetry tolerance for SPD inputs
_SYM_RTOL = 1e-12


def validate_spd(a: NDArray, name: str = "matrix") -> np.ndarray:
    """Check that ``a`` is a symmetric positive-definite square matrix.

    Symmetry is required to 1e-12 relative; positive definiteness is certified
    by a successful Cholesky factorization (with the ridge retry of
    :func:`chol_spd`).  Returns the symmetrized array.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > _SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric to {_SYM_RTOL} relative")
    a = 0.5 * (a + a.T)
    chol_spd(a, name=name)
    return a


def chol_spd(a: NDArray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a nominally SPD matrix.

    Posterior scale matrices can be numerically semidefinite, so a failed
    factorization is retried once with a ridge of ``1e-10 * trace/n`` added to
    the diagonal before giving up.
    """
    a = np.asarray(a, dtype=float)
    try:
        return cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    n = a.shape[0]
    ridge = 1e-10 * max(np.trace(a) / n, np.finfo(float).tiny)
    try:
        return cholesky(a + ridge * np.eye(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of {name} failed after ridge retry") from exc


def logdet_from_chol(chol_lower: NDArray) -> float:
    """Log determinant of the matrix whose lower Cholesky factor is given."""
    return 2.0 * float(np.sum(np.log(np.diag(chol_lower))))


def log_mv_gamma(n: int, x: float) -> float:
    """Log of the n-variate gamma function.

    Uses the product formula
    ``ln G_n(x) = n(n-1)/4 ln(pi) + sum_{j=1..n} ln Gamma(x + (1-j)/2)``,
    defined for ``x > (n-1)/2``.
    """
    if n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n}")
    if x <= (n - 1) / 2.0:
        raise ValueError(f"log_mv_gamma requires x > (n-1)/2, got x={x} for n={n}")
    j = np.arange(1, n + 1)
    return float(n * (n - 1) / 4.0 * math.log(math.pi) + np.sum(gammaln(x + (1.0 - j) / 2.0)))


def sample_dirichlet(alpha: NDArray, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Draw a probability vector from a Dirichlet distribution."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 1:
        raise ValueError("alpha must be a nonempty vector")
    if np.any(alpha <= 0.0) or not np.all(np.isfinite(alpha)):
        raise ValueError("Dirichlet parameters must be positive and finite")
    gen = as_generator(rng)
    return gen.dirichlet(alpha)


def sample_inverse_wishart(
    dof: float, scale: NDArray, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Draw from an inverse-Wishart distribution with the density convention
    ``|S|^{dof/2} |X|^{-(dof+n+1)/2} exp(-tr(S X^{-1})/2)`` (mean ``S/(dof-n-1)``).

    Sampled via the Bartlett decomposition of the Wishart of the inverse scale:
    ``X = (L^{-T} A^{-T})(A^{-1} L^{-1})`` with ``chol(scale) = L L'`` and
    Bartlett factor ``A``.
    """
    scale = np.asarray(scale, dtype=float)
    n = scale.shape[0]
    if dof <= n - 1:
        raise ValueError(f"inverse-Wishart requires dof > n-1, got dof={dof}, n={n}")
    gen = as_generator(rng)
    # Bartlett factor A of W ~ Wishart(dof, I)
    a = np.zeros((n, n))
    df = dof - np.arange(n)
    a[np.diag_indices(n)] = np.sqrt(gen.chisquare(df))
    if n > 1:
        a[np.tril_indices(n, -1)] = gen.standard_normal(n * (n - 1) // 2)
    l_scale = chol_spd(scale, name="inverse-Wishart scale")
    # With B = L^{-T}, B A A' B' ~ Wishart(dof, scale^{-1}); its inverse is
    # m' m with m = A^{-1} L', obtained by one triangular solve.
    m = solve_triangular(a, l_scale.T, lower=True, check_finite=False)
    return m.T @ m


def sample_matrix_normal(
    mean: NDArray,
    row_cov: NDArray,
    col_cov: NDArray,
    rng: RngStream | np.random.Generator,
) -> np.ndarray:
    """Draw an (n, d) matrix X with ``vec(X) ~ N(vec(mean), col_cov (x) row_cov)``.

    ``vec`` stacks columns, matching the coefficient-vector convention used
    throughout the package.
    """
    mean = np.asarray(mean, dtype=float)
    gen = as_generator(rng)
    lr = chol_spd(row_cov, name="row covariance")
    lc = chol_spd(col_cov, name="column covariance")
    z = gen.standard_normal(mean.shape)
    return mean + lr @ z @ lc.T


def sample_niw(
    pi0: NDArray,
    lambda0: NDArray,
    nu0: float,
    v0: NDArray,
    rng: RngStream | np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(pi, Sigma)`` from a normal-inverse-Wishart law.

    ``Sigma ~ IW(nu0, v0)`` (n x n) and ``pi | Sigma ~ N(pi0, lambda0 (x) Sigma)``
    with ``pi0`` of length ``n*d`` and ``lambda0`` (d x d).  Returns the
    coefficient vector (column-stacked) and the covariance draw.
    """
    pi0 = np.asarray(pi0, dtype=float).ravel()
    lambda0 = np.asarray(lambda0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = v0.shape[0]
    d = lambda0.shape[0]
    if pi0.size != n * d:
        raise ValueError(f"pi0 has size {pi0.size}, expected n*d = {n * d}")
    if nu0 <= n - 1:
        raise ValueError(f"degrees of freedom must exceed n-1 = {n - 1}, got {nu0}")
    gen = as_generator(rng)
    sigma = sample_inverse_wishart(nu0, v0, gen)
    mean = pi0.reshape((n, d), order="F")
    coef = sample_matrix_normal(mean, sigma, lambda0, gen)
    return coef.reshape(-1, order="F"), sigma


def matrix_t_logpdf(
    x: NDArray,
    location: NDArray,
    row_scale: NDArray,
    col_scale: NDArray,
    dof: float,
) -> float:
    """Log density of the matrix-variate Student t law in scale/precision form.

    For an (n, d) argument the density is proportional to
    ``|I_n + row_scale^{-1} (X-M) col_scale (X-M)'|^{-(dof+d)/2}`` with
    normalizing constant
    ``|col_scale|^{n/2} |row_scale|^{-d/2} G_n((dof+d)/2) / (pi^{nd/2} G_n(dof/2))``.
    Note ``col_scale`` enters precision-side: larger values mean tighter columns.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    location = np.atleast_2d(np.asarray(location, dtype=float))
    n, d = x.shape
    row_scale = validate_spd(row_scale, "row_scale")
    col_scale = validate_spd(col_scale, "col_scale")
    if dof <= n - 1:
        raise ValueError(f"matrix-t requires dof > n-1, got dof={dof} for n={n}")
    resid = x - location
    lr = chol_spd(row_scale, name="row_scale")
    core = np.eye(n) + cho_solve((lr, True), resid @ col_scale @ resid.T, check_finite=False)
    sign, logdet_core = np.linalg.slogdet(core)
    if sign <= 0:
        raise NumericalError("matrix-t core determinant is not positive")
    const = (
        0.5 * n * logdet_from_chol(chol_spd(col_scale))
        - 0.5 * d * logdet_from_chol(lr)
        + log_mv_gamma(n, (dof + d) / 2.0)
        - log_mv_gamma(n, dof / 2.0)
        - 0.5 * n * d * math.log(math.pi)
    )
    return float(const - 0.5 * (dof + d) * logdet_core)
