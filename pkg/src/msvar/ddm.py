"""Dividend-discount application layer.

Transforms price/dividend panels into required rates of return and log
dividend-to-price ratios, and projects future prices from simulated paths of
those two blocks.  The one-period accounting identity is
``P_t = (1 + k_t - exp(alpha_t)) * P_{t-1}`` with ``k_t = (P_t + d_t)/P_{t-1} - 1``
and ``alpha_t = ln(d_t / P_{t-1})``, so the transform is exactly invertible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "PricePanel",
    "ReturnPanel",
    "PriceProjection",
    "panel_to_returns",
    "reconstruct_prices",
    "project_prices",
    "forecast_bands",
]


@dataclass(frozen=True)
class PricePanel:
    """Aligned quarterly prices and dividends for m firms."""

    dates: tuple[str, ...]
    prices: np.ndarray     # (T, m), strictly positive
    dividends: np.ndarray  # (T, m), nonnegative
    tickers: tuple[str, ...]

    def __post_init__(self):
        prices = np.atleast_2d(np.asarray(self.prices, float))
        dividends = np.atleast_2d(np.asarray(self.dividends, float))
        if prices.shape != dividends.shape:
            raise ValueError("prices and dividends must have equal shape")
        if len(self.dates) != prices.shape[0]:
            raise ValueError("dates must align with the rows")
        if len(self.tickers) != prices.shape[1]:
            raise ValueError("tickers must align with the columns")
        if np.any(prices <= 0.0):
            raise ValueError("prices must be strictly positive")
        if np.any(dividends < 0.0):
            raise ValueError("dividends must be nonnegative")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dividends", dividends)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))


@dataclass(frozen=True)
class ReturnPanel:
    """Required rates of return ``k`` and log dividend-to-price ratios, one row
    per period after the first."""

    dates: tuple[str, ...]
    k: np.ndarray
    log_dp: np.ndarray
    tickers: tuple[str, ...]

    def endogenous(self) -> np.ndarray:
        """Stacked (T-1, 2m) block in the model's variable order (k's, then ratios)."""
        return np.hstack([self.k, self.log_dp])


def panel_to_returns(panel: PricePanel, zero_dividend: str = "drop") -> ReturnPanel:
    """Derive the return panel from prices and dividends.

    ``k_t = (P_t + d_t) / P_{t-1} - 1`` and ``log_dp_t = ln(d_t / P_{t-1})``.
    Zero dividends leave the log ratio undefined; policy ``"drop"`` removes
    those periods, ``"floor"`` replaces the dividend with a machine-tiny
    multiple of the lagged price and warns.
    """
    if zero_dividend not in ("drop", "floor"):
        raise ValueError("zero_dividend policy must be 'drop' or 'floor'")
    p_prev = panel.prices[:-1]
    p_cur = panel.prices[1:]
    d_cur = panel.dividends[1:].copy()
    dates = panel.dates[1:]
    zero_rows = np.any(d_cur == 0.0, axis=1)
    if zero_rows.any():
        if zero_dividend == "drop":
            keep = ~zero_rows
            p_prev, p_cur, d_cur = p_prev[keep], p_cur[keep], d_cur[keep]
            dates = tuple(d for d, k in zip(dates, keep) if k)
        else:
            warnings.warn(
                f"flooring {int(zero_rows.sum())} zero-dividend entries at machine tiny",
                RuntimeWarning,
                stacklevel=2,
            )
            tiny = np.finfo(float).tiny
            d_cur = np.where(d_cur == 0.0, tiny * p_prev, d_cur)
    k = (p_cur + d_cur) / p_prev - 1.0
    log_dp = np.log(d_cur / p_prev)
    return ReturnPanel(dates=tuple(dates), k=k, log_dp=log_dp, tickers=panel.tickers)


def reconstruct_prices(panel: PricePanel, returns: ReturnPanel) -> np.ndarray:
    """One-step price reconstruction ``(1 + k - exp(log_dp)) * P_{t-1}``.

    With the ``"drop"`` policy this only covers the retained periods; it is
    the exact algebraic inverse of :func:`panel_to_returns`.
    """
    date_index = {d: i for i, d in enumerate(panel.dates)}
    rows = [date_index[d] for d in returns.dates]
    p_prev = panel.prices[[r - 1 for r in rows]]
    return (1.0 + returns.k - np.exp(returns.log_dp)) * p_prev


@dataclass(frozen=True)
class PriceProjection:
    """Simulated price paths with per-(path, firm) exclusion flags.

    A growth factor at or below -1 would push the price through zero; such
    paths are flagged, excluded from band computation, and counted.
    """

    prices: np.ndarray        # (L, horizon, m); NaN past an excluded point
    excluded: np.ndarray      # (L, m) bool
    excluded_count: np.ndarray  # (m,) int


def project_prices(p_now: NDArray, paths: NDArray) -> PriceProjection:
    """Project firm prices along simulated endogenous paths.

    ``paths`` has shape (L, horizon, 2m) laid out as (k_1..k_m, ratios_1..m);
    prices compound as the cumulative product of ``1 + k - exp(log_dp)``
    applied to ``p_now``.  Scaling ``p_now`` by a constant scales every output
    by the same constant.
    """
    p_now = np.asarray(p_now, float).ravel()
    paths = np.asarray(paths, float)
    if paths.ndim != 3 or paths.shape[2] != 2 * p_now.size:
        raise ValueError("paths must be (L, horizon, 2m) for m firms")
    m = p_now.size
    factors = 1.0 + paths[:, :, :m] - np.exp(paths[:, :, m:])
    bad = factors <= 0.0
    excluded = bad.any(axis=1)
    with np.errstate(invalid="ignore"):
        prices = np.cumprod(factors, axis=1) * p_now[None, None, :]
    # blank out every firm-path from its first nonpositive factor onward
    if excluded.any():
        first_bad = np.where(bad.any(axis=1, keepdims=True), bad.argmax(axis=1, keepdims=True), paths.shape[1])
        step = np.arange(paths.shape[1])[None, :, None]
        prices = np.where(step >= first_bad, np.nan, prices)
    return PriceProjection(prices=prices, excluded=excluded,
                           excluded_count=excluded.sum(axis=0).astype(int))


def forecast_bands(
    projection: PriceProjection | NDArray,
    levels: Sequence[float] = (0.025, 0.5, 0.975),
) -> dict:
    """Empirical quantile bands and the ensemble-mean "theoretical price".

    Returns arrays of shape (horizon, m): ``mean`` plus one entry per quantile
    level, with excluded paths ignored.  Needs at least 100 retained paths per
    firm at every horizon.
    """
    if isinstance(projection, PriceProjection):
        prices = projection.prices
        excluded_count = projection.excluded_count
    else:
        prices = np.asarray(projection, float)
        excluded_count = np.zeros(prices.shape[2], dtype=int)
    retained = np.sum(~np.isnan(prices), axis=0)
    if np.min(retained) < 100:
        raise ValueError("fewer than 100 retained paths at some horizon")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = {
            "mean": np.nanmean(prices, axis=0),
            "levels": tuple(levels),
            "excluded": excluded_count,
        }
        for lv in levels:
            out[f"q{lv}"] = np.nanquantile(prices, lv, axis=0)
    return out
