"""Packaged synthetic data.

A deterministic three-firm quarterly price/dividend panel generated from a
seeded regime-switching process: regime-dependent required returns plus a
slow-moving log dividend-to-price ratio, compounded into prices through the
one-period accounting identity.  Shipped as CSV so the CLI has a ready input;
:func:`make_synthetic_panel` regenerates it bit-for-bit.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
import pandas as pd

from .ddm import PricePanel

__all__ = ["make_synthetic_panel", "load_synthetic_panel", "panel_frame", "frame_to_panel"]

_TICKERS = ("AAA", "BBB", "CCC")
_SEED = 20240815


def make_synthetic_panel(seed: int = _SEED, n_quarters: int = 120) -> PricePanel:
    """Simulate the packaged three-firm panel (deterministic for a given seed)."""
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    m = 3
    trans = np.array([
        [0.70, 0.25, 0.05],
        [0.08, 0.87, 0.05],
        [0.25, 0.55, 0.20],
    ])
    c = np.array([
        [0.10, 0.07, 0.09],      # up regime, per firm
        [0.018, 0.015, 0.02],    # normal
        [-0.08, -0.05, -0.06],
    ])
    vol = np.array([
        [0.05, 0.06, 0.05],
        [0.03, 0.03, 0.04],
        [0.06, 0.05, 0.06],
    ])
    log_dp_mean = np.log([0.006, 0.007, 0.005])
    state = 1
    log_dp = log_dp_mean.copy()
    prices = np.empty((n_quarters, m))
    dividends = np.empty((n_quarters, m))
    p_prev = np.array([150.0, 160.0, 55.0])
    dates = []
    year, quarter = 1994, 1
    for t in range(n_quarters):
        state = int(gen.choice(3, p=trans[state]))
        k = c[state] + vol[state] * gen.standard_normal(m)
        log_dp = log_dp_mean + 0.8 * (log_dp - log_dp_mean) + 0.08 * gen.standard_normal(m)
        growth = 1.0 + k - np.exp(log_dp)
        p_new = np.maximum(growth, 0.55) * p_prev
        prices[t] = p_new
        dividends[t] = np.exp(log_dp) * p_prev
        p_prev = p_new
        dates.append(f"{year}Q{quarter}")
        quarter += 1
        if quarter > 4:
            quarter, year = 1, year + 1
    return PricePanel(dates=tuple(dates), prices=prices, dividends=dividends, tickers=_TICKERS)


def panel_frame(panel: PricePanel) -> pd.DataFrame:
    """Tabular form with the CLI input schema: date, price_<ticker>, dividend_<ticker>."""
    data = {"date": list(panel.dates)}
    for j, tic in enumerate(panel.tickers):
        data[f"price_{tic}"] = panel.prices[:, j]
    for j, tic in enumerate(panel.tickers):
        data[f"dividend_{tic}"] = panel.dividends[:, j]
    return pd.DataFrame(data)


def frame_to_panel(frame: pd.DataFrame) -> PricePanel:
    """Parse a schema-conforming data frame back into a panel."""
    cols = list(frame.columns)
    if not cols or cols[0] != "date":
        raise ValueError("first column must be 'date'")
    price_cols = [c for c in cols if c.startswith("price_")]
    div_cols = [c for c in cols if c.startswith("dividend_")]
    tickers = [c[len("price_"):] for c in price_cols]
    if [c[len("dividend_"):] for c in div_cols] != tickers:
        raise ValueError("price_<ticker> and dividend_<ticker> columns must align")
    extra = set(cols) - {"date", *price_cols, *div_cols}
    if extra:
        raise ValueError(f"unknown columns: {sorted(extra)}")
    return PricePanel(
        dates=tuple(str(d) for d in frame["date"]),
        prices=frame[price_cols].to_numpy(float),
        dividends=frame[div_cols].to_numpy(float),
        tickers=tuple(tickers),
    )


def load_synthetic_panel() -> PricePanel:
    """Load the shipped CSV copy of the synthetic panel."""
    with resources.files("msvar.data").joinpath("synthetic_panel.csv").open("r") as fh:
        return frame_to_panel(pd.read_csv(fh, float_precision="round_trip"))
