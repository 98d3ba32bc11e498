import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats as sps

from msvar.datasets import frame_to_panel, load_synthetic_panel, make_synthetic_panel, panel_frame
from msvar.ddm import (
    PricePanel,
    forecast_bands,
    panel_to_returns,
    project_prices,
    reconstruct_prices,
)


def small_panel():
    return PricePanel(
        dates=("2020Q1", "2020Q2", "2020Q3"),
        prices=np.array([[100.0, 50.0], [105.0, 52.0], [103.0, 55.0]]),
        dividends=np.array([[1.0, 0.5], [2.0, 0.6], [1.5, 0.7]]),
        tickers=("AAA", "BBB"),
    )


class TestPanelToReturns:
    def test_arithmetic(self):
        ret = panel_to_returns(small_panel())
        assert_allclose(ret.k[0, 0], (105.0 + 2.0) / 100.0 - 1.0, atol=1e-15)
        assert_allclose(ret.log_dp[0, 0], np.log(2.0 / 100.0), atol=1e-15)

    def test_round_trip_identity(self):
        panel = small_panel()
        ret = panel_to_returns(panel)
        rec = reconstruct_prices(panel, ret)
        assert np.max(np.abs(rec - panel.prices[1:]) / panel.prices[1:]) < 1e-12

    def test_zero_dividend_drop(self):
        panel = PricePanel(
            dates=("q1", "q2", "q3"),
            prices=np.array([[100.0], [105.0], [110.0]]),
            dividends=np.array([[1.0], [0.0], [1.2]]),
            tickers=("AAA",),
        )
        ret = panel_to_returns(panel, zero_dividend="drop")
        assert ret.dates == ("q3",)
        assert ret.k.shape == (1, 1)

    def test_zero_dividend_floor_warns(self):
        panel = PricePanel(
            dates=("q1", "q2"),
            prices=np.array([[100.0], [105.0]]),
            dividends=np.array([[1.0], [0.0]]),
            tickers=("AAA",),
        )
        with pytest.warns(RuntimeWarning):
            ret = panel_to_returns(panel, zero_dividend="floor")
        assert np.isfinite(ret.log_dp).all()

    def test_invalid_policy(self):
        with pytest.raises(ValueError):
            panel_to_returns(small_panel(), zero_dividend="ignore")

    def test_nonpositive_prices_rejected(self):
        with pytest.raises(ValueError):
            PricePanel(dates=("a",), prices=np.array([[0.0]]),
                       dividends=np.array([[0.1]]), tickers=("x",))


class TestProjectPrices:
    def test_unit_factors_hold_price_constant(self):
        # k equals the dividend yield at every step: growth factor is exactly 1
        log_dp = np.log(0.01)
        paths = np.zeros((5, 4, 2))
        paths[:, :, 0] = 0.01
        paths[:, :, 1] = log_dp
        proj = project_prices(np.array([123.0]), paths)
        assert_allclose(proj.prices, 123.0, atol=1e-12)

    def test_single_step_arithmetic(self):
        paths = np.zeros((1, 1, 2))
        paths[0, 0, 0] = 0.05
        paths[0, 0, 1] = np.log(0.01)
        proj = project_prices(np.array([100.0]), paths)
        assert_allclose(proj.prices[0, 0, 0], 104.0, atol=1e-12)

    def test_lognormal_quantiles(self):
        # growth factor = exp(Z) with Z normal: price quantiles are lognormal
        gen = np.random.default_rng(0)
        n_paths, mu_z, sd_z = 40_000, 0.01, 0.05
        z = mu_z + sd_z * gen.standard_normal(n_paths)
        log_dp = np.log(0.008)
        paths = np.zeros((n_paths, 1, 2))
        paths[:, 0, 0] = np.exp(z) - 1.0 + 0.008
        paths[:, 0, 1] = log_dp
        proj = project_prices(np.array([100.0]), paths)
        bands = forecast_bands(proj, levels=(0.025, 0.5, 0.975))
        for lv in (0.025, 0.5, 0.975):
            analytic = 100.0 * np.exp(mu_z + sd_z * sps.norm.ppf(lv))
            assert abs(bands[f"q{lv}"][0, 0] - analytic) / analytic < 0.01

    def test_currency_rescaling_equivariance(self):
        gen = np.random.default_rng(1)
        paths = np.stack([gen.normal(0.02, 0.05, size=(200, 3)),
                          np.full((200, 3), np.log(0.01))], axis=2)
        base = project_prices(np.array([50.0]), paths)
        scaled = project_prices(np.array([500.0]), paths)
        assert_allclose(scaled.prices, 10.0 * base.prices, rtol=1e-15)

    def test_nonpositive_factor_excluded_and_counted(self):
        paths = np.zeros((3, 2, 2))
        paths[:, :, 0] = 0.05
        paths[:, :, 1] = np.log(0.01)
        paths[1, 1, 0] = -1.5  # second path crosses zero at step 2
        proj = project_prices(np.array([10.0]), paths)
        assert proj.excluded_count[0] == 1
        assert np.isnan(proj.prices[1, 1, 0])
        assert not np.isnan(proj.prices[1, 0, 0])  # step before the crossing survives


class TestForecastBands:
    def test_degenerate_ensemble(self):
        paths = np.zeros((150, 3, 2))
        paths[:, :, 0] = 0.03
        paths[:, :, 1] = np.log(0.01)
        proj = project_prices(np.array([80.0]), paths)
        bands = forecast_bands(proj)
        for lv in (0.025, 0.5, 0.975):
            assert_allclose(bands[f"q{lv}"], bands["mean"], atol=1e-9)

    def test_band_ordering_and_nesting(self):
        gen = np.random.default_rng(2)
        paths = np.stack([gen.normal(0.02, 0.06, size=(500, 4)),
                          np.full((500, 4), np.log(0.01))], axis=2)
        proj = project_prices(np.array([60.0]), paths)
        bands = forecast_bands(proj, levels=(0.025, 0.25, 0.5, 0.75, 0.975))
        assert np.all(bands["q0.025"] <= bands["q0.25"])
        assert np.all(bands["q0.25"] <= bands["q0.5"])
        assert np.all(bands["q0.5"] <= bands["q0.75"])
        assert np.all(bands["q0.75"] <= bands["q0.975"])

    def test_minimum_path_count_enforced(self):
        paths = np.zeros((50, 1, 2))
        with pytest.raises(ValueError):
            forecast_bands(project_prices(np.array([10.0]), paths))


class TestSyntheticPanel:
    def test_generation_is_deterministic(self):
        a = make_synthetic_panel()
        b = make_synthetic_panel()
        assert np.array_equal(a.prices, b.prices)
        assert np.array_equal(a.dividends, b.dividends)

    def test_shipped_csv_matches_generator(self):
        generated = make_synthetic_panel()
        shipped = load_synthetic_panel()
        assert shipped.dates == generated.dates
        assert np.array_equal(shipped.prices, generated.prices)
        assert np.array_equal(shipped.dividends, generated.dividends)

    def test_frame_round_trip(self):
        panel = small_panel()
        back = frame_to_panel(panel_frame(panel))
        assert np.array_equal(back.prices, panel.prices)
        assert back.tickers == panel.tickers

    def test_unknown_columns_rejected(self):
        frame = panel_frame(small_panel())
        frame["volume_AAA"] = 1.0
        with pytest.raises(ValueError):
            frame_to_panel(frame)
