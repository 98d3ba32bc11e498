"""Batch command-line surface.

Subcommands: ``ingest`` (panel CSV to returns), ``mle`` (regime-switching fits
and chain summaries), ``gibbs`` (posterior draw tables and regime-probability
series), ``forecast`` (joint simulation, paths and bands), ``tailprob``
(importance-sampling tail table), ``ddm`` (price bands).  Every output file
embeds the tool version, config hash, seed, and git-describe string; rerunning
with the same inputs reproduces identical bytes.  Exit codes: 0 success,
2 configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import RunConfig, load_config
from .datasets import frame_to_panel
from .ddm import PricePanel, forecast_bands, panel_to_returns, project_prices
from .errors import ConfigError, MsvarError, NumericalError
from .estimation import em_fit_msar0, summarize_chain
from .importance import TiltSpec, estimate_tail_probabilities
from .rng import RngStream
from .sampler import TrainingData, gibbs_sp, simulate_joint

__all__ = ["main"]


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, check=False,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"


def _write_table(path: Path, frame: pd.DataFrame, cfg: RunConfig) -> None:
    header = (
        f"# msvar {__version__}\n"
        f"# config_hash={cfg.hash} seed={cfg.seed} git={_git_describe()}\n"
    )
    body = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    path.write_text(header + body)


def _read_panel(csv_path: str) -> PricePanel:
    path = Path(csv_path)
    if not path.exists():
        raise ConfigError(f"panel file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    try:
        panel = frame_to_panel(frame)
    except ValueError as exc:
        # locate the first offending data line for the error message
        msg = str(exc)
        price_cols = [c for c in frame.columns if c.startswith("price_")]
        if price_cols:
            bad = (frame[price_cols].to_numpy(float) <= 0).any(axis=1)
            if bad.any():
                line = int(np.argmax(bad)) + 2  # header is line 1
                msg = f"nonpositive price at line {line} of {path}"
        raise ConfigError(msg) from exc
    return panel


def _training_data(cfg: RunConfig):
    data_sec = cfg.data_section()
    panel = _read_panel(data_sec["panel_csv"])
    returns = panel_to_returns(panel, zero_dividend=data_sec["zero_dividend"])
    model = cfg.build_model()
    y_all = returns.endogenous()
    if y_all.shape[1] != model.n:
        raise ConfigError(
            f"model.n={model.n} but the panel implies {y_all.shape[1]} endogenous variables"
        )
    if y_all.shape[0] <= model.p:
        raise ConfigError("panel too short for the lag order")
    y_init = y_all[: model.p][::-1]
    y = y_all[model.p :]
    data = TrainingData(y=y, psi=np.ones((y.shape[0], model.l)), y_init=y_init)
    return model, data, panel, returns


def cmd_ingest(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    data_sec = cfg.data_section()
    panel = _read_panel(data_sec["panel_csv"])
    returns = panel_to_returns(panel, zero_dividend=data_sec["zero_dividend"])
    frame = pd.DataFrame({"date": list(returns.dates)})
    for j, tic in enumerate(returns.tickers):
        frame[f"k_{tic}"] = returns.k[:, j]
    for j, tic in enumerate(returns.tickers):
        frame[f"logdp_{tic}"] = returns.log_dp[:, j]
    _write_table(out_dir / "returns.csv", frame, cfg)
    print(f"ingested {len(panel.dates)} periods, {len(panel.tickers)} firms "
          f"-> {len(returns.dates)} return rows")
    for j, tic in enumerate(returns.tickers):
        print(f"  {tic}: mean k={returns.k[:, j].mean():.4f} sd k={returns.k[:, j].std():.4f} "
              f"mean log d/p={returns.log_dp[:, j].mean():.3f}")
    return 0


def cmd_mle(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    data_sec = cfg.data_section()
    panel = _read_panel(data_sec["panel_csv"])
    returns = panel_to_returns(panel, zero_dividend=data_sec["zero_dividend"])
    mle = cfg.mle_section()
    rows = []
    smoothed_frames = []
    for j, tic in enumerate(returns.tickers):
        series = returns.k[:, j]
        fit = em_fit_msar0(series, mle["n_regimes"], tol=mle["tol"],
                           max_iter=mle["max_iter"], restarts=mle["restarts"],
                           rng=RngStream(cfg.seed, 1000 + j))
        summary = summarize_chain(fit.p_hat, fit.c)
        for r in range(mle["n_regimes"]):
            rows.append((tic, "c", r + 1, fit.c[r]))
            rows.append((tic, "sigma", r + 1, fit.sigma[r]))
            rows.append((tic, "persistence", r + 1, summary.persistence[r]))
            rows.append((tic, "ergodic", r + 1, summary.ergodic[r]))
            for s in range(mle["n_regimes"]):
                rows.append((tic, f"P[{r + 1},:]", s + 1, fit.p_hat[r, s]))
        rows.append((tic, "longrun_mean", 0, summary.longrun))
        rows.append((tic, "loglik", 0, fit.loglik))
        one = em_fit_msar0(series, 1)
        rows.append((tic, "c_one_regime", 0, one.c[0]))
        rows.append((tic, "sigma_one_regime", 0, one.sigma[0]))
        sf = pd.DataFrame({"ticker": tic, "date": list(returns.dates), "k": series})
        for r in range(mle["n_regimes"]):
            sf[f"prob_regime_{r + 1}"] = fit.smoothed[:, r]
        smoothed_frames.append(sf)
    report = pd.DataFrame(rows, columns=["ticker", "quantity", "index", "value"])
    _write_table(out_dir / "mle_report.csv", report, cfg)
    _write_table(out_dir / "smoothed_probabilities.csv", pd.concat(smoothed_frames), cfg)
    print(f"fitted {len(returns.tickers)} firms with {mle['n_regimes']} regimes")
    return 0


def cmd_gibbs(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    model, data, _, returns = _training_data(cfg)
    smp = cfg.sampler_section()
    draws = gibbs_sp(
        data.y, data.designs(), model.priors, model.dirichlet,
        iters=smp["burnin"] + smp["draws"] * smp["thin"],
        burnin=smp["burnin"], thin=smp["thin"], rng=RngStream(cfg.seed),
        regime_update=smp["regime_update"],
    )
    rows = []
    for i, dr in enumerate(draws):
        for r in range(dr.p_full.shape[0]):
            for c in range(dr.p_full.shape[1]):
                rows.append((i, r, c + 1, dr.p_full[r, c]))
    _write_table(out_dir / "gibbs_transition_draws.csv",
                 pd.DataFrame(rows, columns=["draw", "from_state", "to_state", "value"]), cfg)
    freq = np.zeros((data.t, model.n_regimes))
    for dr in draws:
        for j in range(model.n_regimes):
            freq[:, j] += dr.path == j + 1
    freq /= len(draws)
    dates = list(returns.dates[model.p:])
    prob = pd.DataFrame({"u": np.arange(1, data.t + 1), "date": dates})
    for j in range(model.n_regimes):
        prob[f"prob_regime_{j + 1}"] = freq[:, j]
    _write_table(out_dir / "gibbs_regime_probs.csv", prob, cfg)
    print(f"retained {len(draws)} Gibbs draws over t={data.t} observations")
    return 0


def _run_simulation(cfg: RunConfig, threads: int):
    model, data, panel, returns = _training_data(cfg)
    smp = cfg.sampler_section()
    horizon = cfg.horizon()
    ensemble = simulate_joint(
        model, data, horizon=horizon, n_draws=smp["draws"], rng=RngStream(cfg.seed),
        burnin=smp["burnin"], thin=smp["thin"], regime_update=smp["regime_update"],
        threads=threads,
    )
    return model, data, panel, returns, ensemble, horizon


def cmd_forecast(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    model, _, _, returns, ensemble, horizon = _run_simulation(cfg, threads)
    n_draws = ensemble.paths.shape[0]
    flat = ensemble.paths.reshape(n_draws * horizon, model.n)
    frame = pd.DataFrame({
        "draw": np.repeat(np.arange(n_draws), horizon),
        "step": np.tile(np.arange(1, horizon + 1), n_draws),
    })
    names = [f"k_{t}" for t in returns.tickers] + [f"logdp_{t}" for t in returns.tickers]
    for j, name in enumerate(names):
        frame[name] = flat[:, j]
    _write_table(out_dir / "forecast_paths.csv", frame, cfg)
    rows = []
    for j, name in enumerate(names):
        block = ensemble.paths[:, :, j]
        for step in range(horizon):
            col = block[:, step]
            rows.append((step + 1, name, col.mean(), *np.quantile(col, [0.025, 0.5, 0.975])))
    bands = pd.DataFrame(rows, columns=["step", "variable", "mean", "q2.5", "q50", "q97.5"])
    _write_table(out_dir / "forecast_bands.csv", bands, cfg)
    print(f"simulated {n_draws} joint draws over horizon {horizon}")
    return 0


def cmd_tailprob(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    model, data, _, _ = _training_data(cfg)
    smp = cfg.sampler_section()
    tilts = [TiltSpec(z=t["z"], x=t["x"], u=t["u"]) for t in cfg.tilts_section(model.n)]
    result = estimate_tail_probabilities(
        model, data, tilts, smp["draws"], RngStream(cfg.seed),
        burnin=smp["burnin"], thin=smp["thin"], regime_update=smp["regime_update"],
        threads=threads,
    )
    frame = pd.DataFrame(
        [(e.u, e.x, e.p_hat, e.std_error, e.ess, e.variance_reduction) for e in result.estimates],
        columns=["u", "x", "p_hat", "std_error", "ess", "vrf"],
    )
    _write_table(out_dir / "tailprob.csv", frame, cfg)
    print(f"estimated {len(tilts)} tail probabilities from {smp['draws']} tilted draws")
    return 0


def cmd_ddm(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    model, _, panel, returns, ensemble, horizon = _run_simulation(cfg, threads)
    projection = project_prices(panel.prices[-1], ensemble.paths)
    bands = forecast_bands(projection, levels=(0.025, 0.5, 0.975))
    rows = []
    for step in range(horizon):
        for j, tic in enumerate(returns.tickers):
            rows.append((
                step + 1, tic, bands["mean"][step, j],
                bands["q0.025"][step, j], bands["q0.5"][step, j], bands["q0.975"][step, j],
                int(bands["excluded"][j]),
            ))
    frame = pd.DataFrame(rows, columns=["horizon", "ticker", "mean", "q2.5", "q50", "q97.5",
                                        "excluded_paths"])
    _write_table(out_dir / "ddm_bands.csv", frame, cfg)
    print(f"projected prices for {len(returns.tickers)} firms over {horizon} quarters "
          f"({int(projection.excluded.sum())} excluded path-firm pairs)")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "mle": cmd_mle,
    "gibbs": cmd_gibbs,
    "forecast": cmd_forecast,
    "tailprob": cmd_tailprob,
    "ddm": cmd_ddm,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="msvar", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker-thread cap")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, max(args.threads, 1))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__module__}.{type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    except MsvarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
