"""Run configuration: a single strict JSON document.

Unknown keys are rejected at every level so that a typo cannot silently fall
back to a default.  The canonical serialization of the loaded document is
hashed into every output header, which together with the seed makes runs
byte-replayable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .priors import MinnesotaConfig, NiwPrior, minnesota_niw
from .regimes import DirichletPriorSet
from .sampler import REGIME_UPDATE_MODES, MsVarModel

__all__ = ["RunConfig", "load_config", "config_hash"]

_TOP_KEYS = {"seed", "model", "priors", "dirichlet_alpha", "sampler", "forecast",
             "tilts", "mle", "data"}
_MODEL_KEYS = {"n", "l", "p", "n_regimes"}
_PRIOR_KEYS = {"nu0", "v0_diag", "minnesota"}
_MINNESOTA_KEYS = {"phi", "eps", "lambda1", "lambda2", "tau", "intercept_mean"}
_SAMPLER_KEYS = {"draws", "burnin", "thin", "regime_update"}
_FORECAST_KEYS = {"horizon"}
_TILT_KEYS = {"z", "x", "u"}
_MLE_KEYS = {"n_regimes", "restarts", "tol", "max_iter"}
_DATA_KEYS = {"panel_csv", "zero_dividend"}


def _require_keys(section: dict, allowed: set, name: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {sorted(unknown)}")


def _get(section: dict, key: str, name: str) -> Any:
    if key not in section:
        raise ConfigError(f"missing required key '{name}.{key}'")
    return section[key]


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration plus the hash of its source document."""

    raw: dict
    seed: int
    hash: str
    path: str

    # ----- sections ---------------------------------------------------
    def data_section(self) -> dict:
        data = _get(self.raw, "data", "<top>")
        _require_keys(data, _DATA_KEYS, "data")
        if "panel_csv" not in data:
            raise ConfigError("missing required key 'data.panel_csv'")
        policy = data.get("zero_dividend", "drop")
        if policy not in ("drop", "floor"):
            raise ConfigError("'data.zero_dividend' must be 'drop' or 'floor'")
        return {"panel_csv": str(data["panel_csv"]), "zero_dividend": policy}

    def mle_section(self) -> dict:
        mle = self.raw.get("mle", {})
        _require_keys(mle, _MLE_KEYS, "mle")
        out = {
            "n_regimes": int(mle.get("n_regimes", 3)),
            "restarts": int(mle.get("restarts", 20)),
            "tol": float(mle.get("tol", 1e-8)),
            "max_iter": int(mle.get("max_iter", 500)),
        }
        if out["n_regimes"] < 1 or out["restarts"] < 1 or out["max_iter"] < 1:
            raise ConfigError("'mle' entries must be positive")
        return out

    def sampler_section(self) -> dict:
        smp = self.raw.get("sampler", {})
        _require_keys(smp, _SAMPLER_KEYS, "sampler")
        out = {
            "draws": int(_get(smp, "draws", "sampler")),
            "burnin": int(smp.get("burnin", 500)),
            "thin": int(smp.get("thin", 1)),
            "regime_update": str(smp.get("regime_update", "marginal")),
        }
        if out["draws"] < 1 or out["burnin"] < 0 or out["thin"] < 1:
            raise ConfigError("'sampler' counts out of range")
        if out["regime_update"] not in REGIME_UPDATE_MODES:
            raise ConfigError(f"'sampler.regime_update' must be one of {REGIME_UPDATE_MODES}")
        return out

    def horizon(self) -> int:
        fc = self.raw.get("forecast", {})
        _require_keys(fc, _FORECAST_KEYS, "forecast")
        h = int(_get(fc, "horizon", "forecast"))
        if h < 1:
            raise ConfigError("'forecast.horizon' must be >= 1")
        return h

    def tilts_section(self, n: int) -> list[dict]:
        tilts = self.raw.get("tilts")
        if not tilts:
            raise ConfigError("missing required key 'tilts'")
        out = []
        for i, item in enumerate(tilts):
            _require_keys(item, _TILT_KEYS, f"tilts[{i}]")
            z = np.asarray(_get(item, "z", f"tilts[{i}]"), float)
            if z.size != n:
                raise ConfigError(f"'tilts[{i}].z' must have length n={n}")
            x = float(_get(item, "x", f"tilts[{i}]"))
            if not np.isfinite(x):
                raise ConfigError(f"'tilts[{i}].x' must be finite")
            out.append({"z": z, "x": x, "u": int(_get(item, "u", f"tilts[{i}]"))})
        return out

    # ----- model construction -----------------------------------------
    def dims(self) -> tuple[int, int, int, int]:
        model = _get(self.raw, "model", "<top>")
        _require_keys(model, _MODEL_KEYS, "model")
        n = int(_get(model, "n", "model"))
        l = int(_get(model, "l", "model"))
        p = int(_get(model, "p", "model"))
        n_regimes = int(_get(model, "n_regimes", "model"))
        if min(n, l, p, n_regimes) < 1:
            raise ConfigError("'model' dimensions must be positive")
        return n, l, p, n_regimes

    def build_model(self) -> MsVarModel:
        n, l, p, n_regimes = self.dims()
        priors_sec = _get(self.raw, "priors", "<top>")
        _require_keys(priors_sec, _PRIOR_KEYS, "priors")
        nu0_raw = priors_sec.get("nu0", n + 2)
        nu0 = [float(v) for v in (nu0_raw if isinstance(nu0_raw, list) else [nu0_raw] * n_regimes)]
        v0_raw = _get(priors_sec, "v0_diag", "priors")
        if not isinstance(v0_raw[0], list):
            v0_raw = [v0_raw] * n_regimes
        if len(v0_raw) != n_regimes or len(nu0) != n_regimes:
            raise ConfigError("'priors.nu0'/'priors.v0_diag' must cover every regime")
        mn = _get(priors_sec, "minnesota", "priors")
        _require_keys(mn, _MINNESOTA_KEYS, "priors.minnesota")
        intercept = mn.get("intercept_mean")
        if intercept is not None and not isinstance(intercept[0], list):
            intercept = [intercept] * n_regimes
        priors: list[NiwPrior] = []
        try:
            for j in range(n_regimes):
                cfg = MinnesotaConfig(
                    phi=np.asarray(_get(mn, "phi", "priors.minnesota"), float),
                    eps=float(_get(mn, "eps", "priors.minnesota")),
                    lambda1=float(_get(mn, "lambda1", "priors.minnesota")),
                    lambda2=float(_get(mn, "lambda2", "priors.minnesota")),
                    tau=np.asarray(_get(mn, "tau", "priors.minnesota"), float),
                    p=p,
                    l=l,
                    intercept_mean=None if intercept is None else np.asarray(intercept[j], float),
                )
                if cfg.n != n:
                    raise ConfigError("'priors.minnesota.phi' length must equal model.n")
                diag = np.asarray(v0_raw[j], float)
                if diag.size != n or np.any(diag <= 0):
                    raise ConfigError("'priors.v0_diag' rows must be n positive entries")
                priors.append(minnesota_niw(cfg, nu0[j], np.diag(diag)))
        except ValueError as exc:
            raise ConfigError(f"invalid prior configuration: {exc}") from exc
        alpha = self.raw.get("dirichlet_alpha")
        if alpha is None:
            alpha = np.ones((n_regimes + 1, n_regimes))
        else:
            alpha = np.asarray(alpha, float)
        try:
            dirichlet = DirichletPriorSet(alpha)
        except ValueError as exc:
            raise ConfigError(f"invalid 'dirichlet_alpha': {exc}") from exc
        if dirichlet.n_regimes != n_regimes:
            raise ConfigError("'dirichlet_alpha' shape must be (n_regimes+1, n_regimes)")
        try:
            return MsVarModel(priors=tuple(priors), dirichlet=dirichlet, p=p, l=l)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    """Load, strictly validate, and hash a JSON run configuration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(raw, _TOP_KEYS, "<top>")
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("missing required key 'seed' (or pass --seed)")
    return RunConfig(raw=raw, seed=int(seed), hash=config_hash(raw), path=str(path))
