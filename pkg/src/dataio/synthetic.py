"""Seeded mixed-frequency data with regime switching, written as a loadable bundle."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd
from loguru import logger

from src.errors import ConfigError


@dataclass(frozen=True)
class SyntheticDesign:
    """Monthly latent factor with a two-regime mean, observed at three frequencies.

    The quarterly target is the quarter's average factor plus noise. Monthly
    indicators load on the factor; daily series are price levels whose log
    returns drift with the current month's factor.
    """

    n_quarters: int = 80
    start: str = "1990Q1"
    n_monthly: int = 3
    n_daily: int = 1
    persistence: float = 0.6
    regime_means: tuple = (0.5, -1.0)
    stay_probabilities: tuple = (0.95, 0.8)
    factor_noise: float = 0.5
    target_noise: float = 0.2
    indicator_noise: float = 0.5
    holiday_rate: float = 0.01

    def __post_init__(self) -> None:
        if self.n_quarters < 8:
            raise ConfigError("Synthetic data needs at least 8 quarters, got {}".format(self.n_quarters))
        if self.n_monthly < 0 or self.n_daily < 0:
            raise ConfigError("Series counts must be nonnegative")
        if not -1.0 < self.persistence < 1.0:
            raise ConfigError("Factor persistence must lie in (-1, 1), got {}".format(self.persistence))


@dataclass
class SyntheticPanel:
    target: pd.Series
    monthly: Dict[str, pd.Series]
    daily: Dict[str, pd.Series]
    regimes: np.ndarray


def _regimes(n_months: int, stay: tuple, rng: np.random.Generator) -> np.ndarray:
    path = np.empty(n_months, dtype=int)
    path[0] = 0
    draws = rng.random(n_months)
    for m in range(1, n_months):
        previous = path[m - 1]
        path[m] = previous if draws[m] < stay[previous] else 1 - previous
    return path


def simulate_panel(design: SyntheticDesign, seed: int) -> SyntheticPanel:
    """Draw one realization of the design; identical seeds give identical panels."""
    rng = np.random.default_rng(seed)
    quarters = pd.period_range(pd.Period(design.start, freq="Q"), periods=design.n_quarters, freq="Q")
    months = pd.period_range(quarters[0].asfreq("M", how="start"), quarters[-1].asfreq("M", how="end"), freq="M")
    regimes = _regimes(len(months), design.stay_probabilities, rng)
    shocks = rng.standard_normal(len(months)) * design.factor_noise
    factor = np.empty(len(months))
    level = 0.0
    for m, regime in enumerate(regimes):
        level = design.regime_means[regime] * (1.0 - design.persistence) + design.persistence * level + shocks[m]
        factor[m] = level

    quarterly_factor = factor.reshape(design.n_quarters, 3).mean(axis=1)
    target = quarterly_factor + design.target_noise * rng.standard_normal(design.n_quarters)
    target_index = quarters.to_timestamp(how="start")

    monthly: Dict[str, pd.Series] = {}
    for i in range(design.n_monthly):
        loading = 0.5 + rng.random()
        values = loading * factor + design.indicator_noise * rng.standard_normal(len(months))
        code = "M{}".format(i + 1)
        monthly[code] = pd.Series(values, index=months.to_timestamp(how="start"), name=code)

    daily: Dict[str, pd.Series] = {}
    days = pd.bdate_range(months[0].start_time, months[-1].end_time.normalize())
    month_of_day = days.to_period("M")
    day_factor = factor[months.get_indexer(month_of_day)]
    for i in range(design.n_daily):
        returns = 0.001 * day_factor + 0.01 * rng.standard_normal(days.size)
        prices = 100.0 * np.exp(np.cumsum(returns))
        keep = rng.random(days.size) >= design.holiday_rate
        keep[:5] = True
        code = "D{}".format(i + 1)
        daily[code] = pd.Series(prices[keep], index=days[keep], name=code)
    return SyntheticPanel(
        target=pd.Series(target, index=target_index, name="Y"), monthly=monthly, daily=daily, regimes=regimes
    )


def _write_csv(series: pd.Series, path: Path) -> None:
    frame = pd.DataFrame({"date": series.index.strftime("%Y-%m-%d"), "value": series.to_numpy()})
    frame.to_csv(path, index=False, float_format="%.10g")


def _entry(code: str, frequency: str, transform_code: int) -> dict:
    return {
        "code": code,
        "path": "{}.csv".format(code),
        "frequency": frequency,
        "transform_code": transform_code,
        "group": frequency,
    }


def write_bundle(out_dir: Path | str, design: SyntheticDesign, seed: int) -> Path:
    """Write CSV files and a manifest for one synthetic panel.

    The target is also the quarterly input group; monthly indicators are
    level series (code 1) and daily prices enter as log returns (code 5).

    Returns:
        Path: Location of ``manifest.json``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = simulate_panel(design, seed)
    entries: List[dict] = [_entry("Y", "quarterly", 1)]
    _write_csv(panel.target, out_dir / "Y.csv")
    for code, series in panel.monthly.items():
        _write_csv(series, out_dir / "{}.csv".format(code))
        entries.append(_entry(code, "monthly", 1))
    for code, series in panel.daily.items():
        _write_csv(series, out_dir / "{}.csv".format(code))
        entries.append(_entry(code, "daily", 5))
    manifest = {"target": "Y", "series": entries}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote synthetic bundle with {} series to {}", len(entries), out_dir)
    return manifest_path
