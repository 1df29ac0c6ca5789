"""Holiday filling and calendar regularization onto the tempo grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.dataio.transforms import Frequency, RawSeries
from src.errors import ConfigError, DataError
from src.esn.mfesn import FrequencyGroup, MultiFreqSeries

HOLIDAY_LOOKBACK = 5
DEFAULT_DAILY_KAPPA = 60
MONTHS_PER_QUARTER = 3


def interpolate_holidays(series: RawSeries, calendar: Optional[pd.DatetimeIndex] = None) -> RawSeries:
    """Fill missing business days with the mean of the five preceding values.

    Gaps are filled left to right, so a fill can feed the ones after it.
    Observed values are never altered.

    Args:
        series: Daily series; missing days are absent rows or NaN values.
        calendar: Business days to cover. Defaults to Monday-Friday between
            the first and last observation.

    Raises:
        DataError: If fewer than five values precede the first gap.
    """
    if series.frequency is not Frequency.DAILY:
        raise ConfigError(
            "Holiday interpolation applies to daily series, {} is {}".format(series.code, series.frequency.value)
        )
    observed = series.observations.dropna()
    if observed.empty:
        raise DataError("Daily series has no observations", code=series.code)
    if calendar is None:
        calendar = pd.bdate_range(observed.index[0], observed.index[-1])
    calendar = calendar[(calendar >= observed.index[0]) & (calendar <= observed.index[-1])]
    full = observed.reindex(calendar.union(observed.index))
    values = full.to_numpy(dtype=float, copy=True)
    missing = np.flatnonzero(np.isnan(values))
    for position in missing:
        if position < HOLIDAY_LOOKBACK:
            raise DataError(
                "Gap on {} has fewer than {} preceding observations".format(
                    full.index[position].date(), HOLIDAY_LOOKBACK
                ),
                code=series.code,
            )
        values[position] = values[position - HOLIDAY_LOOKBACK : position].mean()
    if missing.size:
        logger.debug("Filled {} holiday gaps in {}", missing.size, series.code)
    return series.with_observations(pd.Series(values, index=full.index, name=series.code))


def kappa_for(frequency: Frequency, daily_kappa: int = DEFAULT_DAILY_KAPPA) -> int:
    if frequency is Frequency.QUARTERLY:
        return 1
    if frequency is Frequency.MONTHLY:
        return MONTHS_PER_QUARTER
    if daily_kappa < 1:
        raise ConfigError("Daily kappa must be positive, got {}".format(daily_kappa))
    return daily_kappa


def daily_bins(quarter: pd.Period, kappa: int) -> np.ndarray:
    """Bin index of every business day of ``quarter`` on a ``kappa``-bin grid."""
    days = pd.bdate_range(quarter.start_time, quarter.end_time.normalize())
    if days.size < kappa:
        raise DataError("Quarter {} has {} business days, fewer than kappa={}".format(quarter, days.size, kappa))
    return (np.arange(days.size) * kappa) // days.size


def _sub_period_values(observations: pd.Series, frequency: Frequency, kappa: int, code: str) -> pd.Series:
    """Observations keyed by (quarter, chronological sub-index), one value per bin."""
    observations = observations.dropna()
    quarters = observations.index.to_period("Q")
    if frequency is Frequency.QUARTERLY:
        positions = np.zeros(observations.size, dtype=int)
    elif frequency is Frequency.MONTHLY:
        positions = (observations.index.month.to_numpy() - 1) % MONTHS_PER_QUARTER
    else:
        positions = np.empty(observations.size, dtype=int)
        for quarter in quarters.unique():
            mask = quarters == quarter
            days = pd.bdate_range(quarter.start_time, quarter.end_time.normalize())
            bins = daily_bins(quarter, kappa)
            slot = days.get_indexer(observations.index[mask].normalize())
            if np.any(slot < 0):
                raise DataError("Daily observation outside the business-day calendar in {}".format(quarter), code=code)
            positions[mask] = bins[slot]
    keyed = pd.Series(observations.to_numpy(dtype=float), index=pd.MultiIndex.from_arrays([quarters, positions]))
    if frequency is not Frequency.DAILY and keyed.index.has_duplicates:
        raise DataError("Several observations fall in the same {} slot".format(frequency.name.lower()), code=code)
    # last observation of each bin
    return keyed.groupby(level=[0, 1]).last()


def _check_coverage(keyed: pd.Series, kappa: int, code: str) -> None:
    quarters = keyed.index.get_level_values(0)
    first, last = quarters.min(), quarters.max()
    for quarter in pd.period_range(first, last, freq="Q"):
        present = set(keyed.loc[quarter].index) if quarter in quarters else set()
        expected = set(range(kappa))
        if quarter == first:
            expected = {s for s in expected if s >= min(present)} if present else expected
        if quarter == last:
            expected = {s for s in expected if s <= max(present)} if present else expected
        missing = expected - present
        if missing:
            raise DataError(
                "Insufficient coverage in {}: sub-periods {} have no observation".format(quarter, sorted(missing)),
                code=code,
            )


def tempo_array(
    observations: pd.Series, frequency: Frequency, kappa: int, periods: pd.PeriodIndex, code: str
) -> np.ndarray:
    """Place a series on the ``T x kappa`` tempo grid of ``periods``.

    The last sub-observation of quarter u is ``(u, 0)``; earlier ones are
    ``(u - 1, j + 1)``. Slots without data stay NaN.
    """
    keyed = _sub_period_values(observations, frequency, kappa, code)
    _check_coverage(keyed, kappa, code)
    grid = np.full((len(periods), kappa), np.nan)
    quarter_pos = periods.get_indexer(keyed.index.get_level_values(0))
    sub = keyed.index.get_level_values(1).to_numpy()
    row = np.where(sub == kappa - 1, quarter_pos, quarter_pos - 1)
    col = np.where(sub == kappa - 1, 0, sub + 1)
    # quarters outside the reference span map to -1 or past the end
    inside = (quarter_pos >= 0) & (row >= 0) & (row < len(periods))
    grid[row[inside], col[inside]] = keyed.to_numpy()[inside]
    return grid


@dataclass(frozen=True)
class SeriesGroup:
    name: str
    frequency: Frequency
    members: Tuple[pd.Series, ...]


def regularize_calendar(
    target: pd.Series, groups: Sequence[SeriesGroup], daily_kappa: int = DEFAULT_DAILY_KAPPA
) -> MultiFreqSeries:
    """Assemble transformed series into a quarterly ``MultiFreqSeries``.

    Monthly groups get kappa=3, daily groups ``daily_kappa`` bins per quarter
    keeping the last observation in each bin, quarterly groups kappa=1. With
    no input groups the target itself is the single quarterly input.

    Raises:
        DataError: If the target has gaps or a bin inside a series' span is empty.
    """
    target = target.dropna()
    if target.empty:
        raise DataError("Target series is empty")
    periods = target.index.to_period("Q")
    if periods.has_duplicates or len(periods) != len(pd.period_range(periods[0], periods[-1], freq="Q")):
        raise DataError("Target must have exactly one observation per consecutive quarter", code=str(target.name))
    periods = pd.PeriodIndex(periods, freq="Q")
    if not groups:
        groups = [SeriesGroup(name="target", frequency=Frequency.QUARTERLY, members=(target,))]

    assembled = []
    for group in groups:
        kappa = kappa_for(group.frequency, daily_kappa)
        blocks = [
            tempo_array(member, group.frequency, kappa, periods, str(member.name)) for member in group.members
        ]
        values = np.stack(blocks, axis=2)
        assembled.append(
            FrequencyGroup(
                name=group.name, kappa=kappa, values=values, columns=tuple(str(m.name) for m in group.members)
            )
        )
        logger.debug("Group {}: kappa={} dim={}", group.name, kappa, len(group.members))
    return MultiFreqSeries(target=target.to_numpy(dtype=float), groups=tuple(assembled), periods=periods)


def group_series(entries: Sequence[Tuple[str, Frequency, pd.Series]]) -> Sequence[SeriesGroup]:
    """Group ``(group name, frequency, series)`` triples, keeping first-seen order."""
    ordered: Dict[str, SeriesGroup] = {}
    for name, frequency, series in entries:
        current = ordered.get(name)
        if current is None:
            ordered[name] = SeriesGroup(name=name, frequency=frequency, members=(series,))
        elif current.frequency is not frequency:
            raise ConfigError("Group {} mixes {} and {} series".format(name, current.frequency.value, frequency.value))
        else:
            ordered[name] = SeriesGroup(name=name, frequency=frequency, members=current.members + (series,))
    return list(ordered.values())
