"""Raw input series and their stationarity transformations."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from src.errors import ConfigError, DataError, TransformError

TRANSFORM_NAMES = {
    1: "none",
    2: "D",
    3: "DD",
    4: "Log",
    5: "Dlog",
    6: "DDlog",
    7: "percentage change",
}
LOG_CODES = frozenset({4, 5, 6})


class Frequency(str, Enum):
    QUARTERLY = "Q"
    MONTHLY = "M"
    DAILY = "D"

    @classmethod
    def parse(cls, value: str) -> "Frequency":
        aliases = {"q": cls.QUARTERLY, "quarterly": cls.QUARTERLY, "m": cls.MONTHLY, "monthly": cls.MONTHLY}
        aliases.update({"d": cls.DAILY, "daily": cls.DAILY})
        try:
            return aliases[str(value).strip().lower()]
        except KeyError as exc:
            raise ConfigError("Unknown frequency {!r}, expected quarterly, monthly or daily".format(value)) from exc


@dataclass(frozen=True, eq=False)
class RawSeries:
    """One input series as read from disk, observations indexed by date."""

    code: str
    frequency: Frequency
    transform_code: int
    observations: pd.Series = field(repr=False)

    def __post_init__(self) -> None:
        if self.transform_code == 8:
            raise TransformError("Transformation code 8 (GARCH volatility) is not supported", code=self.code)
        if self.transform_code not in TRANSFORM_NAMES:
            raise TransformError(
                "Transformation code must be in 1-7, got {}".format(self.transform_code), code=self.code
            )
        index = self.observations.index
        if not isinstance(index, pd.DatetimeIndex):
            raise DataError("Observations must be indexed by dates", code=self.code)
        if not index.is_monotonic_increasing or index.has_duplicates:
            raise DataError("Observation dates must be strictly increasing", code=self.code)

    def with_observations(self, observations: pd.Series) -> "RawSeries":
        return RawSeries(self.code, self.frequency, self.transform_code, observations)


def _check_positive(observations: pd.Series, code: str) -> None:
    bad = observations[observations <= 0.0]
    if not bad.empty:
        raise TransformError(
            "Log transform of nonpositive value {} on {}".format(bad.iloc[0], bad.index[0].date()), code=code
        )


def apply_transform(series: RawSeries) -> pd.Series:
    """Apply the series' transformation code and drop the leading undefined entries.

    Codes: 1 none, 2 first difference, 3 second difference, 4 log, 5 log
    difference, 6 second log difference, 7 percent change ``x_t / x_{t-1} - 1``.

    Raises:
        TransformError: If a log code meets a nonpositive value; the message names its date.
    """
    values = series.observations.astype(float)
    code = series.transform_code
    if code in LOG_CODES:
        _check_positive(values.dropna(), series.code)
        values = np.log(values)
    if code in (2, 5):
        values = values.diff().iloc[1:]
    elif code in (3, 6):
        values = values.diff().diff().iloc[2:]
    elif code == 7:
        values = (values / values.shift(1) - 1.0).iloc[1:]
    return values.rename(series.code)
