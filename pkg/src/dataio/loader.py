"""Manifest + CSV ingestion into a ``MultiFreqSeries``.

A manifest is a JSON document::

    {
      "target": "GDP",
      "daily_kappa": 60,
      "series": [
        {"code": "GDP", "path": "gdp.csv", "frequency": "quarterly", "transform_code": 5, "group": null},
        {"code": "IP", "path": "ip.csv", "frequency": "monthly", "transform_code": 5, "group": "monthly"}
      ]
    }

Each CSV has the header ``date,value`` with ISO-8601 dates. Series whose
``group`` is null are not used as inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.dataio.calendar import DEFAULT_DAILY_KAPPA, group_series, interpolate_holidays, regularize_calendar
from src.dataio.transforms import Frequency, RawSeries, apply_transform
from src.errors import DataError
from src.esn.mfesn import MultiFreqSeries
from src.utils.parallel import map_ordered

CSV_COLUMNS = ["date", "value"]


class SeriesEntry(BaseModel):
    code: str
    path: str
    frequency: Frequency
    transform_code: int = Field(default=1, ge=1, le=8)
    group: Optional[str] = None

    @field_validator("frequency", mode="before")
    @classmethod
    def _parse_frequency(cls, value: object) -> Frequency:
        return value if isinstance(value, Frequency) else Frequency.parse(str(value))


class Manifest(BaseModel):
    target: str
    daily_kappa: int = Field(default=DEFAULT_DAILY_KAPPA, ge=1)
    series: List[SeriesEntry]

    @model_validator(mode="after")
    def _check_codes(self) -> "Manifest":
        codes = [entry.code for entry in self.series]
        if len(set(codes)) != len(codes):
            raise ValueError("series codes must be unique")
        target = [entry for entry in self.series if entry.code == self.target]
        if not target:
            raise ValueError("target {!r} is not among the listed series".format(self.target))
        if target[0].frequency is not Frequency.QUARTERLY:
            raise ValueError("target {!r} must be quarterly".format(self.target))
        return self


@dataclass(frozen=True)
class LoadedSeries:
    entry: SeriesEntry
    raw: RawSeries
    source: Path


def read_manifest(path: Path) -> Manifest:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError("Manifest not found", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise DataError("Manifest is not valid JSON: {}".format(exc.msg), path=str(path), line=exc.lineno) from exc
    try:
        return Manifest.model_validate(payload)
    except ValidationError as exc:
        raise DataError("Invalid manifest: {}".format(exc.errors()[0]["msg"]), path=str(path)) from exc


def read_series_csv(path: Path, code: str) -> pd.Series:
    """Parse a ``date,value`` CSV; blank values become NaN.

    Raises:
        DataError: With the file, 1-based line and series code of the first bad row.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as exc:
        raise DataError("Series file not found", path=str(path), code=code) from exc
    if list(frame.columns) != CSV_COLUMNS:
        header = ",".join(frame.columns)
        raise DataError("Expected header 'date,value', got {}".format(header), path=str(path), line=1, code=code)

    dates = pd.to_datetime(frame["date"], format="ISO8601", errors="coerce")
    blank = frame["value"].str.strip().isin(["", "NA", "NaN", "."])
    values = pd.to_numeric(frame["value"].where(~blank), errors="coerce")
    bad_date = dates.isna()
    bad_value = values.isna() & ~blank
    for mask, label in ((bad_date, "date"), (bad_value, "value")):
        if mask.any():
            row = int(mask.to_numpy().nonzero()[0][0])
            raise DataError(
                "Unparseable {} {!r}".format(label, frame[label].iloc[row]), path=str(path), line=row + 2, code=code
            )
    steps = dates.diff().iloc[1:]
    if (steps <= pd.Timedelta(0)).any():
        row = int((steps <= pd.Timedelta(0)).to_numpy().nonzero()[0][0]) + 1
        raise DataError("Dates are not strictly increasing", path=str(path), line=row + 2, code=code)
    return pd.Series(values.to_numpy(dtype=float), index=pd.DatetimeIndex(dates), name=code)


def _load_entry(entry: SeriesEntry, root: Path) -> LoadedSeries:
    source = (root / entry.path).resolve()
    observations = read_series_csv(source, entry.code)
    raw = RawSeries(
        code=entry.code, frequency=entry.frequency, transform_code=entry.transform_code, observations=observations
    )
    return LoadedSeries(entry=entry, raw=raw, source=source)


def _prepare(loaded: LoadedSeries) -> pd.Series:
    raw = loaded.raw
    if raw.frequency is Frequency.DAILY:
        raw = interpolate_holidays(raw)
    else:
        raw = raw.with_observations(raw.observations.dropna())
    try:
        return apply_transform(raw)
    except DataError as exc:
        if exc.path is None:
            raise DataError(str(exc), path=str(loaded.source)) from exc
        raise


def load_dataset(
    manifest_path: Path | str, daily_kappa: Optional[int] = None, threads: int = 1
) -> MultiFreqSeries:
    """Read every series of a manifest and assemble the quarterly dataset.

    Args:
        manifest_path: JSON manifest; series paths resolve against its directory.
        daily_kappa: Bins per quarter for daily series, overriding the manifest.
        threads: Worker threads for parsing the CSV files.

    Returns:
        MultiFreqSeries: Transformed target and input groups on the tempo grid.

    Raises:
        DataError: For malformed manifests or CSV rows, naming file, line and code.
    """
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    loaded = map_ordered(lambda entry: _load_entry(entry, root), manifest.series, threads)
    prepared = {item.entry.code: _prepare(item) for item in loaded}

    entries = [
        (item.entry.group, item.entry.frequency, prepared[item.entry.code])
        for item in loaded
        if item.entry.group is not None
    ]
    kappa = daily_kappa if daily_kappa is not None else manifest.daily_kappa
    data = regularize_calendar(prepared[manifest.target], group_series(entries), daily_kappa=kappa)
    logger.info(
        "Loaded {} series into {} groups over {}..{}",
        len(loaded),
        len(data.groups),
        *data.span,
    )
    return data
