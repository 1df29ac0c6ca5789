"""Naive benchmark forecasters used as MSFE baselines."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from src.errors import ConfigError, InsufficientDataError
from src.esn.mfesn import MultiFreqSeries

BENCHMARKS = ("mean", "ar1")


def _eval_targets(data: MultiFreqSeries, eval_span: Tuple[int, int]) -> np.ndarray:
    first, last = eval_span
    if not 1 <= first <= last < data.n_periods:
        raise ConfigError("Evaluation span {} is outside the data span".format(eval_span))
    return np.arange(first, last + 1)


def mean_benchmark(data: MultiFreqSeries, train_span: Tuple[int, int], eval_span: Tuple[int, int]) -> np.ndarray:
    """In-sample mean of the training targets, held constant over the evaluation span."""
    start, end = train_span
    level = float(np.mean(data.target[start : end + 1]))
    return np.full(_eval_targets(data, eval_span).size, level)


def ar1_benchmark(data: MultiFreqSeries, train_span: Tuple[int, int], eval_span: Tuple[int, int]) -> np.ndarray:
    """AR(1) ``Y_{t+1} = a + b Y_t`` by least squares on the training span."""
    start, end = train_span
    lagged, current = data.target[start:end], data.target[start + 1 : end + 1]
    if lagged.size < 2:
        raise InsufficientDataError("AR(1) benchmark needs at least two training pairs")
    design = np.column_stack([np.ones_like(lagged), lagged])
    (intercept, slope), *_ = np.linalg.lstsq(design, current, rcond=None)
    targets = _eval_targets(data, eval_span)
    return intercept + slope * data.target[targets - 1]


def benchmark_forecasts(
    name: str, data: MultiFreqSeries, train_span: Tuple[int, int], eval_span: Tuple[int, int]
) -> np.ndarray:
    if name == "mean":
        return mean_benchmark(data, train_span, eval_span)
    if name == "ar1":
        return ar1_benchmark(data, train_span, eval_span)
    raise ConfigError("Unknown benchmark {!r}, expected one of {}".format(name, BENCHMARKS))
