"""Result tables and plot-ready CSV files of an experiment run."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.combiner.ledger import RegretLedger, regret_frame, weights_frame
from src.combiner.panel import validate_weights
from src.combiner.schemes import Scheme
from src.errors import SimplexError, ValidationFailure
from src.esn.online import OnlineExerciseResult

FLOAT_FORMAT = "%.10g"

# Fixed column order of the MSFE table; DoublingHedge sits after the published columns.
MSFE_COLUMNS = ("Baseline", "Median", "Average", "RollMSE", "FTL", "Hedge", "DecHedge", "AdaHedge", "DoublingHedge")
SCHEME_COLUMNS = {
    Scheme.SA: "Average",
    Scheme.ROLL_MSE: "RollMSE",
    Scheme.FTL: "FTL",
    Scheme.HEDGE_CONSTANT: "Hedge",
    Scheme.HEDGE_DECREASING: "DecHedge",
    Scheme.ADAHEDGE: "AdaHedge",
    Scheme.HEDGE_DOUBLING: "DoublingHedge",
}
BENCHMARK_LABELS = {"mean": "Mean", "ar1": "AR(1)"}
PCT_SUFFIX = " %"


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_weights(path: Path, weights: np.ndarray, expert_ids: Optional[Sequence[int]] = None) -> Path:
    """Write a weight trajectory after re-checking every row against the simplex.

    Raises:
        ValidationFailure: If any row is not a probability vector.
    """
    weights = np.asarray(weights, dtype=float)
    violations: List[int] = []
    for index, row in enumerate(weights):
        try:
            validate_weights(row, weights.shape[1])
        except SimplexError:
            violations.append(index + 1)
    if violations:
        raise ValidationFailure(
            "{} weight rows off the simplex in {} (first round {})".format(len(violations), path.name, violations[0])
        )
    return write_frame(weights_frame(weights, expert_ids), path)


def write_regret(path: Path, ledgers: Sequence[RegretLedger]) -> Path:
    return write_frame(regret_frame(ledgers), path)


def ensemble_row(result: OnlineExerciseResult) -> Dict[str, float]:
    """Relative MSFE cells of one ensemble: member 0 as Baseline, member median, one cell per scheme."""
    relative = result.relative_expert_msfe
    row: Dict[str, float] = {"Baseline": float(relative[0]), "Median": float(np.median(relative))}
    for scheme, outcome in result.outcomes.items():
        value = outcome.relative_msfe if outcome.relative_msfe is not None else outcome.msfe
        row[SCHEME_COLUMNS[scheme]] = float(value)
    return row


def msfe_table(benchmarks: Mapping[str, float], ensembles: Mapping[str, OnlineExerciseResult]) -> pd.DataFrame:
    """MSFE table with benchmark rows first, then per ensemble a relative row and a percent-change row.

    Percent cells are ``(value / Baseline - 1) * 100``; cells of schemes not
    run are left empty.
    """
    records: List[Dict[str, object]] = []
    for name, value in benchmarks.items():
        records.append({"model": BENCHMARK_LABELS.get(name, name), "Baseline": value})
    for name, result in ensembles.items():
        row = ensemble_row(result)
        records.append({"model": name, **row})
        baseline = row["Baseline"]
        pct = {
            column: (value / baseline - 1.0) * 100.0 for column, value in row.items() if column != "Baseline"
        }
        records.append({"model": name + PCT_SUFFIX, **pct})
    return pd.DataFrame.from_records(records, columns=["model", *MSFE_COLUMNS])


def ecdf_frame(ensembles: Mapping[str, OnlineExerciseResult], alphas: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """Per-member relative MSFE with its empirical CDF value inside the ensemble."""
    frames = []
    for name, result in ensembles.items():
        relative = result.relative_expert_msfe
        order = np.argsort(relative, kind="stable")
        ecdf = np.empty(relative.size)
        ecdf[order] = np.arange(1, relative.size + 1) / relative.size
        frames.append(
            pd.DataFrame(
                {
                    "ensemble": name,
                    "member": np.arange(relative.size),
                    "alpha": alphas[name],
                    "msfe": result.expert_msfe,
                    "relative_msfe": relative,
                    "ecdf": ecdf,
                }
            ).iloc[order]
        )
    return pd.concat(frames, ignore_index=True)


def ecdf_by_alpha_frame(ecdf: pd.DataFrame) -> pd.DataFrame:
    """The same members regrouped by leak rate, the CDF recomputed within each (ensemble, alpha) group."""
    ordered = ecdf.sort_values(["ensemble", "alpha", "relative_msfe", "member"], kind="stable").copy()
    groups = ordered.groupby(["ensemble", "alpha"], sort=False)
    ordered["ecdf"] = (groups.cumcount() + 1) / groups["member"].transform("size")
    return ordered[["ensemble", "alpha", "member", "relative_msfe", "ecdf"]].reset_index(drop=True)


def forecasts_frame(
    result_by_ensemble: Mapping[str, OnlineExerciseResult],
    periods: Sequence[str],
    benchmarks: Mapping[str, np.ndarray],
) -> pd.DataFrame:
    """One row per evaluation round: realized target, benchmarks and every combined forecast."""
    first = next(iter(result_by_ensemble.values()))
    frame = pd.DataFrame(
        {"round": np.arange(1, first.realized.size + 1), "period": list(periods), "realized": first.realized}
    )
    for name, values in benchmarks.items():
        frame[BENCHMARK_LABELS.get(name, name)] = values
    for ensemble, result in result_by_ensemble.items():
        for scheme, outcome in result.outcomes.items():
            frame["{}:{}".format(ensemble, scheme.value)] = outcome.forecasts
    return frame
