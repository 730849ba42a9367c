"""
Bootstrap confidence intervals over simulation rows
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from config import config
from opl.core import Stream, make_rng

from .metrics import ALL_METRICS

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["axis", "method", "metric", "mean", "ci_low", "ci_high", "n_sims", "seed"]


@dataclass(frozen=True, eq=False)
class Summary:
    """
    Attributes:
        table: one row per (axis value, method, metric) in SUMMARY_COLUMNS order
        degenerate: (axis value, method, metric) cells built from a single
            row, whose CI collapses to the point estimate
    """
    table: pd.DataFrame
    degenerate: List[Tuple[float, str, str]] = field(default_factory=list)


def bootstrap_ci(
    values: np.ndarray,
    n_resamples: int = config.N_BOOT_CI,
    rng: Optional[np.random.Generator] = None,
    confidence_level: float = 0.95,
) -> Tuple[float, float]:
    """
    Percentile bootstrap CI of the mean.

    Constant samples (including a single value) return the point itself.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bootstrap an empty sample")
    if np.ptp(values) == 0.0:
        return float(values[0]), float(values[0])
    result = stats.bootstrap(
        (values,),
        np.mean,
        n_resamples=n_resamples,
        confidence_level=confidence_level,
        method="percentile",
        random_state=rng if rng is not None else make_rng(0, Stream.SUMMARY),
    )
    return float(result.confidence_interval.low), float(result.confidence_interval.high)


def _long_rows(rows: pd.DataFrame) -> pd.DataFrame:
    ok = rows[rows["error"].fillna("") == ""] if "error" in rows else rows
    metrics = [m for m in ALL_METRICS if m in ok.columns]
    long = ok.melt(id_vars=["axis", "method", "sim"], value_vars=metrics, var_name="metric", value_name="value")
    return long.dropna(subset=["value"])


def summarize(rows: pd.DataFrame, n_boot_ci: int = config.N_BOOT_CI, seed: int = 0) -> Summary:
    """
    Mean and 95% percentile-bootstrap CI per (axis value, method, metric).

    Error rows and NaN metrics (e.g. gamma for methods without one) are left
    out. Cells keep the row order of first appearance, metrics follow the
    registry order. Each cell draws its resamples from its own sub-stream
    of `seed`.

    Args:
        rows: output of run_sweep
        n_boot_ci: bootstrap resamples per cell
        seed: master seed recorded in every summary row

    Returns:
        Summary with the table and the list of single-row cells
    """
    long = _long_rows(rows)
    records = []
    degenerate = []
    axis_rank = {v: i for i, v in enumerate(dict.fromkeys(long["axis"]))}
    method_rank = {m: i for i, m in enumerate(dict.fromkeys(long["method"]))}
    metric_rank = {m: i for i, m in enumerate(ALL_METRICS)}
    cells = long.groupby(["axis", "method", "metric"], sort=False)
    ordered = sorted(cells.groups, key=lambda k: (axis_rank[k[0]], method_rank[k[1]], metric_rank[k[2]]))
    for index, key in enumerate(ordered):
        values = cells.get_group(key)["value"].to_numpy(dtype=float)
        rng = make_rng(seed, Stream.SUMMARY, index)
        low, high = bootstrap_ci(values, n_boot_ci, rng)
        if values.size < 2:
            degenerate.append(key)
        records.append(
            {
                "axis": key[0],
                "method": key[1],
                "metric": key[2],
                "mean": float(values.mean()),
                "ci_low": low,
                "ci_high": high,
                "n_sims": int(values.size),
                "seed": seed,
            }
        )
    if degenerate:
        logger.warning("%d cells have a single row; their CIs are degenerate points", len(degenerate))
    return Summary(table=pd.DataFrame(records, columns=SUMMARY_COLUMNS), degenerate=degenerate)
