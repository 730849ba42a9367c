"""
Tests for bootstrap confidence intervals and the summary table
"""

import numpy as np
import pandas as pd
import pytest

from evaluation.metrics import ALL_METRICS
from evaluation.summary import SUMMARY_COLUMNS, bootstrap_ci, summarize
from evaluation.sweep import ROW_COLUMNS


def _rows(records):
    """Rows in run_sweep layout; unspecified metrics are NaN."""
    rows = []
    for record in records:
        row = {column: np.nan for column in ROW_COLUMNS}
        row.update({"seed": 0, "error": ""})
        row.update(record)
        rows.append(row)
    return pd.DataFrame(rows, columns=ROW_COLUMNS)


def test_constant_sample_has_a_point_interval():
    assert bootstrap_ci(np.full(8, 0.25)) == (0.25, 0.25)
    assert bootstrap_ci(np.array([1.5])) == (1.5, 1.5)


def test_empty_sample_is_rejected():
    with pytest.raises(ValueError):
        bootstrap_ci(np.array([]))


def test_interval_brackets_the_mean(rng):
    values = rng.normal(2.0, 1.0, size=200)
    low, high = bootstrap_ci(values, 4000, np.random.default_rng(1))
    assert low < values.mean() < high
    # percentile interval of the mean is roughly +-1.96 standard errors
    assert high - low == pytest.approx(2 * 1.96 * values.std() / np.sqrt(200), rel=0.15)


def test_interval_is_reproducible(rng):
    values = rng.normal(size=30)
    first = bootstrap_ci(values, 200, np.random.default_rng(5))
    second = bootstrap_ci(values, 200, np.random.default_rng(5))
    assert first == second


def test_summary_means_and_counts():
    rows = _rows([
        {"axis": 0.2, "method": "r-dr", "sim": 0, "relative_combined": 0.1},
        {"axis": 0.2, "method": "r-dr", "sim": 1, "relative_combined": 0.3},
        {"axis": 0.2, "method": "hyper-beta", "sim": 0, "relative_combined": 0.5, "gamma": 0.3},
        {"axis": 0.2, "method": "hyper-beta", "sim": 1, "relative_combined": 0.7, "gamma": 0.3},
    ])
    table = summarize(rows, n_boot_ci=100, seed=4).table
    assert list(table.columns) == SUMMARY_COLUMNS
    r_dr = table[(table["method"] == "r-dr") & (table["metric"] == "relative_combined")].iloc[0]
    assert r_dr["mean"] == pytest.approx(0.2)
    assert r_dr["n_sims"] == 2
    assert r_dr["ci_low"] <= r_dr["mean"] <= r_dr["ci_high"]
    assert (table["seed"] == 4).all()
    # gamma is NaN for r-dr, so only hyper-beta has a gamma row
    assert set(table.loc[table["metric"] == "gamma", "method"]) == {"hyper-beta"}


def test_summary_order_follows_rows_and_metric_registry():
    records = []
    for axis in (0.8, 0.2):
        for method in ("s-dr", "r-dr"):
            for sim in range(2):
                records.append({"axis": axis, "method": method, "sim": sim, **{m: float(sim) for m in ALL_METRICS}})
    table = summarize(_rows(records), n_boot_ci=50).table
    keys = list(zip(table["axis"], table["method"], table["metric"]))
    expected = [(a, m, metric) for a in (0.8, 0.2) for m in ("s-dr", "r-dr") for metric in ALL_METRICS]
    assert keys == expected


def test_error_rows_are_excluded():
    rows = _rows([
        {"axis": 0.5, "method": "r-dr", "sim": 0, "relative_combined": 0.4},
        {"axis": 0.5, "method": "r-dr", "sim": 1, "relative_combined": 0.6},
        {"axis": 0.5, "method": "r-dr", "sim": 2, "error": "TrainingDivergedError: boom"},
    ])
    cell = summarize(rows, n_boot_ci=50).table.iloc[0]
    assert cell["n_sims"] == 2
    assert cell["mean"] == pytest.approx(0.5)


def test_single_row_cells_are_reported_as_degenerate():
    rows = _rows([
        {"axis": 0.5, "method": "r-dr", "sim": 0, "relative_combined": 0.4},
        {"axis": 0.5, "method": "s-dr", "sim": 0, "relative_combined": 0.1},
        {"axis": 0.5, "method": "s-dr", "sim": 1, "relative_combined": 0.3},
    ])
    summary = summarize(rows, n_boot_ci=50)
    assert summary.degenerate == [(0.5, "r-dr", "relative_combined")]
    single = summary.table[summary.table["method"] == "r-dr"].iloc[0]
    assert single["ci_low"] == single["ci_high"] == 0.4


def test_summary_is_reproducible_for_a_seed(rng):
    rows = _rows([
        {"axis": 0.5, "method": "r-dr", "sim": sim, "relative_combined": value}
        for sim, value in enumerate(rng.normal(size=20))
    ])
    first = summarize(rows, n_boot_ci=200, seed=9).table
    second = summarize(rows, n_boot_ci=200, seed=9).table
    pd.testing.assert_frame_equal(first, second)
    other = summarize(rows, n_boot_ci=200, seed=10).table
    assert first["mean"].iloc[0] == other["mean"].iloc[0]
    assert (first["ci_low"].iloc[0], first["ci_high"].iloc[0]) != (other["ci_low"].iloc[0], other["ci_high"].iloc[0])


def test_all_error_rows_give_an_empty_table():
    rows = _rows([{"axis": 0.5, "method": "r-dr", "sim": 0, "error": "DatasetError: nothing"}])
    summary = summarize(rows, n_boot_ci=50)
    assert summary.table.empty
    assert list(summary.table.columns) == SUMMARY_COLUMNS
