"""
Tests for result files: writability checks, CSV round trips and manifests
"""

import numpy as np
import pandas as pd
import pytest

from opl.errors import OutputError
from evaluation.outputs import (
    MANIFEST_FILE,
    ROWS_FILE,
    SUMMARY_FILE,
    build_manifest,
    check_writable,
    emit_outputs,
    read_manifest,
    read_rows,
    read_summary,
)
from evaluation.summary import summarize
from evaluation.sweep import ROW_COLUMNS


@pytest.fixture
def rows(rng):
    records = []
    for sim in range(5):
        for method in ("r-dr", "hyper-beta"):
            record = {column: rng.normal() / 3.0 for column in ROW_COLUMNS}
            record.update({"axis": 0.2, "method": method, "sim": sim, "seed": 123456789012345 + sim, "error": ""})
            if method == "r-dr":
                record["gamma"] = np.nan
            records.append(record)
    records[-1].update({name: np.nan for name in ROW_COLUMNS[4:-1]})
    records[-1]["error"] = "TuningError: gamma=0.3 replicate=1: failed"
    return pd.DataFrame(records, columns=ROW_COLUMNS)


def test_check_writable_creates_nested_directories(tmp_path):
    target = tmp_path / "a" / "b"
    assert check_writable(target) == target
    assert target.is_dir()
    assert list(target.iterdir()) == []


def test_check_writable_rejects_a_file_path(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(OutputError):
        check_writable(blocker / "out")


def test_files_round_trip_bit_for_bit(tmp_path, rows):
    summary = summarize(rows, n_boot_ci=100, seed=2)
    manifest = build_manifest({"seed": 2, "axis": "obs_prob"}, "sweep-test", summary, n_error_rows=1)
    paths = emit_outputs(summary, manifest, tmp_path, rows)
    assert {p.name for p in paths.values()} == {SUMMARY_FILE, ROWS_FILE, MANIFEST_FILE}

    pd.testing.assert_frame_equal(read_summary(paths["summary"]), summary.table, check_exact=True)
    again = read_rows(paths["rows"])
    np.testing.assert_array_equal(again[ROW_COLUMNS[4:-1]].to_numpy(), rows[ROW_COLUMNS[4:-1]].to_numpy())
    assert list(again["error"]) == list(rows["error"])
    assert list(again["seed"]) == list(rows["seed"])


def test_rows_file_is_optional(tmp_path, rows):
    summary = summarize(rows, n_boot_ci=50)
    paths = emit_outputs(summary, build_manifest({"seed": 0}, "summarize-test", summary), tmp_path)
    assert "rows" not in paths
    assert not (tmp_path / ROWS_FILE).exists()


def test_manifest_records_everything_needed_to_rerun(tmp_path, rows):
    summary = summarize(rows.iloc[:3], n_boot_ci=50)
    manifest = build_manifest({"seed": 5, "axis": "beta", "sigma_f": 0.1}, "sweep-beta", summary, n_error_rows=0)
    emit_outputs(summary, manifest, tmp_path)
    loaded = read_manifest(tmp_path / MANIFEST_FILE)
    assert loaded["seed"] == 5
    assert loaded["axis"] == "beta"
    assert loaded["sigma_f"] == 0.1
    assert loaded["config"] == {"seed": 5, "axis": "beta", "sigma_f": 0.1}
    assert "RIDGE_LAMBDA" in loaded["defaults"]
    assert loaded["versions"]["python"]
    # r-dr has two rows here, hyper-beta only one
    assert [0.2, "r-dr", "relative_combined"] not in loaded["degenerate_cells"]
    assert [0.2, "hyper-beta", "relative_combined"] in loaded["degenerate_cells"]


def test_unreadable_manifest_is_an_output_error(tmp_path):
    broken = tmp_path / "manifest.json"
    broken.write_text("{not json")
    with pytest.raises(OutputError):
        read_manifest(broken)
    with pytest.raises(OutputError):
        read_manifest(tmp_path / "missing.json")
