"""
Result files of a sweep: rows.csv, summary.csv and manifest.json
"""

import json
import logging
import platform
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

import opl
from config import Config, config
from opl.errors import OutputError

from .summary import SUMMARY_COLUMNS, Summary

logger = logging.getLogger(__name__)

ROWS_FILE = "rows.csv"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"
MANIFEST_VERSION = 1

# 17 significant digits, so re-parsed floats are bit-identical
FLOAT_FORMAT = "%.17g"

_TRACKED_PACKAGES = ["numpy", "scipy", "pandas", "joblib", "pydantic", "python-dotenv", "rich", "langfuse"]


def check_writable(out_dir: Union[str, Path]) -> Path:
    """
    Create `out_dir` if needed and prove a file can be written there.

    Raises:
        OutputError: if the directory cannot be created or written
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".write_check_"):
            pass
    except OSError as e:
        raise OutputError(f"output directory {out_dir} is not writable: {e}") from e
    return out_dir


def library_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"python": platform.python_version(), "opl": opl.__version__}
    for package in _TRACKED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return versions


def build_manifest(
    sweep_config: Dict[str, Any],
    run_name: str,
    summary: Optional[Summary] = None,
    n_error_rows: int = 0,
) -> Dict[str, Any]:
    """
    Everything needed to rerun a sweep: its config, every default in effect
    and the library versions.
    """
    return {
        "manifest_version": MANIFEST_VERSION,
        "run_name": run_name,
        "seed": sweep_config.get("seed"),
        "axis": sweep_config.get("axis"),
        "sigma_f": sweep_config.get("sigma_f", config.SIGMA_F),
        "theta_o_scale": sweep_config.get("theta_o_scale", config.THETA_O_SCALE),
        "config": sweep_config,
        "defaults": Config.get_all(),
        "versions": library_versions(),
        "n_error_rows": n_error_rows,
        "degenerate_cells": [list(cell) for cell in summary.degenerate] if summary else [],
    }


def emit_outputs(
    summary: Summary,
    manifest: Dict[str, Any],
    out_dir: Union[str, Path],
    rows: Optional[pd.DataFrame] = None,
) -> Dict[str, Path]:
    """
    Write the summary table, the optional per-row table and the manifest.

    Args:
        summary: output of summarize
        manifest: output of build_manifest
        out_dir: target directory, created if missing
        rows: per-(value, method, sim) rows of run_sweep

    Returns:
        Mapping from file kind to the written path

    Raises:
        OutputError: if any file cannot be written
    """
    out_dir = check_writable(out_dir)
    paths = {"summary": out_dir / SUMMARY_FILE, "manifest": out_dir / MANIFEST_FILE}
    try:
        summary.table.to_csv(paths["summary"], index=False, columns=SUMMARY_COLUMNS, float_format=FLOAT_FORMAT)
        if rows is not None:
            paths["rows"] = out_dir / ROWS_FILE
            rows.to_csv(paths["rows"], index=False, float_format=FLOAT_FORMAT)
        with open(paths["manifest"], "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    except OSError as e:
        raise OutputError(f"failed to write results to {out_dir}: {e}") from e
    logger.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return paths


def read_summary(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def read_rows(path: Union[str, Path]) -> pd.DataFrame:
    rows = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    rows["error"] = rows["error"].fillna("")
    return rows


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise OutputError(f"cannot read manifest {path}: {e}") from e
