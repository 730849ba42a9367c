"""
Per-row metrics recorded for every (axis value, method, sim)

Relative values place the uniform policy at 0 and the per-objective optimum
at 1; raw values are reported alongside. Each metric takes the policy's
ValueReport and the selected gamma (None for methods without one).
"""

from typing import Callable, Dict, Optional

import numpy as np

from opl.core import ValueReport, relative_value

# ============================================================================
# RELATIVE VALUE METRICS
# ============================================================================

def relative_combined(report: ValueReport, gamma: Optional[float]) -> float:
    return relative_value(report.policy.combined, report.optimal.combined, report.uniform.combined)


def relative_target(report: ValueReport, gamma: Optional[float]) -> float:
    return relative_value(report.policy.target, report.optimal.target, report.uniform.target)


def relative_secondary(report: ValueReport, gamma: Optional[float]) -> float:
    return relative_value(report.policy.secondary, report.optimal.secondary, report.uniform.secondary)


# ============================================================================
# RAW VALUE METRICS
# ============================================================================

def value_combined(report: ValueReport, gamma: Optional[float]) -> float:
    return report.policy.combined


def value_target(report: ValueReport, gamma: Optional[float]) -> float:
    return report.policy.target


def value_secondary(report: ValueReport, gamma: Optional[float]) -> float:
    return report.policy.secondary


def selected_gamma(report: ValueReport, gamma: Optional[float]) -> float:
    """NaN for methods that do not select a gamma; such rows drop out of the summary."""
    return np.nan if gamma is None else float(gamma)


RELATIVE_METRICS: Dict[str, Callable[[ValueReport, Optional[float]], float]] = {
    "relative_combined": relative_combined,
    "relative_target": relative_target,
    "relative_secondary": relative_secondary,
}

RAW_METRICS: Dict[str, Callable[[ValueReport, Optional[float]], float]] = {
    "value_combined": value_combined,
    "value_target": value_target,
    "value_secondary": value_secondary,
}

ALL_METRICS: Dict[str, Callable[[ValueReport, Optional[float]], float]] = {
    **RELATIVE_METRICS,
    **RAW_METRICS,
    "gamma": selected_gamma,
}


def score_report(report: ValueReport, gamma: Optional[float]) -> Dict[str, float]:
    """Every metric in ALL_METRICS, in registry order."""
    return {name: float(metric(report, gamma)) for name, metric in ALL_METRICS.items()}
