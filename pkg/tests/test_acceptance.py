"""
Long-running method comparisons on the default synthetic problem

Run with `pytest --runslow`. Each test sweeps 50 simulations at the
default environment (n=2000, 10 actions, lam=0.7, obs_prob=0.2) and
checks orderings of mean values and paired bootstrap intervals, not
absolute numbers.
"""

import numpy as np
import pytest

from evaluation.summary import bootstrap_ci
from evaluation.sweep import SweepConfig, error_rows, run_sweep

pytestmark = pytest.mark.slow

N_SIMS = 50


def _means(rows, metric):
    assert error_rows(rows).empty
    return rows.groupby(["axis", "method"])[metric].mean()


def _paired_difference(rows, axis, metric, method, baseline):
    """Per-simulation `method - baseline` at one axis value, aligned on sim."""
    cell = rows[rows["axis"] == axis].pivot(index="sim", columns="method", values=metric)
    return (cell[method] - cell[baseline]).to_numpy()


@pytest.fixture(scope="module")
def beta_sweep():
    cfg = SweepConfig(
        seed=2024,
        axis="beta",
        values=[0.0, 0.3, 0.5, 0.6, 1.0],
        methods=["hyper-beta", "hyper-tuned", "hyper-tuned-wo"],
        n_sims=N_SIMS,
        n_jobs=-1,
    )
    return run_sweep(cfg)


def test_fixed_weight_beats_single_reward_baselines():
    cfg = SweepConfig(
        seed=2024,
        axis="obs_prob",
        values=[0.2],
        methods=["r-dr", "s-dr", "hyper-0", "hyper-beta"],
        n_sims=N_SIMS,
        n_jobs=-1,
    )
    rows = run_sweep(cfg)
    combined = _means(rows, "relative_combined").loc[0.2]
    target = _means(rows, "relative_target").loc[0.2]
    assert combined["hyper-beta"] > combined["r-dr"]
    assert combined["hyper-beta"] > combined["s-dr"]
    assert target["hyper-0"] > target["r-dr"]


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.6])
def test_tuned_weight_is_never_worse_than_beta(beta_sweep, beta):
    assert error_rows(beta_sweep).empty
    difference = _paired_difference(beta_sweep, beta, "relative_combined", "hyper-tuned", "hyper-beta")
    _, high = bootstrap_ci(difference, 2000, np.random.default_rng(7))
    assert high >= 0.0


def test_tuned_weight_helps_the_target_only_objective(beta_sweep):
    combined = _means(beta_sweep, "relative_combined").loc[0.0]
    assert combined["hyper-tuned"] > combined["hyper-beta"]


def test_selected_weight_grows_with_beta(beta_sweep):
    tuned = beta_sweep[beta_sweep["method"] == "hyper-tuned"].groupby("axis")["gamma"].mean()
    trend = [tuned.loc[beta] for beta in (0.0, 0.5, 1.0)]
    assert trend == sorted(trend)
    assert tuned.loc[1.0] == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.5, 0.6, 1.0])
def test_single_split_selects_at_least_the_bootstrap_weight(beta_sweep, beta):
    gamma = beta_sweep.groupby(["axis", "method"])["gamma"].mean().loc[beta]
    assert gamma["hyper-tuned-wo"] >= gamma["hyper-tuned"]
