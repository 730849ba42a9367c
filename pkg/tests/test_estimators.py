"""
Tests for the gradient and value estimators: collapse identities, error
handling and the obs-probability scaling property
"""

from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from opl.core import LoggedDataset, importance_weights
from opl.errors import ConfigurationError, InvalidPropensityError, MissingModelError, MissingRewardError
from opl.estimators import (
    EstimatorConfig,
    EstimatorKind,
    SurrogateAggregator,
    estimate_gradient,
    estimate_value,
    gradient_and_value,
    grad_dr,
    grad_dr_fsr,
    grad_hyper,
    grad_hyper_r,
    grad_ips,
    grad_r_dr,
    grad_r_ips,
    grad_s_dr,
    grad_s_ips,
    grad_s_value,
    row_gradients,
    row_values,
    value_estimate,
)
from opl.models import FittedModels, fit_models

from conftest import ConstantModel, IgnoreSecondary, random_dataset, random_policy

ATOL = 1e-12
N_INSTANCES = 100


def _instances(rng, obs_rate=0.5, **kwargs):
    """Random (data, policy) pairs; with partial observation at least one target is observed."""
    produced = 0
    while produced < N_INSTANCES:
        data = random_dataset(rng, n=int(rng.integers(5, 40)), obs_rate=obs_rate, **kwargs)
        if obs_rate and data.n_observed == 0:
            continue
        produced += 1
        yield data, random_policy(rng, data.dim_context, data.n_actions)


def _zero_models(data: LoggedDataset) -> FittedModels:
    zero = ConstantModel(0.0, data.n_actions)
    return FittedModels(
        q_xa=zero,
        q_xas=IgnoreSecondary(zero),
        f_hat=ConstantModel(0.0, data.n_actions, dim=data.dim_secondary),
    )


def _close(a, b, atol=ATOL):
    np.testing.assert_allclose(a.values, b.values, rtol=0.0, atol=atol)


# ============================================================================
# COLLAPSE IDENTITIES
# ============================================================================

def test_dr_with_zero_model_is_ips(rng):
    for data, policy in _instances(rng, obs_rate=None):
        _close(grad_dr(data, policy, _zero_models(data)), grad_ips(data, policy))


def test_r_dr_with_zero_model_is_r_ips(rng):
    for data, policy in _instances(rng):
        _close(grad_r_dr(data, policy, _zero_models(data)), grad_r_ips(data, policy))


def test_missingness_free_variants_match_full_data_estimators(rng):
    for data, policy in _instances(rng, obs_rate=None):
        models = fit_models(data, ridge=1.0)
        _close(grad_r_ips(data, policy), grad_ips(data, policy))
        _close(grad_r_dr(data, policy, models), grad_dr(data, policy, models))


def test_hyper_r_without_missingness_or_secondary_signal_is_dr(rng):
    for data, policy in _instances(rng, obs_rate=None):
        models = fit_models(data, ridge=1.0)
        collapsed = replace(models, q_xas=IgnoreSecondary(models.q_xa))
        _close(grad_hyper_r(data, policy, collapsed), grad_dr(data, policy, models), atol=1e-10)


def test_hyper_r_with_zero_models_is_r_ips(rng):
    for data, policy in _instances(rng):
        _close(grad_hyper_r(data, policy, _zero_models(data)), grad_r_ips(data, policy))


def test_hyper_mixture_endpoints(rng):
    for data, policy in _instances(rng):
        models = fit_models(data, ridge=1.0)
        _close(grad_hyper(data, policy, models, 0.0), grad_hyper_r(data, policy, models))
        _close(grad_hyper(data, policy, models, 1.0), grad_s_value(data, policy, models))


def test_hyper_is_affine_in_gamma(rng):
    data = random_dataset(rng, n=60)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    models = fit_models(data, ridge=1.0)
    start = grad_hyper(data, policy, models, 0.0).values
    end = grad_hyper(data, policy, models, 1.0).values
    for gamma in (0.0, 0.25, 0.5, 0.75, 1.0):
        np.testing.assert_allclose(
            grad_hyper(data, policy, models, gamma).values, (1 - gamma) * start + gamma * end, atol=1e-10
        )


def test_s_dr_with_zero_model_is_s_ips(rng):
    aggregator = SurrogateAggregator(np.array([0.5, -1.0]))
    for data, policy in _instances(rng):
        _close(grad_s_dr(data, policy, _zero_models(data), aggregator), grad_s_ips(data, policy, aggregator))


def test_s_ips_with_single_secondary_is_ips_on_that_reward(rng):
    aggregator = SurrogateAggregator(np.array([1.0]))
    for data, policy in _instances(rng, obs_rate=None, dim_secondary=1):
        as_target = data.with_target(data.secondary[:, 0])
        _close(grad_s_ips(data, policy, aggregator), grad_ips(as_target, policy))


def test_s_value_with_single_secondary_is_s_dr(rng):
    aggregator = SurrogateAggregator(np.array([1.0]))
    for data, policy in _instances(rng, dim_secondary=1):
        models = fit_models(data, ridge=1.0)
        _close(grad_s_value(data, policy, models), grad_s_dr(data, policy, models, aggregator))


def test_null_surrogate_gives_zero_gradient(rng):
    data = random_dataset(rng, n=30)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    aggregator = SurrogateAggregator.draw(np.zeros(2), 0.0, rng)
    np.testing.assert_array_equal(grad_s_ips(data, policy, aggregator).values, 0.0)


def test_dr_fsr_on_fully_observed_data_is_dr(rng):
    aggregator = SurrogateAggregator(np.array([1.0, 1.0]))
    for data, policy in _instances(rng, obs_rate=None):
        models = fit_models(data, ridge=1.0, aggregator=aggregator)
        _close(grad_dr_fsr(data, policy, models, aggregator), grad_dr(data, policy, models), atol=1e-10)


def test_dr_fsr_without_targets_is_s_dr(rng):
    aggregator = SurrogateAggregator(np.array([0.7, -0.2]))
    for data, policy in _instances(rng, obs_rate=0.0):
        models = fit_models(data, ridge=1.0, aggregator=aggregator)
        # ridge is linear in y, so the pseudo-reward fit is F applied to f-hat
        _close(grad_dr_fsr(data, policy, models, aggregator), grad_s_dr(data, policy, models, aggregator), atol=1e-9)


def test_dr_with_perfect_model_keeps_only_direct_term(rng):
    data = random_dataset(rng, n=30, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    # q-hat equal to the realised reward at every logged pair: a constant target
    data = data.with_target(np.full(len(data), 1.5))
    models = FittedModels(q_xa=ConstantModel(1.5, data.n_actions))
    probs = policy.action_dist(data.contexts)
    direct = policy.score_sum(data.contexts, 1.5 * probs) / len(data)
    np.testing.assert_allclose(grad_dr(data, policy, models).values, direct, atol=ATOL)


def test_ips_on_policy_with_unit_rewards_is_mean_score(rng):
    data = random_dataset(rng, n=25, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    probs = policy.action_dist(data.contexts)
    data = replace(data, pscore=probs[np.arange(len(data)), data.actions]).with_target(np.ones(len(data)))
    onehot = np.eye(data.n_actions)[data.actions]
    expected = policy.score_sum(data.contexts, onehot) / len(data)
    np.testing.assert_allclose(grad_ips(data, policy).values, expected, atol=ATOL)


def test_unobserved_single_row_contributes_nothing(rng):
    data = random_dataset(rng, n=30)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    row = data.take([int(np.flatnonzero(data.obs_flags == 0)[0])])
    np.testing.assert_array_equal(grad_r_ips(row, policy).values, 0.0)


# ============================================================================
# OBSERVATION-PROBABILITY SCALING
# ============================================================================

@pytest.mark.parametrize("c", [0.5, 0.8])
def test_scaling_obs_prob_scales_only_the_observed_terms(rng, c):
    data = random_dataset(rng, n=50)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    models = fit_models(data, ridge=1.0)
    scaled = data.with_obs_prob(c * data.obs_prob)
    unobserved = replace(data, obs_flags=np.zeros(len(data), dtype=int))

    base = grad_hyper_r(data, policy, models).values
    rescaled = grad_hyper_r(scaled, policy, models).values
    # with every o_i = 0 only the direct and secondary-shift terms remain
    shared = grad_hyper_r(unobserved, policy, models).values
    np.testing.assert_allclose(rescaled - shared, (base - shared) / c, atol=1e-10)
    np.testing.assert_allclose(grad_r_ips(scaled, policy).values, grad_r_ips(data, policy).values / c, atol=1e-10)


# ============================================================================
# VALUE ESTIMATES
# ============================================================================

def test_value_estimate_endpoints(rng):
    data = random_dataset(rng, n=40, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    models = fit_models(data, ridge=1.0)
    collapsed = replace(models, q_xas=IgnoreSecondary(models.q_xa))
    dr_value = estimate_value(EstimatorConfig(kind=EstimatorKind.DR), data, policy, models)
    s_value = estimate_value(EstimatorConfig(kind=EstimatorKind.S_GRAD), data, policy, models)
    assert value_estimate(data, policy, collapsed, beta=0.0) == pytest.approx(dr_value, abs=1e-10)
    assert value_estimate(data, policy, models, beta=1.0) == pytest.approx(s_value, abs=1e-12)


def test_ips_value_is_mean_weighted_reward(rng):
    data = random_dataset(rng, n=40, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    expected = np.mean(importance_weights(policy, data) * data.target)
    assert estimate_value(EstimatorConfig(kind=EstimatorKind.IPS), data, policy) == pytest.approx(expected, abs=1e-12)


def test_value_estimate_rejects_out_of_range_beta(rng):
    data = random_dataset(rng, n=10)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    with pytest.raises(ConfigurationError):
        value_estimate(data, policy, fit_models(data), beta=1.2)


# ============================================================================
# DISPATCH
# ============================================================================

def test_dispatch_matches_direct_calls(rng):
    data = random_dataset(rng, n=40)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    aggregator = SurrogateAggregator(np.array([1.0, 0.5]))
    models = fit_models(data, ridge=1.0, aggregator=aggregator)
    config = EstimatorConfig(kind=EstimatorKind.HYPER, gamma=0.4)
    gradient, value = gradient_and_value(config, data, policy, models, aggregator)
    _close(gradient, grad_hyper(data, policy, models, 0.4))
    _close(estimate_gradient(config, data, policy, models, aggregator), gradient)
    assert value == pytest.approx(estimate_value(config, data, policy, models, aggregator), abs=ATOL)


@pytest.mark.parametrize("kind", list(EstimatorKind))
def test_row_contributions_average_to_the_estimate(rng, kind):
    data = random_dataset(rng, n=30, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    aggregator = SurrogateAggregator(np.array([1.0, -1.0]))
    models = fit_models(data, ridge=1.0, aggregator=aggregator)
    config = EstimatorConfig(kind=kind, gamma=0.3)
    rows = row_gradients(config, data, policy, models, aggregator)
    assert rows.shape == (len(data), policy.n_params)
    np.testing.assert_allclose(
        rows.mean(axis=0), estimate_gradient(config, data, policy, models, aggregator).values, atol=1e-10
    )
    assert row_values(config, data, policy, models, aggregator).mean() == pytest.approx(
        estimate_value(config, data, policy, models, aggregator), abs=1e-12
    )


def test_weight_clipping_caps_ips_weights(rng):
    data = random_dataset(rng, n=40, obs_rate=None)
    policy = random_policy(rng, data.dim_context, data.n_actions, scale=2.0)
    clipped = EstimatorConfig(kind=EstimatorKind.IPS, clip_weight=1.0)
    expected = np.mean(np.minimum(importance_weights(policy, data), 1.0) * data.target)
    assert estimate_value(clipped, data, policy) == pytest.approx(expected, abs=1e-12)


# ============================================================================
# ERRORS
# ============================================================================

def test_full_data_estimators_reject_missing_targets(rng):
    data = random_dataset(rng, n=20, obs_rate=0.5)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    with pytest.raises(MissingRewardError):
        grad_ips(data, policy)
    with pytest.raises(MissingRewardError):
        grad_dr(data, policy, fit_models(data))


def test_non_positive_obs_prob_is_rejected(rng):
    data = random_dataset(rng, n=20)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    broken = data.with_obs_prob(np.where(np.arange(len(data)) == 3, 0.0, 0.5))
    with pytest.raises(InvalidPropensityError):
        grad_r_ips(broken, policy)


def test_missing_models_and_aggregator_are_reported(rng):
    data = random_dataset(rng, n=20)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    with pytest.raises(MissingModelError):
        grad_hyper_r(data, policy, FittedModels())
    with pytest.raises(ConfigurationError):
        estimate_gradient(EstimatorConfig(kind=EstimatorKind.S_IPS), data, policy)


def test_gamma_out_of_range(rng):
    data = random_dataset(rng, n=20)
    policy = random_policy(rng, data.dim_context, data.n_actions)
    with pytest.raises(ConfigurationError):
        grad_hyper(data, policy, fit_models(data), 1.5)
    with pytest.raises(ValidationError):
        EstimatorConfig(kind=EstimatorKind.HYPER, gamma=-0.1)


def test_aggregator_noise_is_fixed_per_draw(rng):
    aggregator = SurrogateAggregator.draw(np.ones(3), 0.3, rng)
    s = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(aggregator(s), aggregator(s))
    np.testing.assert_allclose(aggregator(s), s @ (np.ones(3) + aggregator.noise))
    with pytest.raises(ConfigurationError):
        SurrogateAggregator(np.ones(3), noise=np.zeros(2))
