"""
Tests for the synthetic environment generator and its ground-truth values
"""

from dataclasses import replace

import numpy as np
import pytest

from opl.core import SoftmaxLinearPolicy, relative_value
from opl.errors import ConfigurationError
from opl.models import fit_q_xas
from opl.synth import (
    EnvironmentSpec,
    ObservationSpec,
    build_environment,
    expected_secondary,
    expected_secondary_all,
    expected_target,
    expected_target_all,
    new_environment,
    noisy_observation_spec,
    optimal_and_uniform_values,
    sample_dataset,
    surrogate_aggregator,
    synthetic_evaluation,
    true_values,
)
from opl.trainer import DeterministicPolicy


@pytest.fixture
def env():
    return new_environment(seed=5)


def _zeroed(env):
    zeros = {
        name: np.zeros_like(getattr(env, name))
        for name in (
            "sec_interaction", "sec_theta_x", "sec_theta_a", "tgt_interaction", "tgt_theta_x",
            "tgt_theta_a", "context_coupling", "action_coupling", "theta_f",
        )
    }
    return replace(env, **zeros)


# ============================================================================
# ENVIRONMENT SPEC AND PARAMETERS
# ============================================================================

def test_spec_defaults():
    spec = EnvironmentSpec(seed=0)
    assert (spec.dim_context, spec.n_actions, spec.dim_secondary) == (10, 10, 5)
    assert (spec.lam, spec.temperature, spec.sigma_s, spec.sigma_r) == (0.7, -2.0, 0.5, 0.5)
    assert (spec.obs_prob, spec.beta) == (0.2, 0.3)


def test_spec_json_round_trip_and_version_check():
    spec = EnvironmentSpec(seed=12, lam=0.4, sigma_o=0.5)
    assert EnvironmentSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ConfigurationError):
        EnvironmentSpec.from_json(spec.model_copy(update={"version": 99}).to_json())


def test_same_seed_gives_identical_matrices():
    first, second = new_environment(seed=3), new_environment(seed=3)
    for name in ("sec_interaction", "tgt_interaction", "theta_f", "action_coupling"):
        np.testing.assert_array_equal(getattr(first, name), getattr(second, name))
    np.testing.assert_array_equal(first.logging_policy.interaction, second.logging_policy.interaction)


def test_parameter_entries_are_uniform_on_the_unit_box():
    env = new_environment(seed=0, dim_context=50, n_actions=40, dim_secondary=50)
    entries = env.sec_interaction.ravel()
    assert entries.size >= 10 ** 5
    assert abs(entries.mean()) <= 0.01
    assert np.abs(entries).max() <= 1.0


# ============================================================================
# EXPECTED REWARDS
# ============================================================================

def test_zero_context_leaves_only_action_terms(env):
    x = np.zeros(env.dim_context)
    for a in range(env.n_actions):
        np.testing.assert_allclose(expected_secondary(env, x, a), env.sec_theta_a[:, a], atol=1e-15)


def test_zero_environment_has_zero_rewards(env, rng):
    zero = _zeroed(env)
    x = rng.standard_normal((4, env.dim_context))
    np.testing.assert_array_equal(expected_secondary_all(zero, x), 0.0)
    np.testing.assert_array_equal(expected_target_all(zero, x), 0.0)


def test_secondary_matches_term_by_term(env, rng):
    for _ in range(20):
        x = rng.standard_normal(env.dim_context)
        a = int(rng.integers(env.n_actions))
        expected = np.array([
            x @ env.sec_interaction[d][:, a] + x @ env.sec_theta_x[d] + env.sec_theta_a[d, a]
            for d in range(env.dim_secondary)
        ])
        np.testing.assert_allclose(expected_secondary(env, x, a), expected, atol=1e-12)


def test_target_matches_term_by_term(env, rng):
    for _ in range(20):
        x = rng.standard_normal(env.dim_context)
        a = int(rng.integers(env.n_actions))
        f = expected_secondary(env, x, a)
        coupled = (
            x @ env.tgt_interaction[:, a] + x @ env.tgt_theta_x + env.tgt_theta_a[a]
            + x @ env.context_coupling @ f + env.action_coupling[a] @ f
        )
        expected = (1 - env.lam) * coupled + env.lam * f @ env.theta_f
        assert expected_target(env, x, a) == pytest.approx(expected, abs=1e-12)


def test_batch_and_all_action_forms_agree(env, rng):
    x = rng.standard_normal((6, env.dim_context))
    a = rng.integers(env.n_actions, size=6)
    np.testing.assert_allclose(expected_target_all(env, x)[np.arange(6), a], expected_target(env, x, a), atol=1e-12)
    np.testing.assert_allclose(
        expected_secondary_all(env, x)[np.arange(6), a], expected_secondary(env, x, a), atol=1e-12
    )


def test_full_correlation_makes_target_linear_in_f(rng):
    env = new_environment(seed=2, lam=1.0)
    x = rng.standard_normal((5, env.dim_context))
    np.testing.assert_allclose(expected_target_all(env, x), expected_secondary_all(env, x) @ env.theta_f, atol=1e-12)


def test_no_correlation_without_coupling_ignores_f(rng):
    env = new_environment(seed=2, lam=0.0)
    env = replace(env, context_coupling=np.zeros_like(env.context_coupling), action_coupling=np.zeros_like(env.action_coupling))
    x = rng.standard_normal((5, env.dim_context))
    base = x @ env.tgt_interaction + (x @ env.tgt_theta_x)[:, None] + env.tgt_theta_a
    np.testing.assert_allclose(expected_target_all(env, x), base, atol=1e-12)


# ============================================================================
# SAMPLING
# ============================================================================

def test_noiseless_sampling_hits_the_means():
    env = new_environment(seed=4, sigma_s=0.0, sigma_r=0.0, obs_prob=1.0)
    data = sample_dataset(env, 200, seed=1)
    assert data.fully_observed
    np.testing.assert_allclose(data.secondary, expected_secondary(env, data.contexts, data.actions), atol=1e-12)
    np.testing.assert_allclose(data.target, expected_target(env, data.contexts, data.actions), atol=1e-12)


def test_observed_fraction_follows_obs_prob(env):
    data = sample_dataset(env, 100_000, seed=2)
    assert abs(data.obs_flags.mean() - 0.2) <= 0.005
    np.testing.assert_array_equal(data.obs_prob, 0.2)


def test_sampling_is_seeded(env):
    first, second = sample_dataset(env, 50, seed=7), sample_dataset(env, 50, seed=7)
    np.testing.assert_array_equal(first.contexts, second.contexts)
    np.testing.assert_array_equal(first.target, second.target)
    with pytest.raises(ConfigurationError):
        sample_dataset(env, 0, seed=7)


def test_zero_temperature_logs_uniformly():
    env = new_environment(seed=1, temperature=0.0)
    data = sample_dataset(env, 50_000, seed=3)
    freqs = np.bincount(data.actions, minlength=env.n_actions) / len(data)
    assert np.abs(freqs - 0.1).max() <= 0.01
    np.testing.assert_allclose(data.pscore, 0.1)


def test_noiseless_linear_generator_is_recovered():
    env = new_environment(seed=6, sigma_s=0.0, sigma_r=0.0, obs_prob=1.0, lam=1.0)
    train = sample_dataset(env, 3000, seed=1)
    held_out = sample_dataset(env, 500, seed=2)
    model = fit_q_xas(train, ridge=1e-8)
    predicted = model.predict(held_out.contexts, held_out.actions, held_out.secondary)
    assert np.sqrt(np.mean((predicted - held_out.target) ** 2)) < 1e-6


# ============================================================================
# OBSERVATION PROBABILITIES
# ============================================================================

def test_noiseless_observation_spec_is_constant(rng):
    spec = ObservationSpec(0.3, theta=np.zeros(4))
    np.testing.assert_array_equal(spec(rng.standard_normal((10, 4)), rng), 0.3)


def test_noisy_observation_probabilities_are_clipped(env, rng):
    spec = noisy_observation_spec(env, sigma_o=3.0, seed=1, scale=2.0)
    probs = spec(rng.standard_normal((5000, env.dim_context)), rng)
    assert probs.min() >= 0.05 and probs.max() <= 0.95


def test_noisy_observation_marginal_stays_near_base():
    env = new_environment(seed=8, sigma_o=0.5)
    data = sample_dataset(env, 10_000, seed=4)
    assert abs(data.obs_flags.mean() - 0.2) <= 0.05
    assert np.ptp(data.obs_prob) > 0.0


def test_negative_observation_noise_is_rejected(env):
    with pytest.raises(ConfigurationError):
        noisy_observation_spec(env, sigma_o=-0.1, seed=0)


def test_surrogate_noise_is_drawn_once_per_seed(env):
    first = surrogate_aggregator(env, 0.3, seed=9)
    second = surrogate_aggregator(env, 0.3, seed=9)
    np.testing.assert_array_equal(first.effective_weights, second.effective_weights)
    np.testing.assert_array_equal(surrogate_aggregator(env, 0.0).effective_weights, env.theta_f)


# ============================================================================
# GROUND TRUTH
# ============================================================================

def test_target_only_objective(env):
    values = true_values(env, SoftmaxLinearPolicy.uniform(env.dim_context, env.n_actions), 500, seed=1, beta=0.0)
    assert values.combined == values.target


def test_uniform_policy_in_zero_environment_is_worth_nothing(env):
    values = true_values(_zeroed(env), SoftmaxLinearPolicy.uniform(env.dim_context, env.n_actions), 200, seed=1)
    assert (values.target, values.secondary, values.combined) == (0.0, 0.0, 0.0)


def test_single_action_optimum_equals_uniform():
    env = new_environment(seed=1, n_actions=1)
    optimal, uniform = optimal_and_uniform_values(env, n_eval_contexts=200, seed=2)
    assert optimal == uniform


def test_secondary_only_optimum_maximises_the_secondary_sum(env):
    tables = synthetic_evaluation(env, 300, seed=3, beta=1.0)
    expected = expected_secondary_all(env, tables.contexts).sum(axis=2).argmax(axis=1)
    np.testing.assert_array_equal(tables.optimal_actions(), expected)


def test_optimal_policy_dominates_and_normalises_to_one(env):
    tables = synthetic_evaluation(env, 500, seed=3)
    optimal = DeterministicPolicy(
        lambda x: (1 - tables.beta) * expected_target_all(env, x) + tables.beta * expected_secondary_all(env, x).sum(axis=2),
        env.n_actions,
    )
    report = tables.report(optimal)
    assert report.relative()["combined"] == pytest.approx(1.0, abs=1e-12)
    optimal_values, uniform_values = optimal_and_uniform_values(env, n_eval_contexts=500, seed=3)
    assert optimal_values.combined >= uniform_values.combined
    assert relative_value(uniform_values.combined, optimal_values.combined, uniform_values.combined) == 0.0
