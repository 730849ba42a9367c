"""
Synthetic environment with secondary rewards

Secondary rewards are linear in (x, onehot(a)):

    f_d(x, a) = x^T M'_d a + x^T theta'_{x,d} + a^T theta'_{a,d}

and the target q-function mixes its own (x, a) terms with the expected
secondary vector f = f(x, a):

    q(x, a, f) = (1 - lam) (x^T M'' a + x^T theta''_x + a^T theta''_a
                            + x^T M_XF f + a^T M_AF f) + lam * f^T theta_f

All parameter matrices are uniform on [-1, 1] and are drawn from the
environment stream of the seed in this order: logging (M, theta_x,
theta_a), secondary (M', theta'_x, theta'_a), target (M'', theta''_x,
theta''_a, M_XF, M_AF, theta_f).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit, logit

from config import config

from .core import (
    EvaluationTables,
    LoggedDataset,
    LoggingPolicy,
    Policy,
    PolicyValues,
    Stream,
    make_rng,
    sample_actions,
)
from .errors import ConfigurationError
from .estimators import SurrogateAggregator

logger = logging.getLogger(__name__)

SPEC_VERSION = 1


class EnvironmentSpec(BaseModel):
    """
    Seed and scalar knobs of a synthetic environment; the matrices are
    regenerated from the seed, so this is all a manifest needs to store.
    """
    model_config = ConfigDict(frozen=True)

    version: int = SPEC_VERSION
    seed: int
    dim_context: int = Field(default=10, ge=1)
    n_actions: int = Field(default=10, ge=1)
    dim_secondary: int = Field(default=5, ge=1)
    lam: float = Field(default=0.7, ge=0.0, le=1.0)
    temperature: float = -2.0
    sigma_s: float = Field(default=0.5, ge=0.0)
    sigma_r: float = Field(default=0.5, ge=0.0)
    obs_prob: float = Field(default=0.2, gt=0.0, le=1.0)
    beta: float = Field(default=0.3, ge=0.0, le=1.0)
    sigma_o: Optional[float] = Field(default=None, ge=0.0)
    theta_o_scale: float = Field(default=config.THETA_O_SCALE, ge=0.0)

    def to_json(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "EnvironmentSpec":
        spec = cls.model_validate_json(text)
        if spec.version != SPEC_VERSION:
            raise ConfigurationError(f"unsupported environment spec version {spec.version}")
        return spec


@dataclass(frozen=True, eq=False)
class ObservationSpec:
    """
    p(o=1|x) = clip(sigmoid(logit(base) + x^T theta + eps), clip_low, clip_high)
    with eps ~ N(0, noise_scale^2) drawn per row. With theta = 0 and no
    noise the probability is exactly `base`.
    """
    base: float
    theta: Optional[np.ndarray] = None
    noise_scale: float = 0.0
    clip_low: Optional[float] = None
    clip_high: Optional[float] = None

    @property
    def is_constant(self) -> bool:
        return self.noise_scale == 0.0 and (self.theta is None or not np.any(self.theta))

    def __call__(self, contexts: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        contexts = np.atleast_2d(contexts)
        if self.is_constant:
            probs = np.full(contexts.shape[0], self.base)
        else:
            logits = logit(self.base) + contexts @ self.theta
            if rng is not None and self.noise_scale > 0.0:
                logits = logits + rng.normal(0.0, self.noise_scale, size=contexts.shape[0])
            probs = expit(logits)
        if self.clip_low is not None:
            probs = np.clip(probs, self.clip_low, self.clip_high)
        return probs


@dataclass(frozen=True, eq=False)
class SyntheticEnvironment:
    """Parameter matrices and knobs of one synthetic environment"""
    spec: EnvironmentSpec
    logging_policy: LoggingPolicy
    sec_interaction: np.ndarray     # (d_s, d_x, A)
    sec_theta_x: np.ndarray         # (d_s, d_x)
    sec_theta_a: np.ndarray         # (d_s, A)
    tgt_interaction: np.ndarray     # (d_x, A)
    tgt_theta_x: np.ndarray         # (d_x,)
    tgt_theta_a: np.ndarray         # (A,)
    context_coupling: np.ndarray    # M_XF (d_x, d_s)
    action_coupling: np.ndarray     # M_AF (A, d_s)
    theta_f: np.ndarray             # (d_s,)
    observation: Optional[ObservationSpec] = None

    @property
    def dim_context(self) -> int:
        return self.spec.dim_context

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    @property
    def dim_secondary(self) -> int:
        return self.spec.dim_secondary

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def beta(self) -> float:
        return self.spec.beta


def build_environment(spec: EnvironmentSpec) -> SyntheticEnvironment:
    """Regenerate every matrix of `spec` from its seed."""
    rng = make_rng(spec.seed, Stream.ENVIRONMENT)
    d_x, n_actions, d_s = spec.dim_context, spec.n_actions, spec.dim_secondary

    def uniform(*shape):
        return rng.uniform(-1.0, 1.0, size=shape)

    logging_policy = LoggingPolicy.from_rng(rng, d_x, n_actions, spec.temperature)
    secondary = (uniform(d_s, d_x, n_actions), uniform(d_s, d_x), uniform(d_s, n_actions))
    target = (
        uniform(d_x, n_actions), uniform(d_x), uniform(n_actions),
        uniform(d_x, d_s), uniform(n_actions, d_s), uniform(d_s),
    )
    env = SyntheticEnvironment(spec, logging_policy, *secondary, *target, observation=ObservationSpec(spec.obs_prob))
    if spec.sigma_o is not None:
        observation = noisy_observation_spec(env, spec.sigma_o, spec.seed, spec.theta_o_scale)
        env = SyntheticEnvironment(spec, logging_policy, *secondary, *target, observation=observation)
    logger.debug("built synthetic environment %s", spec.to_json())
    return env


def new_environment(
    seed: int,
    dim_context: int = 10,
    n_actions: int = 10,
    dim_secondary: int = 5,
    lam: float = 0.7,
    temperature: float = -2.0,
    sigma_s: float = 0.5,
    sigma_r: float = 0.5,
    obs_prob: float = 0.2,
    beta: float = 0.3,
    sigma_o: Optional[float] = None,
) -> SyntheticEnvironment:
    return build_environment(
        EnvironmentSpec(
            seed=seed, dim_context=dim_context, n_actions=n_actions, dim_secondary=dim_secondary, lam=lam,
            temperature=temperature, sigma_s=sigma_s, sigma_r=sigma_r, obs_prob=obs_prob, beta=beta,
            sigma_o=sigma_o,
        )
    )


def noisy_observation_spec(
    env: SyntheticEnvironment,
    sigma_o: float,
    seed: int,
    scale: float = config.THETA_O_SCALE,
) -> ObservationSpec:
    """
    Context-dependent observation probability with per-row logit noise.

    theta_o has entries uniform on [-scale, scale] / sqrt(d_x), so x^T theta_o
    has variance about scale^2 / 3 under standard-normal contexts and the
    noiseless marginal stays near p_o.
    """
    if sigma_o < 0.0:
        raise ConfigurationError(f"sigma_o must be non-negative, got {sigma_o}")
    rng = make_rng(seed, Stream.OBSERVATION)
    theta = scale * rng.uniform(-1.0, 1.0, size=env.dim_context) / np.sqrt(env.dim_context)
    return ObservationSpec(
        base=env.spec.obs_prob,
        theta=theta,
        noise_scale=sigma_o,
        clip_low=config.NOISY_OBS_CLIP_LOW,
        clip_high=config.NOISY_OBS_CLIP_HIGH,
    )


# ============================================================================
# EXPECTED REWARDS
# ============================================================================

def _batch(contexts, actions) -> Tuple[np.ndarray, np.ndarray, bool]:
    single = np.ndim(contexts) == 1
    return np.atleast_2d(np.asarray(contexts, dtype=float)), np.atleast_1d(np.asarray(actions, dtype=np.int64)), single


def expected_secondary_all(env: SyntheticEnvironment, contexts: np.ndarray) -> np.ndarray:
    """f(x, a) for every action, shape (n, A, d_s)."""
    contexts = np.atleast_2d(contexts)
    return (
        np.einsum("nx,dxa->nad", contexts, env.sec_interaction)
        + (contexts @ env.sec_theta_x.T)[:, None, :]
        + env.sec_theta_a.T[None, :, :]
    )


def expected_secondary(env: SyntheticEnvironment, contexts, actions) -> np.ndarray:
    """f(x, a), shape (d_s,) for one context or (n, d_s) for a batch."""
    contexts, actions, single = _batch(contexts, actions)
    out = (
        np.einsum("nx,dxn->nd", contexts, env.sec_interaction[:, :, actions])
        + contexts @ env.sec_theta_x.T
        + env.sec_theta_a[:, actions].T
    )
    return out[0] if single else out


def _target(env: SyntheticEnvironment, base: np.ndarray, context_term: np.ndarray, action_term: np.ndarray, f: np.ndarray) -> np.ndarray:
    coupled = base + (context_term * f).sum(axis=-1) + (action_term * f).sum(axis=-1)
    return (1.0 - env.lam) * coupled + env.lam * (f @ env.theta_f)


def expected_target_all(env: SyntheticEnvironment, contexts: np.ndarray) -> np.ndarray:
    """q(x, a, f(x, a)) for every action, shape (n, A)."""
    contexts = np.atleast_2d(contexts)
    f = expected_secondary_all(env, contexts)
    base = contexts @ env.tgt_interaction + (contexts @ env.tgt_theta_x)[:, None] + env.tgt_theta_a
    return _target(env, base, (contexts @ env.context_coupling)[:, None, :], env.action_coupling[None, :, :], f)


def expected_target(env: SyntheticEnvironment, contexts, actions) -> np.ndarray:
    """q(x, a, f(x, a)), a scalar for one context or (n,) for a batch."""
    contexts, actions, single = _batch(contexts, actions)
    f = expected_secondary(env, contexts, actions)
    base = (
        (contexts * env.tgt_interaction[:, actions].T).sum(axis=1)
        + contexts @ env.tgt_theta_x
        + env.tgt_theta_a[actions]
    )
    out = _target(env, base, contexts @ env.context_coupling, env.action_coupling[actions], f)
    return float(out[0]) if single else out


# ============================================================================
# SAMPLING
# ============================================================================

def sample_dataset(env: SyntheticEnvironment, n: int, seed: int) -> LoggedDataset:
    """
    Draw n logged rows.

    x ~ N(0, I), a ~ pi_0, s ~ N(f(x, a), sigma_s^2 I), r ~ N(q(x, a, f), sigma_r^2)
    kept only where o ~ Bernoulli(p(o|x)) is 1. The obs_prob column holds
    the true (possibly noisy) p(o|x).
    """
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    rng = make_rng(seed, Stream.DATA)
    contexts = rng.standard_normal((n, env.dim_context))
    probs = env.logging_policy.action_dist(contexts)
    actions = sample_actions(probs, rng)
    secondary = expected_secondary(env, contexts, actions) + env.spec.sigma_s * rng.standard_normal((n, env.dim_secondary))
    target = expected_target(env, contexts, actions) + env.spec.sigma_r * rng.standard_normal(n)
    obs_prob = env.observation(contexts, rng)
    obs_flags = (rng.random(n) < obs_prob).astype(np.int64)
    return LoggedDataset(
        contexts=contexts,
        actions=actions,
        obs_flags=obs_flags,
        secondary=secondary,
        target=target,
        obs_prob=obs_prob,
        pscore=probs[np.arange(n), actions],
        n_actions=env.n_actions,
    )


def surrogate_aggregator(env: SyntheticEnvironment, sigma_f: float = config.SIGMA_F, seed: Optional[int] = None) -> SurrogateAggregator:
    """F(s) = s^T (theta_f + eps_F) with eps_F ~ N(0, sigma_f^2) drawn once."""
    rng = make_rng(env.spec.seed if seed is None else seed, Stream.SURROGATE)
    return SurrogateAggregator.draw(env.theta_f, sigma_f, rng)


# ============================================================================
# GROUND TRUTH
# ============================================================================

def evaluation_contexts(env: SyntheticEnvironment, n_eval_contexts: int, seed: int) -> np.ndarray:
    if n_eval_contexts < 1:
        raise ConfigurationError("n_eval_contexts must be at least 1")
    return make_rng(seed, Stream.EVALUATION).standard_normal((n_eval_contexts, env.dim_context))


def evaluation_on(env: SyntheticEnvironment, contexts: np.ndarray, beta: Optional[float] = None) -> EvaluationTables:
    return EvaluationTables(
        contexts=contexts,
        target=expected_target_all(env, contexts),
        secondary=expected_secondary_all(env, contexts).sum(axis=2),
        beta=env.beta if beta is None else beta,
    )


def synthetic_evaluation(
    env: SyntheticEnvironment,
    n_eval_contexts: int = config.N_EVAL_CONTEXTS,
    seed: int = 0,
    beta: Optional[float] = None,
) -> EvaluationTables:
    """Value tables on fresh contexts, shared by every method compared in a run."""
    return evaluation_on(env, evaluation_contexts(env, n_eval_contexts, seed), beta)


def true_values(
    env: SyntheticEnvironment,
    policy: Policy,
    n_eval_contexts: int = config.N_EVAL_CONTEXTS,
    seed: int = 0,
    beta: Optional[float] = None,
) -> PolicyValues:
    """V_r, V_s and V_c with exact sums over actions."""
    return synthetic_evaluation(env, n_eval_contexts, seed, beta).values(policy)


def optimal_and_uniform_values(
    env: SyntheticEnvironment,
    beta: Optional[float] = None,
    n_eval_contexts: int = config.N_EVAL_CONTEXTS,
    seed: int = 0,
) -> Tuple[PolicyValues, PolicyValues]:
    """Values of the argmax policy for weight beta and of the uniform policy."""
    tables = synthetic_evaluation(env, n_eval_contexts, seed, beta)
    return tables.optimal_values(), tables.uniform_values()
