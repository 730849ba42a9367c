"""
Core types shared by every other module

Holds the logged dataset container, the learned linear-softmax policy, the
parametric logging policy, gradient estimates, policy-value reports and
the seeding helpers. Everything here is immutable after construction.
"""

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Dict, Optional, Protocol, Union

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import (
    ConfigurationError,
    DatasetError,
    DegenerateEnvironmentError,
    FullSupportError,
    NonFiniteGradientError,
)

# Probabilities are floored here only when drawing actions, never in estimators.
SAMPLING_FLOOR = 1e-12


# ============================================================================
# SEEDING
# ============================================================================

class Stream(IntEnum):
    """Fixed sub-stream offsets derived from one master seed"""
    ENVIRONMENT = 0
    DATA = 1
    EVALUATION = 2
    SURROGATE = 3
    OBSERVATION = 4
    SPLIT = 5
    BOOTSTRAP = 6
    PROBLEM = 7
    SUMMARY = 8


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the sub-stream `stream` of the 64-bit master `seed`."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


def derive_seed(seed: int, *stream: int) -> int:
    """Integer seed for a sub-stream, for handing to code that takes plain seeds."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)).generate_state(2, np.uint32)
    # 63 bits so the seed fits a signed int64 column
    return (int(state[0]) & 0x7FFFFFFF) << 32 | int(state[1])


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ============================================================================
# LOGGED DATA
# ============================================================================

@dataclass(frozen=True, eq=False)
class LoggedDataset:
    """
    Columnar store of logged rows (x, a, o, s, r).

    Absent target rewards are stored as 0.0 and identified by `obs_flags`;
    `target[i]` is only meaningful where `obs_flags[i] == 1`.

    Attributes:
        contexts: (n, d_x) context vectors
        actions: (n,) logged action indices in [0, n_actions)
        obs_flags: (n,) 0/1 target-observation indicators
        secondary: (n, d_s) secondary rewards, always observed
        target: (n,) target rewards, valid where obs_flags == 1
        obs_prob: (n,) true or estimated p(o=1|x_i)
        pscore: (n,) logging propensity pi_0(a_i|x_i)
        n_actions: size of the action set
    """
    contexts: np.ndarray
    actions: np.ndarray
    obs_flags: np.ndarray
    secondary: np.ndarray
    target: np.ndarray
    obs_prob: np.ndarray
    pscore: np.ndarray
    n_actions: int

    def __post_init__(self):
        contexts = _frozen(self.contexts)
        secondary = _frozen(self.secondary)
        if contexts.ndim != 2 or contexts.shape[0] < 1:
            raise DatasetError("contexts must be a non-empty (n, d_x) matrix")
        n = contexts.shape[0]
        if secondary.ndim == 1:
            secondary = _frozen(secondary.reshape(n, -1))
        columns = {
            "actions": _frozen(self.actions, dtype=np.int64),
            "obs_flags": _frozen(self.obs_flags, dtype=np.int64),
            "target": _frozen(self.target),
            "obs_prob": _frozen(self.obs_prob),
            "pscore": _frozen(self.pscore),
        }
        for name, column in columns.items():
            if column.shape != (n,):
                raise DatasetError(f"{name} must have shape ({n},), got {column.shape}")
        if secondary.shape[0] != n:
            raise DatasetError(f"secondary must have {n} rows, got {secondary.shape[0]}")
        if self.n_actions < 1:
            raise DatasetError("n_actions must be at least 1")
        actions = columns["actions"]
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise DatasetError(f"actions must lie in [0, {self.n_actions})")
        flags = columns["obs_flags"]
        if not np.isin(flags, (0, 1)).all():
            raise DatasetError("obs_flags must be 0 or 1")
        if not np.isfinite(columns["target"][flags == 1]).all():
            raise DatasetError("observed target rewards must be finite")
        # unobserved targets carry no value
        target = np.where(flags == 1, columns["target"], 0.0)
        target.setflags(write=False)
        columns["target"] = target

        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "secondary", secondary)
        for name, column in columns.items():
            object.__setattr__(self, name, column)

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def dim_context(self) -> int:
        return self.contexts.shape[1]

    @property
    def dim_secondary(self) -> int:
        return self.secondary.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.obs_flags.sum())

    @property
    def fully_observed(self) -> bool:
        return bool((self.obs_flags == 1).all())

    def take(self, indices) -> "LoggedDataset":
        """Rows at `indices` (repeats allowed) as a new dataset."""
        idx = np.asarray(indices, dtype=np.int64)
        return LoggedDataset(
            contexts=self.contexts[idx],
            actions=self.actions[idx],
            obs_flags=self.obs_flags[idx],
            secondary=self.secondary[idx],
            target=self.target[idx],
            obs_prob=self.obs_prob[idx],
            pscore=self.pscore[idx],
            n_actions=self.n_actions,
        )

    def with_obs_prob(self, obs_prob) -> "LoggedDataset":
        return replace(self, obs_prob=np.broadcast_to(np.asarray(obs_prob, dtype=float), (len(self),)))

    def with_target(self, target, obs_flags=None) -> "LoggedDataset":
        flags = self.obs_flags if obs_flags is None else obs_flags
        return replace(self, target=target, obs_flags=flags)


# ============================================================================
# POLICIES
# ============================================================================

class Policy(Protocol):
    """Anything that maps contexts to a per-context action distribution"""

    n_actions: int

    def action_dist(self, contexts: np.ndarray) -> np.ndarray:
        ...


def _as_matrix(contexts: np.ndarray, dim_context: int) -> np.ndarray:
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim == 1:
        contexts = contexts[None, :]
    if contexts.ndim != 2 or contexts.shape[1] != dim_context:
        raise ConfigurationError(
            f"context dimension mismatch: expected {dim_context}, got shape {contexts.shape}"
        )
    return contexts


@dataclass(frozen=True, eq=False)
class SoftmaxLinearPolicy:
    """
    Linear-softmax policy pi_theta(a|x) proportional to exp(theta . phi(x, a)).

    The feature map phi(x, a) concatenates x (x) onehot(a) (block of size
    n_actions * d_x, action-major) with an action-bias block onehot(a).
    The flat parameter vector is laid out the same way, so the logits are
    X @ W.T + b with W = theta[:A*d_x].reshape(A, d_x) and b = theta[A*d_x:].
    """
    theta: np.ndarray
    dim_context: int
    n_actions: int

    def __post_init__(self):
        theta = _frozen(self.theta).ravel()
        expected = self.n_actions * (self.dim_context + 1)
        if theta.shape != (expected,):
            raise ConfigurationError(f"theta must have {expected} entries, got {theta.size}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, dim_context: int, n_actions: int) -> "SoftmaxLinearPolicy":
        return cls(np.zeros(n_actions * (dim_context + 1)), dim_context, n_actions)

    @property
    def n_params(self) -> int:
        return self.theta.size

    @property
    def weights(self) -> np.ndarray:
        return self.theta[: self.n_actions * self.dim_context].reshape(self.n_actions, self.dim_context)

    @property
    def bias(self) -> np.ndarray:
        return self.theta[self.n_actions * self.dim_context:]

    def with_theta(self, theta: np.ndarray) -> "SoftmaxLinearPolicy":
        return SoftmaxLinearPolicy(theta, self.dim_context, self.n_actions)

    def feature_map(self, x: np.ndarray, a: int) -> np.ndarray:
        x = _as_matrix(x, self.dim_context)[0]
        onehot = np.zeros(self.n_actions)
        onehot[a] = 1.0
        return np.concatenate([np.kron(onehot, x), onehot])

    def logits(self, contexts: np.ndarray) -> np.ndarray:
        contexts = _as_matrix(contexts, self.dim_context)
        return contexts @ self.weights.T + self.bias

    def action_dist(self, contexts: np.ndarray) -> np.ndarray:
        return softmax(self.logits(contexts), axis=1)

    def log_action_dist(self, contexts: np.ndarray) -> np.ndarray:
        return log_softmax(self.logits(contexts), axis=1)

    def score_sum(self, contexts: np.ndarray, coef: np.ndarray, probs: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Sum over rows and actions of coef[i, a] * g_theta(x_i, a).

        Uses g_theta(x, a) = phi(x, a) - sum_a' pi(a'|x) phi(x, a'), so the
        sum collapses to centred coefficients M = coef - rowsum(coef) * pi.
        """
        contexts = _as_matrix(contexts, self.dim_context)
        probs = self.action_dist(contexts) if probs is None else probs
        centred = coef - coef.sum(axis=1, keepdims=True) * probs
        return np.concatenate([(centred.T @ contexts).ravel(), centred.sum(axis=0)])

    def row_scores(self, contexts: np.ndarray, coef: np.ndarray, probs: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-row version of `score_sum`, shape (n, n_params)."""
        contexts = _as_matrix(contexts, self.dim_context)
        probs = self.action_dist(contexts) if probs is None else probs
        centred = coef - coef.sum(axis=1, keepdims=True) * probs
        block = (centred[:, :, None] * contexts[:, None, :]).reshape(len(contexts), -1)
        return np.hstack([block, centred])


@dataclass(frozen=True, eq=False)
class LoggingPolicy:
    """
    Logging policy pi_0 = softmax(phi * (x^T M a + x^T theta_x + a^T theta_a)).

    `interaction` is (d_x, A), `theta_x` is (d_x,), `theta_a` is (A,) and
    `temperature` is phi; phi = 0 gives the uniform policy.
    """
    interaction: np.ndarray
    theta_x: np.ndarray
    theta_a: np.ndarray
    temperature: float

    def __post_init__(self):
        object.__setattr__(self, "interaction", _frozen(self.interaction))
        object.__setattr__(self, "theta_x", _frozen(self.theta_x))
        object.__setattr__(self, "theta_a", _frozen(self.theta_a))

    @classmethod
    def from_rng(cls, rng: np.random.Generator, dim_context: int, n_actions: int, temperature: float) -> "LoggingPolicy":
        return cls(
            interaction=rng.uniform(-1.0, 1.0, size=(dim_context, n_actions)),
            theta_x=rng.uniform(-1.0, 1.0, size=dim_context),
            theta_a=rng.uniform(-1.0, 1.0, size=n_actions),
            temperature=temperature,
        )

    @property
    def dim_context(self) -> int:
        return self.interaction.shape[0]

    @property
    def n_actions(self) -> int:
        return self.interaction.shape[1]

    def logits(self, contexts: np.ndarray) -> np.ndarray:
        contexts = _as_matrix(contexts, self.dim_context)
        raw = contexts @ self.interaction + (contexts @ self.theta_x)[:, None] + self.theta_a
        return self.temperature * raw

    def action_dist(self, contexts: np.ndarray) -> np.ndarray:
        return softmax(self.logits(contexts), axis=1)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """Estimated policy gradient, congruent with the flat theta"""
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values).ravel()
        if not np.isfinite(values).all():
            raise NonFiniteGradientError("gradient estimate contains non-finite entries")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


# ============================================================================
# POLICY OPERATIONS
# ============================================================================

def policy_probs(policy: Policy, x: np.ndarray) -> np.ndarray:
    """
    Action probabilities for one context (1-D input) or a batch (2-D input).

    Softmax is evaluated with max subtraction, so probabilities are strictly
    positive and sum to one up to rounding.
    """
    probs = policy.action_dist(x)
    return probs[0] if np.ndim(x) == 1 else probs


def score_function(policy: SoftmaxLinearPolicy, x: np.ndarray, a: int) -> np.ndarray:
    """Score g_theta(x, a) = grad_theta log pi_theta(a|x)."""
    if not 0 <= a < policy.n_actions:
        raise ConfigurationError(f"action {a} outside [0, {policy.n_actions})")
    coef = np.zeros((1, policy.n_actions))
    coef[0, a] = 1.0
    return policy.score_sum(x, coef)


def importance_weight(
    policy: Policy,
    logging: Union[Policy, np.ndarray, float],
    x: np.ndarray,
    a: int,
) -> float:
    """
    w(x, a) = pi_theta(a|x) / pi_0(a|x).

    Args:
        policy: evaluation policy
        logging: logging policy, its probability vector for x, or the scalar pi_0(a|x)
        x: a single context
        a: action index

    Raises:
        FullSupportError: if pi_0(a|x) <= 0
    """
    if hasattr(logging, "action_dist"):
        logging_prob = float(policy_probs(logging, x)[a])
    elif np.ndim(logging) == 0:
        logging_prob = float(logging)
    else:
        logging_prob = float(np.asarray(logging, dtype=float)[a])
    if not logging_prob > 0.0:
        raise FullSupportError(f"logging policy gives probability {logging_prob} to action {a}")
    return float(policy_probs(policy, x)[a]) / logging_prob


def importance_weights(policy: Policy, data: LoggedDataset, probs: Optional[np.ndarray] = None) -> np.ndarray:
    """Vectorised weights w(x_i, a_i) for every logged row."""
    if not (data.pscore > 0.0).all():
        raise FullSupportError("logged propensities must be strictly positive")
    probs = policy.action_dist(data.contexts) if probs is None else probs
    return probs[np.arange(len(data)), data.actions] / data.pscore


def sample_actions(dist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of one action per row of `dist`."""
    dist = np.maximum(np.atleast_2d(dist), SAMPLING_FLOOR)
    cdf = np.cumsum(dist / dist.sum(axis=1, keepdims=True), axis=1)
    u = rng.random(cdf.shape[0])
    return np.minimum((cdf < u[:, None]).sum(axis=1), cdf.shape[1] - 1)


def sample_action(policy: Policy, x: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one action for context x; identical generator state gives identical draws."""
    return int(sample_actions(policy_probs(policy, x), rng)[0])


# ============================================================================
# POLICY VALUES
# ============================================================================

@dataclass(frozen=True)
class PolicyValues:
    """Target, secondary and combined values of one policy"""
    target: float
    secondary: float
    combined: float

    @classmethod
    def combine(cls, target: float, secondary: float, beta: float) -> "PolicyValues":
        return cls(float(target), float(secondary), float((1.0 - beta) * target + beta * secondary))


@dataclass(frozen=True)
class ValueReport:
    """
    Values of a learned policy next to its reference points.

    `optimal` holds, per objective, the value of the policy that is optimal
    for that objective (combined for beta, target for beta=0, secondary for
    beta=1); `uniform` holds the uniform policy's values.
    """
    policy: PolicyValues
    optimal: PolicyValues
    uniform: PolicyValues

    def relative(self) -> Dict[str, float]:
        return {
            name: relative_value(
                getattr(self.policy, name), getattr(self.optimal, name), getattr(self.uniform, name)
            )
            for name in ("combined", "target", "secondary")
        }


def relative_value(v_pi: float, v_opt: float, v_unif: float) -> float:
    """
    Affine normalisation placing the uniform policy at 0 and the optimum at 1.

    Raises:
        DegenerateEnvironmentError: if v_opt == v_unif
    """
    if v_opt == v_unif:
        raise DegenerateEnvironmentError("optimal and uniform policies have the same value")
    return (v_pi - v_unif) / (v_opt - v_unif)


@dataclass(frozen=True, eq=False)
class EvaluationTables:
    """
    Ground-truth per-action values on a fixed set of evaluation contexts.

    Attributes:
        contexts: (n, d_x) evaluation contexts
        target: (n, A) expected target reward of each action
        secondary: (n, A) expected sum of secondary rewards of each action
        beta: weight of the secondary value in the combined objective
    """
    contexts: np.ndarray
    target: np.ndarray
    secondary: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "contexts", _frozen(self.contexts))
        object.__setattr__(self, "target", _frozen(self.target))
        object.__setattr__(self, "secondary", _frozen(self.secondary))
        if self.target.shape != self.secondary.shape or self.target.shape[0] != self.contexts.shape[0]:
            raise ConfigurationError("value tables must be (n, A) and match the evaluation contexts")

    @property
    def n_actions(self) -> int:
        return self.target.shape[1]

    def _values_under(self, probs: np.ndarray) -> PolicyValues:
        target = float(np.mean((probs * self.target).sum(axis=1)))
        secondary = float(np.mean((probs * self.secondary).sum(axis=1)))
        return PolicyValues.combine(target, secondary, self.beta)

    def values(self, policy: Policy) -> PolicyValues:
        """Exact inner sums over actions, Monte Carlo over the stored contexts."""
        return self._values_under(policy.action_dist(self.contexts))

    def optimal_actions(self, beta: Optional[float] = None) -> np.ndarray:
        beta = self.beta if beta is None else beta
        return np.argmax((1.0 - beta) * self.target + beta * self.secondary, axis=1)

    def optimal_values(self, beta: Optional[float] = None) -> PolicyValues:
        """Values of the per-context argmax policy for weight `beta` (ties to the lowest index)."""
        return self._values_under(np.eye(self.n_actions)[self.optimal_actions(beta)])

    def uniform_values(self) -> PolicyValues:
        return self._values_under(np.full(self.target.shape, 1.0 / self.n_actions))

    def reference(self) -> PolicyValues:
        """Per-objective optimum: combined at beta, target at 0, secondary at 1."""
        return PolicyValues(
            target=self.optimal_values(0.0).target,
            secondary=self.optimal_values(1.0).secondary,
            combined=self.optimal_values().combined,
        )

    def report(self, policy: Policy) -> ValueReport:
        return ValueReport(policy=self.values(policy), optimal=self.reference(), uniform=self.uniform_values())
