"""
Policy-gradient and policy-value estimators

Every estimator here is a weighted sum of policy scores,

    grad = (1/n) sum_i sum_a C[i, a] * g_theta(x_i, a),

so each one is defined by its coefficient matrix C (n, A). The matching
value estimate replaces g_theta by 1, i.e. C.sum() / n. Inner expectations
over pi_theta(a|x) enter C as pi_theta(a|x_i) times a per-action term and
are summed exactly over the finite action set.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core import (
    GradientEstimate,
    LoggedDataset,
    SoftmaxLinearPolicy,
    importance_weights,
)
from .errors import (
    ConfigurationError,
    InvalidPropensityError,
    MissingModelError,
    MissingRewardError,
)
from .models import FittedModels, pseudo_reward


# ============================================================================
# CONFIGURATION TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class SurrogateAggregator:
    """
    Linear surrogate F(s) = s . (weights + noise).

    `noise` is drawn once per experiment from N(0, noise_scale^2) and then
    held fixed, so every estimator in a run sees the same F.
    """
    weights: np.ndarray
    noise_scale: float = 0.0
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).ravel()
        noise = np.zeros_like(weights) if self.noise is None else np.asarray(self.noise, dtype=float).ravel()
        if noise.shape != weights.shape:
            raise ConfigurationError("aggregator noise must match the weight dimension")
        if self.noise_scale < 0.0:
            raise ConfigurationError("aggregator noise scale must be non-negative")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "noise", noise)

    @classmethod
    def draw(cls, weights, noise_scale: float, rng: np.random.Generator) -> "SurrogateAggregator":
        weights = np.asarray(weights, dtype=float).ravel()
        return cls(weights, noise_scale, rng.normal(0.0, noise_scale, size=weights.shape))

    @classmethod
    def first_dimension(cls, dim_secondary: int) -> "SurrogateAggregator":
        """F(s) = s_1, noise free."""
        weights = np.zeros(dim_secondary)
        weights[0] = 1.0
        return cls(weights)

    @property
    def effective_weights(self) -> np.ndarray:
        return self.weights + self.noise

    def __call__(self, secondary: np.ndarray) -> np.ndarray:
        return np.asarray(secondary, dtype=float) @ self.effective_weights


class EstimatorKind(str, Enum):
    IPS = "ips"
    DR = "dr"
    R_IPS = "r-ips"
    R_DR = "r-dr"
    S_IPS = "s-ips"
    S_DR = "s-dr"
    HYPER_R = "hyper-r"
    S_GRAD = "s-grad"
    HYPER = "hyper"
    DR_FSR = "dr-fsr"


class EstimatorConfig(BaseModel):
    """
    Which estimator to run and its weights.

    Attributes:
        kind: estimator family
        gamma: mixture weight, read only by HYPER
        beta: objective weight, read only by value estimation
        clip_weight: optional upper bound on importance weights (off by default)
    """
    model_config = ConfigDict(frozen=True)

    kind: EstimatorKind
    gamma: float = Field(default=0.0, ge=0.0, le=1.0)
    beta: float = Field(default=0.0, ge=0.0, le=1.0)
    clip_weight: Optional[float] = Field(default=None, gt=0.0)


# ============================================================================
# SHARED ROW TERMS
# ============================================================================

@dataclass(frozen=True, eq=False)
class _Pass:
    """Quantities every estimator reads from one pass over the data"""
    probs: np.ndarray
    weights: np.ndarray
    actions: np.ndarray
    onehot: np.ndarray


def _data_pass(data: LoggedDataset, policy: SoftmaxLinearPolicy, clip_weight: Optional[float] = None) -> _Pass:
    probs = policy.action_dist(data.contexts)
    weights = importance_weights(policy, data, probs)
    if clip_weight is not None:
        weights = np.minimum(weights, clip_weight)
    return _Pass(probs=probs, weights=weights, actions=data.actions, onehot=np.eye(data.n_actions)[data.actions])


def _observation_ratio(data: LoggedDataset) -> np.ndarray:
    if not (data.obs_prob > 0.0).all():
        raise InvalidPropensityError("observation probabilities must be strictly positive")
    return data.obs_flags / data.obs_prob


def _require_full(data: LoggedDataset) -> None:
    if not data.fully_observed:
        raise MissingRewardError(
            f"{len(data) - data.n_observed} of {len(data)} target rewards are unobserved"
        )


def _require(models: Optional[FittedModels], name: str):
    model = getattr(models, name, None) if models is not None else None
    if model is None:
        raise MissingModelError(f"estimator needs the fitted model '{name}'")
    return model


def _require_aggregator(aggregator: Optional[Callable]) -> Callable:
    if aggregator is None:
        raise ConfigurationError("estimator needs a surrogate aggregator F(s)")
    return aggregator


def _logged(table: np.ndarray, p: _Pass) -> np.ndarray:
    return table[np.arange(p.actions.size), p.actions]


# ============================================================================
# COEFFICIENT MATRICES
# ============================================================================

def _dr_coef(p: _Pass, reward: np.ndarray, q_all: np.ndarray) -> np.ndarray:
    residual = p.weights * (reward - _logged(q_all, p))
    return p.onehot * residual[:, None] + p.probs * q_all


def ips_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    _require_full(data)
    p = _data_pass(data, policy, clip_weight)
    return p.onehot * (p.weights * data.target)[:, None]


def dr_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    _require_full(data)
    q_xa = _require(models, "q_xa")
    p = _data_pass(data, policy, clip_weight)
    return _dr_coef(p, data.target, q_xa.predict_all(data.contexts))


def r_ips_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    ratio = _observation_ratio(data)
    p = _data_pass(data, policy, clip_weight)
    return ratio[:, None] * (p.onehot * (p.weights * data.target)[:, None])


def r_dr_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    # the o/p factor scales the direct term too
    ratio = _observation_ratio(data)
    q_xa = _require(models, "q_xa")
    p = _data_pass(data, policy, clip_weight)
    return ratio[:, None] * _dr_coef(p, data.target, q_xa.predict_all(data.contexts))


def s_ips_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    aggregator = _require_aggregator(aggregator)
    p = _data_pass(data, policy, clip_weight)
    return p.onehot * (p.weights * aggregator(data.secondary))[:, None]


def s_dr_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    aggregator = _require_aggregator(aggregator)
    f_hat = _require(models, "f_hat")
    p = _data_pass(data, policy, clip_weight)
    surrogate_all = aggregator(f_hat.predict_all(data.contexts))
    return _dr_coef(p, aggregator(data.secondary), surrogate_all)


def hyper_r_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    """Direct term and secondary shift for all rows, o/p-weighted residual for observed rows."""
    ratio = _observation_ratio(data)
    q_xa = _require(models, "q_xa")
    q_xas = _require(models, "q_xas")
    p = _data_pass(data, policy, clip_weight)
    q_all = q_xa.predict_all(data.contexts)
    q_s = q_xas.predict(data.contexts, data.actions, data.secondary)
    shift = p.weights * (q_s - _logged(q_all, p))
    residual = ratio * p.weights * (data.target - q_s)
    return p.probs * q_all + p.onehot * shift[:, None] + p.onehot * residual[:, None]


def s_value_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    """DR on the sum of the secondary rewards."""
    f_hat = _require(models, "f_hat")
    p = _data_pass(data, policy, clip_weight)
    f_all = f_hat.predict_all(data.contexts).reshape(len(data), data.n_actions, -1).sum(axis=2)
    return _dr_coef(p, data.secondary.sum(axis=1), f_all)


def hyper_coef(data, policy, models=None, aggregator=None, clip_weight=None, gamma: float = 0.0) -> np.ndarray:
    _check_weight(gamma, "gamma")
    target = hyper_r_coef(data, policy, models, aggregator, clip_weight)
    secondary = s_value_coef(data, policy, models, aggregator, clip_weight)
    return (1.0 - gamma) * target + gamma * secondary


def dr_fsr_coef(data, policy, models=None, aggregator=None, clip_weight=None) -> np.ndarray:
    """DR on r where observed and F(s) elsewhere, with q-hat fitted on that pseudo-reward."""
    aggregator = _require_aggregator(aggregator)
    q_pseudo = _require(models, "q_pseudo")
    p = _data_pass(data, policy, clip_weight)
    return _dr_coef(p, pseudo_reward(data, aggregator), q_pseudo.predict_all(data.contexts))


def _check_weight(value: float, name: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")


_COEFFICIENTS: Dict[EstimatorKind, Callable[..., np.ndarray]] = {
    EstimatorKind.IPS: ips_coef,
    EstimatorKind.DR: dr_coef,
    EstimatorKind.R_IPS: r_ips_coef,
    EstimatorKind.R_DR: r_dr_coef,
    EstimatorKind.S_IPS: s_ips_coef,
    EstimatorKind.S_DR: s_dr_coef,
    EstimatorKind.HYPER_R: hyper_r_coef,
    EstimatorKind.S_GRAD: s_value_coef,
    EstimatorKind.DR_FSR: dr_fsr_coef,
}


def estimator_coefficients(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Coefficient matrix (n, A) of the estimator named by `config`."""
    if config.kind == EstimatorKind.HYPER:
        return hyper_coef(data, policy, models, aggregator, config.clip_weight, gamma=config.gamma)
    return _COEFFICIENTS[config.kind](data, policy, models, aggregator, config.clip_weight)


def _to_gradient(data: LoggedDataset, policy: SoftmaxLinearPolicy, coef: np.ndarray) -> GradientEstimate:
    return GradientEstimate(policy.score_sum(data.contexts, coef) / len(data))


# ============================================================================
# GRADIENT ESTIMATORS
# ============================================================================

def grad_ips(data: LoggedDataset, policy: SoftmaxLinearPolicy) -> GradientEstimate:
    """
    IPS gradient (1/n) sum_i w_i r_i g_i.

    Raises:
        MissingRewardError: if any target reward is unobserved
    """
    return _to_gradient(data, policy, ips_coef(data, policy))


def grad_dr(data: LoggedDataset, policy: SoftmaxLinearPolicy, models: FittedModels) -> GradientEstimate:
    """DR gradient: IPS on the residuals r - q-hat(x, a) plus E_pi[q-hat g]."""
    return _to_gradient(data, policy, dr_coef(data, policy, models))


def grad_r_ips(data: LoggedDataset, policy: SoftmaxLinearPolicy) -> GradientEstimate:
    """
    IPS over observed rows, reweighted by o_i / p(o_i|x_i).

    Raises:
        InvalidPropensityError: if any observation probability is <= 0
    """
    return _to_gradient(data, policy, r_ips_coef(data, policy))


def grad_r_dr(data: LoggedDataset, policy: SoftmaxLinearPolicy, models: FittedModels) -> GradientEstimate:
    """DR over observed rows; the o/p factor multiplies both the residual and the direct term."""
    return _to_gradient(data, policy, r_dr_coef(data, policy, models))


def grad_s_ips(data: LoggedDataset, policy: SoftmaxLinearPolicy, aggregator: SurrogateAggregator) -> GradientEstimate:
    return _to_gradient(data, policy, s_ips_coef(data, policy, aggregator=aggregator))


def grad_s_dr(
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: FittedModels,
    aggregator: SurrogateAggregator,
) -> GradientEstimate:
    """DR on F(s), with F applied to the predicted mean vector f-hat(x, a)."""
    return _to_gradient(data, policy, s_dr_coef(data, policy, models, aggregator))


def grad_hyper_r(data: LoggedDataset, policy: SoftmaxLinearPolicy, models: FittedModels) -> GradientEstimate:
    """
    Target-reward gradient that uses secondary rewards as a control variate.

    (1/n) sum_i { E_pi[q-hat(x_i, a) g] + w_i (q-hat(x_i, a_i, s_i) - q-hat(x_i, a_i)) g_i
                  + (o_i / p_i) w_i (r_i - q-hat(x_i, a_i, s_i)) g_i }

    Args:
        data: logged dataset with obs_prob filled in
        policy: policy at which the gradient is taken
        models: bundle with q_xa and q_xas fitted

    Returns:
        GradientEstimate congruent with policy.theta
    """
    return _to_gradient(data, policy, hyper_r_coef(data, policy, models))


def grad_s_value(data: LoggedDataset, policy: SoftmaxLinearPolicy, models: FittedModels) -> GradientEstimate:
    """DR gradient of the secondary value sum_d f_d."""
    return _to_gradient(data, policy, s_value_coef(data, policy, models))


def grad_hyper(
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: FittedModels,
    gamma: float,
) -> GradientEstimate:
    """
    HyPeR mixture (1 - gamma) * grad_hyper_r + gamma * grad_s_value.

    Raises:
        ConfigurationError: if gamma is outside [0, 1]
    """
    return _to_gradient(data, policy, hyper_coef(data, policy, models, gamma=gamma))


def grad_dr_fsr(
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: FittedModels,
    aggregator: SurrogateAggregator,
) -> GradientEstimate:
    return _to_gradient(data, policy, dr_fsr_coef(data, policy, models, aggregator))


# ============================================================================
# VALUE ESTIMATES AND DISPATCH
# ============================================================================

def value_estimate(
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: FittedModels,
    beta: float,
) -> float:
    """
    Combined value (1 - beta) * V_r + beta * V_s.

    Both parts are the value analogues of grad_hyper_r and grad_s_value,
    so the estimate is unbiased for the combined value at weight beta.
    """
    _check_weight(beta, "beta")
    return float(hyper_coef(data, policy, models, gamma=beta).sum() / len(data))


def estimate_gradient(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> GradientEstimate:
    return _to_gradient(data, policy, estimator_coefficients(config, data, policy, models, aggregator))


def estimate_value(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """Value analogue of `estimate_gradient` (the estimator's objective)."""
    return float(estimator_coefficients(config, data, policy, models, aggregator).sum() / len(data))


def gradient_and_value(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[GradientEstimate, float]:
    """Both from a single coefficient computation."""
    coef = estimator_coefficients(config, data, policy, models, aggregator)
    return _to_gradient(data, policy, coef), float(coef.sum() / len(data))


def row_gradients(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """
    Per-row contributions (n, n_params); their column mean is the gradient
    estimate, and row i alone is the estimate on the single-row dataset {i}.
    """
    coef = estimator_coefficients(config, data, policy, models, aggregator)
    return policy.row_scores(data.contexts, coef)


def row_values(
    config: EstimatorConfig,
    data: LoggedDataset,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    return estimator_coefficients(config, data, policy, models, aggregator).sum(axis=1)
