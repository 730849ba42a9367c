"""
Policy optimization

Full-batch gradient ascent on any estimator's gradient, and the
deterministic direct-method baselines built from fitted regressors.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import config

from .core import LoggedDataset, SoftmaxLinearPolicy
from .errors import MissingModelError, NonFiniteGradientError, TrainingDivergedError
from .estimators import EstimatorConfig, gradient_and_value
from .models import FittedModels, RewardModel

logger = logging.getLogger(__name__)


class TrainerConfig(BaseModel):
    """
    Gradient-ascent hyperparameters.

    Training draws no randomness; `seed` is carried so run manifests record it.
    """
    model_config = ConfigDict(frozen=True)

    step_size: float = Field(default=config.STEP_SIZE, ge=0.0)
    iterations: int = Field(default=config.ITERATIONS, ge=0)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class TrainingResult:
    """
    Attributes:
        policy: final iterate
        value_trace: estimated objective at theta_0, ..., theta_T
    """
    policy: SoftmaxLinearPolicy
    value_trace: List[float]


def train_policy(
    data: LoggedDataset,
    estimator: EstimatorConfig,
    hyperparams: TrainerConfig = TrainerConfig(),
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> TrainingResult:
    """
    Gradient ascent theta <- theta + step_size * grad from theta = 0.

    Args:
        data: logged dataset the estimator reads
        estimator: estimator kind and weights
        hyperparams: step size and iteration count
        models: nuisance models the estimator needs
        aggregator: surrogate F(s) for the s-* and DR-F(s,r) estimators

    Returns:
        TrainingResult with the final policy and the value trace

    Raises:
        TrainingDivergedError: if a gradient turns non-finite
    """
    policy = SoftmaxLinearPolicy.uniform(data.dim_context, data.n_actions)
    trace: List[float] = []
    for iteration in range(hyperparams.iterations + 1):
        try:
            gradient, value = gradient_and_value(estimator, data, policy, models, aggregator)
        except NonFiniteGradientError as e:
            raise TrainingDivergedError(
                f"{estimator.kind.value} gradient became non-finite at iteration {iteration}",
                iteration=iteration,
            ) from e
        trace.append(value)
        if iteration == hyperparams.iterations:
            break
        policy = policy.with_theta(policy.theta + hyperparams.step_size * gradient.values)

    logger.debug(
        "trained %s for %d iterations: value %.4f -> %.4f",
        estimator.kind.value, hyperparams.iterations, trace[0], trace[-1],
    )
    return TrainingResult(policy=policy, value_trace=trace)


# ============================================================================
# DIRECT METHOD
# ============================================================================

class DirectMethodMode(str, Enum):
    R_DM = "r-dm"
    S_DM = "s-dm"


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """Puts probability 1 on the highest-scoring action; ties go to the lowest index."""
    scorer: Callable[[np.ndarray], np.ndarray]
    n_actions: int

    def greedy_actions(self, contexts: np.ndarray) -> np.ndarray:
        scores = self.scorer(np.atleast_2d(np.asarray(contexts, dtype=float)))
        return np.argmax(scores, axis=1)

    def action_dist(self, contexts: np.ndarray) -> np.ndarray:
        return np.eye(self.n_actions)[self.greedy_actions(contexts)]


def direct_method_policy(
    models: FittedModels,
    mode: DirectMethodMode,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> DeterministicPolicy:
    """
    argmax_a q-hat(x, a) for R_DM, argmax_a F(f-hat(x, a)) for S_DM.

    Raises:
        MissingModelError: if the regressor (or aggregator) for `mode` is absent
    """
    mode = DirectMethodMode(mode)
    if mode == DirectMethodMode.R_DM:
        if models.q_xa is None:
            raise MissingModelError("R_DM needs q_xa")
        q_xa: RewardModel = models.q_xa
        return DeterministicPolicy(scorer=q_xa.predict_all, n_actions=q_xa.n_actions)

    if models.f_hat is None or aggregator is None:
        raise MissingModelError("S_DM needs f_hat and a surrogate aggregator")
    f_hat: RewardModel = models.f_hat

    def surrogate_scores(contexts: np.ndarray) -> np.ndarray:
        predicted = f_hat.predict_all(contexts)
        return aggregator(predicted.reshape(predicted.shape[0], f_hat.n_actions, -1))

    return DeterministicPolicy(scorer=surrogate_scores, n_actions=f_hat.n_actions)
