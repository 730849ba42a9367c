"""
Nuisance models fitted from logged data

Closed-form ridge regressors for q(x, a), q(x, a, s), f(x, a) and the
pseudo-reward used by the naive DR baseline, plus a damped-Newton logistic
classifier for the observation probability p(o|x).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np
from scipy import linalg
from scipy.special import expit

from config import config

from .core import LoggedDataset
from .errors import ConfigurationError, InsufficientDataError

logger = logging.getLogger(__name__)


class RewardModel(Protocol):
    """Prediction interface the estimators rely on"""

    n_actions: int

    def predict(self, contexts: np.ndarray, actions: np.ndarray, secondary: Optional[np.ndarray] = None) -> np.ndarray:
        ...

    def predict_all(self, contexts: np.ndarray) -> np.ndarray:
        ...


def _onehot(actions: np.ndarray, n_actions: int) -> np.ndarray:
    return np.eye(n_actions)[np.asarray(actions, dtype=np.int64)]


def design_matrix(
    contexts: np.ndarray,
    actions: np.ndarray,
    n_actions: int,
    secondary: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Regression features [1, x, onehot(a), x (x) onehot(a)], extended by
    [s, s (x) onehot(a)] when secondary rewards are given. Column 0 is the
    intercept.
    """
    contexts = np.asarray(contexts, dtype=float)
    n = contexts.shape[0]
    onehot = _onehot(actions, n_actions)
    columns = [np.ones((n, 1)), contexts, onehot, (onehot[:, :, None] * contexts[:, None, :]).reshape(n, -1)]
    if secondary is not None:
        secondary = np.asarray(secondary, dtype=float).reshape(n, -1)
        columns += [secondary, (onehot[:, :, None] * secondary[:, None, :]).reshape(n, -1)]
    return np.hstack(columns)


def ridge_penalty(n_features: int, ridge: float, intercept: bool = True) -> np.ndarray:
    """Diagonal penalty ridge * I, with a zero for the intercept in column 0."""
    penalty = np.full(n_features, float(ridge))
    if intercept:
        penalty[0] = 0.0
    return np.diag(penalty)


def ridge_solve(features: np.ndarray, y: np.ndarray, ridge: float, intercept: bool = True) -> np.ndarray:
    """
    Solve (A^T A + P) beta = A^T y with P = ridge_penalty(...); `y` may hold
    several outputs as columns.
    """
    if ridge <= 0.0:
        raise ConfigurationError(f"ridge penalty must be positive, got {ridge}")
    gram = features.T @ features + ridge_penalty(features.shape[1], ridge, intercept)
    return linalg.solve(gram, features.T @ y, assume_a="pos")


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """
    Linear model over `design_matrix` features.

    `coef` is (p,) for a scalar output or (p, k) for k outputs. Models built
    with `uses_secondary=True` need s at prediction time and cannot
    enumerate actions on their own.
    """
    coef: np.ndarray
    n_actions: int
    uses_secondary: bool = False

    def predict(self, contexts: np.ndarray, actions: np.ndarray, secondary: Optional[np.ndarray] = None) -> np.ndarray:
        if self.uses_secondary and secondary is None:
            raise ConfigurationError("this model conditions on secondary rewards")
        features = design_matrix(contexts, actions, self.n_actions, secondary if self.uses_secondary else None)
        return features @ self.coef

    def predict_all(self, contexts: np.ndarray) -> np.ndarray:
        """Predictions for every action, shape (n, A) or (n, A, k)."""
        if self.uses_secondary:
            raise ConfigurationError("cannot enumerate actions for a model that conditions on s")
        contexts = np.asarray(contexts, dtype=float)
        n = contexts.shape[0]
        preds = [self.predict(contexts, np.full(n, a)) for a in range(self.n_actions)]
        return np.stack(preds, axis=1)


def _fit_ridge(contexts, actions, y, n_actions, ridge, secondary=None) -> RidgeModel:
    features = design_matrix(contexts, actions, n_actions, secondary)
    coef = ridge_solve(features, y, ridge)
    return RidgeModel(coef=coef, n_actions=n_actions, uses_secondary=secondary is not None)


def fit_q_xa(data: LoggedDataset, ridge: float = config.RIDGE_LAMBDA) -> RidgeModel:
    """
    Ridge regression of r on (x, a) over the rows with an observed target.

    Raises:
        InsufficientDataError: if no target reward is observed
    """
    mask = data.obs_flags == 1
    if not mask.any():
        raise InsufficientDataError("no observed target rewards to fit q(x, a)")
    return _fit_ridge(data.contexts[mask], data.actions[mask], data.target[mask], data.n_actions, ridge)


def fit_q_xas(data: LoggedDataset, ridge: float = config.RIDGE_LAMBDA) -> RidgeModel:
    """Ridge regression of r on (x, a, s) over the rows with an observed target."""
    mask = data.obs_flags == 1
    if not mask.any():
        raise InsufficientDataError("no observed target rewards to fit q(x, a, s)")
    return _fit_ridge(
        data.contexts[mask], data.actions[mask], data.target[mask], data.n_actions, ridge,
        secondary=data.secondary[mask],
    )


def fit_f(data: LoggedDataset, ridge: float = config.RIDGE_LAMBDA) -> RidgeModel:
    """One ridge fit per secondary dimension over all rows (s is always observed)."""
    return _fit_ridge(data.contexts, data.actions, data.secondary, data.n_actions, ridge)


def fit_pseudo_reward(data: LoggedDataset, pseudo_reward: np.ndarray, ridge: float = config.RIDGE_LAMBDA) -> RidgeModel:
    """Ridge regression of a fully available pseudo-reward on (x, a) over all rows."""
    return _fit_ridge(data.contexts, data.actions, np.asarray(pseudo_reward, dtype=float), data.n_actions, ridge)


# ============================================================================
# OBSERVATION MODEL
# ============================================================================

@dataclass(frozen=True, eq=False)
class ObservationModel:
    """Logistic model of p(o=1|x) with outputs clipped to [clip_low, clip_high]"""
    coef: np.ndarray
    clip_low: float = config.OBS_PROB_CLIP_LOW
    clip_high: float = config.OBS_PROB_CLIP_HIGH

    def predict(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        logits = self.coef[0] + contexts @ self.coef[1:]
        return np.clip(expit(logits), self.clip_low, self.clip_high)


def _log_likelihood(features: np.ndarray, labels: np.ndarray, beta: np.ndarray) -> float:
    z = features @ beta
    return float(np.sum(labels * z - np.logaddexp(0.0, z)))


def fit_obs_model(
    data: LoggedDataset,
    max_iter: int = config.LOGISTIC_MAX_ITER,
    tol: float = config.LOGISTIC_TOL,
) -> ObservationModel:
    """
    Logistic regression of o on x by damped Newton iterations.

    Stops once the Euclidean norm of the log-likelihood gradient, divided by
    the number of rows, falls below `tol`. When only one class is present
    the model is the constant at the matching clip bound.
    """
    labels = data.obs_flags.astype(float)
    features = np.hstack([np.ones((len(data), 1)), data.contexts])
    beta = np.zeros(features.shape[1])
    if labels.min() == labels.max():
        beta[0] = np.inf if labels[0] == 1.0 else -np.inf
        return ObservationModel(coef=beta)

    n = len(data)
    current = _log_likelihood(features, labels, beta)
    iteration = -1
    for iteration in range(max_iter):
        probs = expit(features @ beta)
        grad = features.T @ (labels - probs)
        if np.linalg.norm(grad) / n < tol:
            break
        hessian = (features * (probs * (1.0 - probs))[:, None]).T @ features
        step = linalg.solve(hessian + 1e-10 * np.eye(hessian.shape[0]), grad, assume_a="pos")
        # halve the step until the likelihood does not decrease
        t = 1.0
        candidate = _log_likelihood(features, labels, beta + step)
        while candidate < current and t > 1e-10:
            t *= 0.5
            candidate = _log_likelihood(features, labels, beta + t * step)
        if candidate < current:
            break
        beta = beta + t * step
        current = candidate
    logger.debug("observation model converged after %d Newton iterations", iteration + 1)
    return ObservationModel(coef=beta)


def estimate_obs_prob(data: LoggedDataset, model: Optional[ObservationModel] = None) -> LoggedDataset:
    """Replace the obs_prob column by a fitted (or given) observation model's output."""
    model = fit_obs_model(data) if model is None else model
    return data.with_obs_prob(model.predict(data.contexts))


# ============================================================================
# MODEL BUNDLE
# ============================================================================

@dataclass(frozen=True, eq=False)
class FittedModels:
    """
    Nuisance models for one dataset.

    Attributes:
        q_xa: q-hat(x, a), fitted on observed-target rows
        q_xas: q-hat(x, a, s), fitted on observed-target rows
        f_hat: f-hat(x, a) with d_s outputs, fitted on all rows
        q_pseudo: q-hat on the pseudo-reward o*r + (1-o)*F(s), all rows
        obs_model: p-hat(o|x), when the observation probability is estimated
    """
    q_xa: Optional[RewardModel] = None
    q_xas: Optional[RewardModel] = None
    f_hat: Optional[RewardModel] = None
    q_pseudo: Optional[RewardModel] = None
    obs_model: Optional[ObservationModel] = None


def pseudo_reward(data: LoggedDataset, aggregator: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """r where the target is observed, F(s) elsewhere."""
    return np.where(data.obs_flags == 1, data.target, aggregator(data.secondary))


def fit_models(
    data: LoggedDataset,
    ridge: float = config.RIDGE_LAMBDA,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    estimate_obs: bool = False,
) -> FittedModels:
    """
    Fit every nuisance model the estimators may need.

    Target-reward models are skipped (left as None) when no target is
    observed; estimators that need them then raise MissingModelError.
    """
    q_xa = q_xas = None
    if data.n_observed > 0:
        q_xa = fit_q_xa(data, ridge)
        q_xas = fit_q_xas(data, ridge)
    else:
        logger.warning("no observed target rewards among %d rows; q-hat models not fitted", len(data))
    q_pseudo = fit_pseudo_reward(data, pseudo_reward(data, aggregator), ridge) if aggregator is not None else None
    obs_model = fit_obs_model(data) if estimate_obs else None
    logger.debug("fitted nuisance models on %d rows (%d observed)", len(data), data.n_observed)
    return FittedModels(q_xa=q_xa, q_xas=q_xas, f_hat=fit_f(data, ridge), q_pseudo=q_pseudo, obs_model=obs_model)
