"""
Exact enumeration on small finite bandit instances

A finite instance has discrete contexts, a finite support for the
secondary-reward vector, two-point reward noise and per-context
observation probabilities. Every single-row outcome can then be listed
with its probability, which gives exact policy gradients, exact means and
variances of any estimator, and i.i.d. resampling of logged datasets.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from .core import LoggedDataset, SoftmaxLinearPolicy, Stream, make_rng
from .errors import ConfigurationError, EnumerationLimitError
from .estimators import EstimatorConfig, row_gradients, row_values
from .models import FittedModels

MAX_CELLS = 10 ** 4


@dataclass(frozen=True, eq=False)
class TabularRewardModel:
    """
    Lookup-table regressor over the contexts of a finite instance.

    Predicts table[x, a] (+ coupling[a] . s when a coupling matrix is given).
    `table` may carry a trailing output axis for vector regressors such as f-hat.
    """
    context_values: np.ndarray
    table: np.ndarray
    coupling: Optional[np.ndarray] = None

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    @property
    def uses_secondary(self) -> bool:
        return self.coupling is not None

    def _index(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        distance = ((contexts[:, None, :] - self.context_values[None, :, :]) ** 2).sum(axis=2)
        index = distance.argmin(axis=1)
        if distance[np.arange(len(index)), index].max() > 1e-18:
            raise ConfigurationError("context not in the instance's support")
        return index

    def predict(self, contexts: np.ndarray, actions: np.ndarray, secondary: Optional[np.ndarray] = None) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        out = self.table[self._index(contexts), actions]
        if self.coupling is not None:
            if secondary is None:
                raise ConfigurationError("this model conditions on secondary rewards")
            out = out + (np.atleast_2d(secondary) * self.coupling[actions]).sum(axis=1)
        return out

    def predict_all(self, contexts: np.ndarray) -> np.ndarray:
        if self.coupling is not None:
            raise ConfigurationError("cannot enumerate actions for a model that conditions on s")
        return self.table[self._index(contexts)]


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    """
    Enumerable bandit problem.

    Attributes:
        contexts: (K, d_x) context values
        context_probs: (K,) p(x)
        logging_probs: (K, A) pi_0(a|x)
        secondary_support: (m, d_s) values s can take
        secondary_probs: (K, A, m) p(s|x, a)
        reward_base: (K, A) reward intercepts
        reward_coupling: (A, d_s), so q(x, a, s) = reward_base[x, a] + reward_coupling[a] . s
        reward_noise: r = q(x, a, s) +/- reward_noise with equal probability
        obs_prob: (K,) p(o=1|x)
    """
    contexts: np.ndarray
    context_probs: np.ndarray
    logging_probs: np.ndarray
    secondary_support: np.ndarray
    secondary_probs: np.ndarray
    reward_base: np.ndarray
    reward_coupling: np.ndarray
    reward_noise: float
    obs_prob: np.ndarray

    @property
    def n_contexts(self) -> int:
        return self.contexts.shape[0]

    @property
    def n_actions(self) -> int:
        return self.logging_probs.shape[1]

    @property
    def dim_context(self) -> int:
        return self.contexts.shape[1]

    @property
    def dim_secondary(self) -> int:
        return self.secondary_support.shape[1]

    @property
    def n_cells(self) -> int:
        return self.n_contexts * self.n_actions * self.secondary_support.shape[0]

    def check_size(self, limit: int = MAX_CELLS) -> None:
        if self.n_cells > limit:
            raise EnumerationLimitError(
                f"{self.n_cells} (context, action, secondary) cells exceed the enumeration limit of {limit}"
            )

    def with_obs_prob(self, obs_prob) -> "FiniteInstance":
        return replace(self, obs_prob=np.broadcast_to(np.asarray(obs_prob, dtype=float), (self.n_contexts,)).copy())

    # ------------------------------------------------------------------
    # ground truth
    # ------------------------------------------------------------------

    def target_table(self) -> np.ndarray:
        """q(x, a, s_j), shape (K, A, m)."""
        coupling = self.reward_coupling @ self.secondary_support.T
        return self.reward_base[:, :, None] + coupling[None, :, :]

    def expected_target(self) -> np.ndarray:
        """q(x, a) = E[r|x, a], shape (K, A)."""
        return (self.secondary_probs * self.target_table()).sum(axis=2)

    def expected_secondary(self) -> np.ndarray:
        """f(x, a) = E[s|x, a], shape (K, A, d_s)."""
        return np.einsum("kaj,jd->kad", self.secondary_probs, self.secondary_support)

    def value_table(self, beta: float = 0.0) -> np.ndarray:
        return (1.0 - beta) * self.expected_target() + beta * self.expected_secondary().sum(axis=2)

    def true_value(self, policy: SoftmaxLinearPolicy, beta: float = 0.0) -> float:
        probs = policy.action_dist(self.contexts)
        return float(self.context_probs @ (probs * self.value_table(beta)).sum(axis=1))

    def _gradient_of(self, policy: SoftmaxLinearPolicy, values: np.ndarray) -> np.ndarray:
        probs = policy.action_dist(self.contexts)
        return policy.score_sum(self.contexts, self.context_probs[:, None] * probs * values, probs)

    def true_gradient(self, policy: SoftmaxLinearPolicy, beta: float = 0.0) -> np.ndarray:
        """Exact gradient of (1 - beta) * V_r + beta * V_s."""
        return self._gradient_of(policy, self.value_table(beta))

    def true_surrogate_gradient(self, policy: SoftmaxLinearPolicy, aggregator: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Exact gradient of E[F(s)] for a linear aggregator F."""
        return self._gradient_of(policy, aggregator(self.expected_secondary()))

    def exact_models(
        self,
        aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        q_xa_offset: float = 0.0,
    ) -> FittedModels:
        """
        Nuisance models equal to the true conditional means, with q-hat(x, a)
        optionally shifted by `q_xa_offset`.
        """
        q_pseudo = None
        if aggregator is not None:
            p = self.obs_prob[:, None]
            pseudo = p * self.expected_target() + (1.0 - p) * aggregator(self.expected_secondary())
            q_pseudo = TabularRewardModel(self.contexts, pseudo)
        return FittedModels(
            q_xa=TabularRewardModel(self.contexts, self.expected_target() + q_xa_offset),
            q_xas=TabularRewardModel(self.contexts, self.reward_base, self.reward_coupling),
            f_hat=TabularRewardModel(self.contexts, self.expected_secondary()),
            q_pseudo=q_pseudo,
        )

    # ------------------------------------------------------------------
    # outcomes
    # ------------------------------------------------------------------

    def outcomes(self) -> Tuple[LoggedDataset, np.ndarray]:
        """
        Every single-row outcome (x, a, s, o, r) with positive probability.

        Returns:
            The outcomes as one dataset, and their probabilities (summing to 1)
        """
        self.check_size()
        n_support = self.secondary_support.shape[0]
        k, a, j, o, sign = (
            idx.ravel() for idx in np.indices((self.n_contexts, self.n_actions, n_support, 2, 2))
        )
        obs = self.obs_prob[k]
        probs = (
            self.context_probs[k]
            * self.logging_probs[k, a]
            * self.secondary_probs[k, a, j]
            * np.where(o == 1, obs, 1.0 - obs)
            * 0.5
        )
        keep = probs > 0.0
        k, a, j, o, sign, probs = k[keep], a[keep], j[keep], o[keep], sign[keep], probs[keep]
        target = self.target_table()[k, a, j] + np.where(sign == 1, 1.0, -1.0) * self.reward_noise
        data = LoggedDataset(
            contexts=self.contexts[k],
            actions=a,
            obs_flags=o,
            secondary=self.secondary_support[j],
            target=target,
            obs_prob=self.obs_prob[k],
            pscore=self.logging_probs[k, a],
            n_actions=self.n_actions,
        )
        return data, probs

    def resample(self, n_rows: int, rng: np.random.Generator) -> LoggedDataset:
        """Dataset of `n_rows` i.i.d. draws from the outcome distribution."""
        if n_rows <= 0:
            raise ConfigurationError("n_rows must be positive")
        data, probs = self.outcomes()
        return data.take(rng.choice(len(probs), size=n_rows, p=probs / probs.sum()))


def default_instance(seed: int = 0, obs_prob: float = 0.2) -> FiniteInstance:
    """
    Five one-hot contexts, three actions, a two-point secondary vector in two
    dimensions and constant observation probability.
    """
    rng = make_rng(seed, Stream.ENVIRONMENT)
    n_contexts, n_actions = 5, 3
    dirichlet = rng.dirichlet(np.full(n_actions, 2.0), size=n_contexts)
    split = rng.uniform(0.2, 0.8, size=(n_contexts, n_actions))
    return FiniteInstance(
        contexts=np.eye(n_contexts),
        context_probs=np.full(n_contexts, 1.0 / n_contexts),
        logging_probs=0.5 * dirichlet + 0.5 / n_actions,
        secondary_support=np.array([[1.0, -0.5], [-0.5, 1.0]]),
        secondary_probs=np.stack([split, 1.0 - split], axis=2),
        reward_base=rng.uniform(-1.0, 1.0, size=(n_contexts, n_actions)),
        reward_coupling=rng.uniform(-1.0, 1.0, size=(n_actions, 2)),
        reward_noise=0.5,
        obs_prob=np.full(n_contexts, obs_prob),
    )


# ============================================================================
# EXACT MOMENTS
# ============================================================================

def exact_moments(
    instance: FiniteInstance,
    config: EstimatorConfig,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact mean and variance of a single-row gradient estimate.

    The variance of the estimate on n i.i.d. rows is this variance over n.
    """
    data, probs = instance.outcomes()
    rows = row_gradients(config, data, policy, models, aggregator)
    mean = probs @ rows
    return mean, probs @ (rows - mean) ** 2


def exact_value_moments(
    instance: FiniteInstance,
    config: EstimatorConfig,
    policy: SoftmaxLinearPolicy,
    models: Optional[FittedModels] = None,
    aggregator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[float, float]:
    data, probs = instance.outcomes()
    rows = row_values(config, data, policy, models, aggregator)
    mean = float(probs @ rows)
    return mean, float(probs @ (rows - mean) ** 2)


@dataclass(frozen=True)
class VarianceGap:
    """
    Per-coordinate n * (Var[r-DR] - Var[HyPeR target estimator]).

    Attributes:
        theorem_term: E[(1 - p)/p * w^2 g^2 ((q(x,a,s) - q-hat(x,a))^2 - (q(x,a,s) - q-hat(x,a,s))^2)]
        direct_term: extra gap from scaling the direct term E_pi[q-hat g] by o/p
        total: exact gap of the estimator pair being compared
    """
    theorem_term: np.ndarray
    direct_term: np.ndarray
    total: np.ndarray


def variance_difference_oracle(
    instance: FiniteInstance,
    policy: SoftmaxLinearPolicy,
    models: FittedModels,
    scale_direct_term: bool = True,
) -> VarianceGap:
    """
    Exact variance gap between r-DR and the HyPeR target estimator.

    Both estimators have the same conditional mean given (x, a, s, r), so
    the gap is the expected difference of their conditional variances over
    o ~ Bernoulli(p(o|x)), summed over every (x, a, s) cell.

    Args:
        instance: enumerable instance supplying the true q and p(o|x)
        policy: policy at which the gradients are taken
        models: bundle with q_xa and q_xas
        scale_direct_term: True compares against r-DR with the direct term
            inside the o/p factor; False against the variant with it outside,
            for which `total` equals `theorem_term`

    Raises:
        EnumerationLimitError: if the instance has too many cells
    """
    instance.check_size()
    contexts = instance.contexts
    n_contexts, n_actions = instance.n_contexts, instance.n_actions
    n_support = instance.secondary_support.shape[0]

    probs = policy.action_dist(contexts)
    weights = probs / instance.logging_probs
    eye = np.eye(n_actions)
    scores = np.stack(
        [policy.row_scores(contexts, np.tile(eye[a], (n_contexts, 1)), probs) for a in range(n_actions)],
        axis=1,
    )

    q_true = instance.target_table()
    q_hat = models.q_xa.predict_all(contexts)
    k, a, j = (idx.ravel() for idx in np.indices((n_contexts, n_actions, n_support)))
    q_hat_s = models.q_xas.predict(contexts[k], a, instance.secondary_support[j]).reshape(q_true.shape)

    cell_weight = (
        instance.context_probs[:, None, None] * instance.logging_probs[:, :, None] * instance.secondary_probs
    )
    factor = cell_weight * ((1.0 - instance.obs_prob) / instance.obs_prob)[:, None, None]
    direct = np.einsum("ka,kap->kp", probs * q_hat, scores)

    gap = (q_true - q_hat[:, :, None]) ** 2 - (q_true - q_hat_s) ** 2
    theorem = np.einsum("kaj,kap->p", factor * (weights ** 2)[:, :, None] * gap, scores ** 2)
    correction = np.einsum("kaj,kp->p", factor, direct ** 2) + 2.0 * np.einsum(
        "kaj,kp,kap->p", factor * weights[:, :, None] * (q_true - q_hat[:, :, None]), direct, scores
    )
    total = theorem + correction if scale_direct_term else theorem
    return VarianceGap(theorem_term=theorem, direct_term=correction, total=total)
