"""
Shared fixtures and helpers for the test suite
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pytest
from hypothesis import settings
from scipy.special import softmax

# Add parent directory to path to import config, opl and evaluation
sys.path.insert(0, str(Path(__file__).parent.parent))

from opl.core import LoggedDataset, SoftmaxLinearPolicy, sample_actions  # noqa: E402

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=5, deadline=None)
settings.load_profile("default")

np.seterr(all="warn")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance protocols")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance protocol (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ============================================================================
# HELPER MODELS
# ============================================================================

@dataclass(frozen=True)
class ConstantModel:
    """Predicts `value` everywhere; `dim` adds a trailing output axis like f-hat."""
    value: float
    n_actions: int
    dim: Optional[int] = None

    def _shape(self, *lead):
        return lead if self.dim is None else (*lead, self.dim)

    def predict(self, contexts, actions, secondary=None):
        return np.full(self._shape(len(np.atleast_2d(contexts))), self.value)

    def predict_all(self, contexts):
        return np.full(self._shape(len(np.atleast_2d(contexts)), self.n_actions), self.value)


@dataclass(frozen=True)
class IgnoreSecondary:
    """q-hat(x, a, s) := q-hat(x, a) for a wrapped (x, a) model."""
    base: object

    @property
    def n_actions(self) -> int:
        return self.base.n_actions

    def predict(self, contexts, actions, secondary=None):
        return self.base.predict(contexts, actions)


@dataclass(frozen=True)
class SurrogateOfF:
    """(x, a) model predicting F(f-hat(x, a))."""
    f_hat: object
    aggregator: object

    @property
    def n_actions(self) -> int:
        return self.f_hat.n_actions

    def predict_all(self, contexts):
        predicted = self.f_hat.predict_all(contexts)
        return self.aggregator(predicted.reshape(predicted.shape[0], self.n_actions, -1))


# ============================================================================
# RANDOM PROBLEMS
# ============================================================================

def random_policy(rng: np.random.Generator, dim_context: int, n_actions: int, scale: float = 0.5) -> SoftmaxLinearPolicy:
    return SoftmaxLinearPolicy(scale * rng.standard_normal(n_actions * (dim_context + 1)), dim_context, n_actions)


def random_dataset(
    rng: np.random.Generator,
    n: int = 40,
    dim_context: int = 3,
    n_actions: int = 4,
    dim_secondary: int = 2,
    obs_rate: Optional[float] = 0.5,
) -> LoggedDataset:
    """
    Random logged data with a softmax logging policy. `obs_rate=None` gives
    a fully observed dataset with obs_prob = 1.
    """
    contexts = rng.standard_normal((n, dim_context))
    logging = softmax(contexts @ rng.standard_normal((dim_context, n_actions)), axis=1)
    actions = sample_actions(logging, rng)
    if obs_rate is None:
        obs_flags, obs_prob = np.ones(n, dtype=int), np.ones(n)
    else:
        obs_prob = rng.uniform(0.2, 0.9, size=n)
        obs_flags = (rng.random(n) < obs_rate).astype(int)
    return LoggedDataset(
        contexts=contexts,
        actions=actions,
        obs_flags=obs_flags,
        secondary=rng.standard_normal((n, dim_secondary)),
        target=rng.standard_normal(n),
        obs_prob=obs_prob,
        pscore=logging[np.arange(n), actions],
        n_actions=n_actions,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
