"""
Data-driven selection of the HyPeR mixture weight gamma

The logged data is split into training and validation parts. For every
gamma on a grid a policy is trained on bootstrap replicates of the training
part (each as large as the full dataset) and scored on the validation part
with the unbiased combined-value estimate at the true objective weight beta.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import config

from .core import LoggedDataset, Stream, derive_seed, make_rng
from .errors import ConfigurationError, OPLError, TuningError
from .estimators import EstimatorConfig, EstimatorKind, value_estimate
from .models import FittedModels, fit_models, fit_obs_model
from .tracing import observe
from .trainer import TrainerConfig, train_policy

logger = logging.getLogger(__name__)


class TunerConfig(BaseModel):
    """
    Attributes:
        grid: candidate gamma values, each in [0, 1]
        split_ratio: fraction of rows used for training
        n_boot: bootstrap replicates per gamma
        ridge: ridge penalty for every nuisance fit
        n_jobs: joblib workers over replicates
    """
    model_config = ConfigDict(frozen=True)

    grid: List[float] = Field(default_factory=lambda: list(config.GAMMA_GRID), min_length=1)
    split_ratio: float = Field(default=config.SPLIT_RATIO, gt=0.0, lt=1.0)
    n_boot: int = Field(default=config.N_BOOT, ge=1)
    ridge: float = Field(default=config.RIDGE_LAMBDA, gt=0.0)
    n_jobs: int = config.N_JOBS

    @field_validator("grid")
    @classmethod
    def _grid_in_unit_interval(cls, grid: List[float]) -> List[float]:
        if any(not 0.0 <= g <= 1.0 for g in grid):
            raise ValueError("every gamma on the grid must lie in [0, 1]")
        return grid


@dataclass(frozen=True, eq=False)
class TuningResult:
    """
    Attributes:
        gamma_hat: selected gamma, an element of the grid
        table: one row per (gamma, replicate) with the validation value
    """
    gamma_hat: float
    table: pd.DataFrame

    @property
    def mean_values(self) -> Dict[float, float]:
        """Replicate-mean validation value per gamma."""
        return self.table.groupby("gamma", sort=False)["value"].mean().to_dict()


# ============================================================================
# RESAMPLING
# ============================================================================

def split_dataset(data: LoggedDataset, split_ratio: float, seed: int) -> Tuple[LoggedDataset, LoggedDataset]:
    """Seeded row-wise split into (train, validation), both non-empty."""
    if not 0.0 < split_ratio < 1.0:
        raise ConfigurationError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    if len(data) < 2:
        raise ConfigurationError("need at least two rows to split")
    order = make_rng(seed, Stream.SPLIT).permutation(len(data))
    n_train = min(max(int(round(split_ratio * len(data))), 1), len(data) - 1)
    return data.take(np.sort(order[:n_train])), data.take(np.sort(order[n_train:]))


def bootstrap_resample(data: LoggedDataset, n: int, seed: int) -> LoggedDataset:
    """
    `n` rows drawn i.i.d. with replacement, each row tuple kept intact.

    Raises:
        ConfigurationError: if n <= 0
    """
    if n <= 0:
        raise ConfigurationError(f"bootstrap size must be positive, got {n}")
    rng = make_rng(seed, Stream.BOOTSTRAP)
    return data.take(rng.integers(0, len(data), size=n))


# ============================================================================
# TUNING
# ============================================================================

def _replicate_values(
    replicate: int,
    train: LoggedDataset,
    validation: LoggedDataset,
    validation_models: FittedModels,
    grid: List[float],
    beta: float,
    trainer: TrainerConfig,
    ridge: float,
) -> List[float]:
    gamma = None
    try:
        models = fit_models(train, ridge)
        values = []
        for gamma in grid:
            estimator = EstimatorConfig(kind=EstimatorKind.HYPER, gamma=gamma, beta=beta)
            policy = train_policy(train, estimator, trainer, models).policy
            values.append(value_estimate(validation, policy, validation_models, beta))
        return values
    except OPLError as e:
        raise TuningError(
            f"tuning failed at gamma={gamma}, replicate={replicate}: {e}", gamma=gamma, replicate=replicate
        ) from e


def select_gamma(grid: List[float], values: List[float], beta: float) -> float:
    """Argmax of `values`; ties go to the gamma closest to beta, then the smaller gamma."""
    values = np.asarray(values, dtype=float)
    best = values.max()
    tied = [g for g, v in zip(grid, values) if np.isclose(v, best, rtol=1e-12, atol=1e-12)]
    return float(min(tied, key=lambda g: (abs(g - beta), g)))


def _tune(
    beta: float,
    replicates: List[LoggedDataset],
    validation: LoggedDataset,
    validation_models: FittedModels,
    tuner: TunerConfig,
    trainer: TrainerConfig,
) -> TuningResult:
    jobs = (
        delayed(_replicate_values)(
            b, train, validation, validation_models, tuner.grid, beta, trainer, tuner.ridge
        )
        for b, train in enumerate(replicates)
    )
    # results come back in submission order, so serial and parallel runs agree
    per_replicate = Parallel(n_jobs=tuner.n_jobs)(jobs)

    table = pd.DataFrame(
        [
            {"gamma": gamma, "replicate": b, "value": values[i]}
            for b, values in enumerate(per_replicate)
            for i, gamma in enumerate(tuner.grid)
        ]
    )
    means = [float(np.mean([values[i] for values in per_replicate])) for i in range(len(tuner.grid))]
    gamma_hat = select_gamma(tuner.grid, means, beta)
    logger.info("tuned gamma=%.2f for beta=%.2f over %d replicates", gamma_hat, beta, len(replicates))
    return TuningResult(gamma_hat=gamma_hat, table=table)


def _prepare(
    data: LoggedDataset,
    beta: float,
    tuner: TunerConfig,
    seed: int,
    estimate_obs: bool,
) -> Tuple[LoggedDataset, LoggedDataset, FittedModels]:
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError(f"beta must lie in [0, 1], got {beta}")
    train, validation = split_dataset(data, tuner.split_ratio, seed)
    if estimate_obs:
        # p(o|x) for both parts comes from the training part only
        obs_model = fit_obs_model(train)
        train = train.with_obs_prob(obs_model.predict(train.contexts))
        validation = validation.with_obs_prob(obs_model.predict(validation.contexts))
    return train, validation, fit_models(train, tuner.ridge)


@observe(name="tune_gamma")
def tune_gamma(
    data: LoggedDataset,
    beta: float,
    tuner: Optional[TunerConfig] = None,
    trainer: Optional[TrainerConfig] = None,
    seed: int = 0,
    estimate_obs: bool = False,
) -> TuningResult:
    """
    Select gamma by bootstrap-augmented train/validation tuning.

    The same `n_boot` replicates of the training part are shared by every
    gamma on the grid. Validation nuisances are fitted on the training part.

    Args:
        data: full logged dataset
        beta: weight of the secondary value in the true objective
        tuner: grid, split ratio and replicate count
        trainer: gradient-ascent settings for every inner training run
        seed: master seed for the split and the replicates
        estimate_obs: refit p(o|x) on the training part for both parts

    Returns:
        TuningResult with the selected gamma and the per-replicate table

    Raises:
        TuningError: naming the gamma and replicate of a failed training run
    """
    tuner = tuner or TunerConfig()
    trainer = trainer or TrainerConfig()
    train, validation, validation_models = _prepare(data, beta, tuner, seed, estimate_obs)
    replicates = [
        bootstrap_resample(train, len(data), derive_seed(seed, Stream.BOOTSTRAP, b)) for b in range(tuner.n_boot)
    ]
    return _tune(beta, replicates, validation, validation_models, tuner, trainer)


@observe(name="tune_gamma_no_replacement")
def tune_gamma_no_replacement(
    data: LoggedDataset,
    beta: float,
    tuner: Optional[TunerConfig] = None,
    trainer: Optional[TrainerConfig] = None,
    seed: int = 0,
    estimate_obs: bool = False,
) -> TuningResult:
    """Same pipeline as `tune_gamma` but trains once on the training part itself."""
    tuner = tuner or TunerConfig()
    trainer = trainer or TrainerConfig()
    train, validation, validation_models = _prepare(data, beta, tuner, seed, estimate_obs)
    return _tune(beta, [train], validation, validation_models, tuner, trainer)
