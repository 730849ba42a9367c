"""
Parameter sweeps over repeated off-policy learning simulations

One job is one (axis value, simulation). Inside a job every method sees
the same logged data, nuisance models, surrogate and evaluation contexts,
so methods are compared pairwise. Failures never abort the sweep: the
affected (axis value, method, sim) tuples become error rows.
"""

import logging
from functools import lru_cache
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import config
from opl.core import EvaluationTables, LoggedDataset, derive_seed
from opl.errors import ConfigurationError
from opl.estimators import SurrogateAggregator
from opl.models import estimate_obs_prob, fit_models
from opl.realdata import InteractionMatrix, load_matrix, make_opl_problem
from opl.synth import EnvironmentSpec, build_environment, sample_dataset, surrogate_aggregator, synthetic_evaluation
from opl.tracing import observe, tag_current_span
from opl.trainer import TrainerConfig
from opl.tuner import TunerConfig

from .methods import DEFAULT_METHODS, METHODS, SimulationContext
from .metrics import ALL_METRICS, score_report

logger = logging.getLogger(__name__)

INT_AXES = {"n", "n_actions"}
FLOAT_AXES = {"obs_prob", "lam", "beta", "sigma_s", "sigma_r", "sigma_o", "temperature", "sigma_f"}
ROW_COLUMNS = ["axis", "method", "sim", "seed", *ALL_METRICS, "error"]

# Per-environment defaults for knobs left unset
ENVIRONMENT_DEFAULTS = {
    "synthetic": {"n": 2000, "n_actions": 10},
    "kuairec": {"n": 1000, "n_actions": 100},
}


class SweepConfig(BaseModel):
    """
    Every knob of a sweep. Unset `n`/`n_actions` take the environment's
    default; all other defaults come from config.Config.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    environment: Literal["synthetic", "kuairec"] = "synthetic"
    axis: str = "obs_prob"
    values: List[float] = Field(default_factory=lambda: [0.2], min_length=1)
    methods: List[str] = Field(default_factory=lambda: list(DEFAULT_METHODS), min_length=1)
    n_sims: int = Field(default=100, ge=1)
    seed: int

    # Environment and problem
    n: Optional[int] = Field(default=None, ge=1)
    n_actions: Optional[int] = Field(default=None, ge=2)
    dim_context: int = Field(default=10, ge=1)
    dim_secondary: int = Field(default=5, ge=1)
    lam: float = Field(default=0.7, ge=0.0, le=1.0)
    temperature: float = -2.0
    sigma_s: float = Field(default=0.5, ge=0.0)
    sigma_r: float = Field(default=0.5, ge=0.0)
    obs_prob: float = Field(default=0.2, gt=0.0, le=1.0)
    beta: float = Field(default=0.3, ge=0.0, le=1.0)
    sigma_o: Optional[float] = Field(default=None, ge=0.0)
    sigma_f: float = Field(default=config.SIGMA_F, ge=0.0)
    theta_o_scale: float = Field(default=config.THETA_O_SCALE, ge=0.0)
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    data_path: str = config.FIXTURE_DIR
    estimate_obs_prob: bool = False

    # Learning
    ridge: float = Field(default=config.RIDGE_LAMBDA, gt=0.0)
    step_size: float = Field(default=config.STEP_SIZE, ge=0.0)
    iterations: int = Field(default=config.ITERATIONS, ge=0)
    gamma_grid: List[float] = Field(default_factory=lambda: list(config.GAMMA_GRID), min_length=1)
    split_ratio: float = Field(default=config.SPLIT_RATIO, gt=0.0, lt=1.0)
    n_boot: int = Field(default=config.N_BOOT, ge=1)

    # Evaluation and execution
    n_eval_contexts: int = Field(default=config.N_EVAL_CONTEXTS, ge=1)
    n_boot_ci: int = Field(default=config.N_BOOT_CI, ge=1)
    n_jobs: int = config.N_JOBS

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: List[str]) -> List[str]:
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
        if len(set(methods)) != len(methods):
            raise ValueError("methods must not repeat")
        return methods

    @field_validator("axis")
    @classmethod
    def _known_axis(cls, axis: str) -> str:
        if axis not in INT_AXES | FLOAT_AXES:
            raise ValueError(f"unknown axis '{axis}'; choose from {sorted(INT_AXES | FLOAT_AXES)}")
        return axis

    @model_validator(mode="before")
    @classmethod
    def _fill_environment_defaults(cls, data):
        if isinstance(data, dict):
            defaults = ENVIRONMENT_DEFAULTS.get(data.get("environment", "synthetic"), {})
            data = {**data, **{k: v for k, v in defaults.items() if data.get(k) is None}}
        return data

    def at(self, value: float) -> "SweepConfig":
        """This config with the swept knob set to `value` (validated)."""
        value = int(value) if self.axis in INT_AXES else float(value)
        return SweepConfig.model_validate({**self.model_dump(), self.axis: value})

    @property
    def trainer(self) -> TrainerConfig:
        return TrainerConfig(step_size=self.step_size, iterations=self.iterations, seed=self.seed)

    @property
    def tuner(self) -> TunerConfig:
        # nested workers are avoided: sweep jobs already run in parallel
        return TunerConfig(
            grid=self.gamma_grid, split_ratio=self.split_ratio, n_boot=self.n_boot, ridge=self.ridge, n_jobs=1
        )

    @property
    def uses_estimated_obs(self) -> bool:
        return self.estimate_obs_prob or self.sigma_o is not None


# ============================================================================
# PROBLEM CONSTRUCTION
# ============================================================================

@lru_cache(maxsize=4)
def _cached_matrix(path: str) -> InteractionMatrix:
    return load_matrix(path)


def _synthetic_problem(cfg: SweepConfig, seed: int) -> Tuple[LoggedDataset, SurrogateAggregator, EvaluationTables]:
    env = build_environment(
        EnvironmentSpec(
            seed=seed, dim_context=cfg.dim_context, n_actions=cfg.n_actions, dim_secondary=cfg.dim_secondary,
            lam=cfg.lam, temperature=cfg.temperature, sigma_s=cfg.sigma_s, sigma_r=cfg.sigma_r,
            obs_prob=cfg.obs_prob, beta=cfg.beta, sigma_o=cfg.sigma_o, theta_o_scale=cfg.theta_o_scale,
        )
    )
    data = sample_dataset(env, cfg.n, seed)
    aggregator = surrogate_aggregator(env, cfg.sigma_f, seed)
    return data, aggregator, synthetic_evaluation(env, cfg.n_eval_contexts, seed)


def _kuairec_problem(cfg: SweepConfig, seed: int) -> Tuple[LoggedDataset, SurrogateAggregator, EvaluationTables]:
    problem = make_opl_problem(
        _cached_matrix(cfg.data_path),
        n_actions=cfg.n_actions,
        n=cfg.n,
        obs_prob=cfg.obs_prob,
        temperature=cfg.temperature,
        train_fraction=cfg.train_fraction,
        seed=seed,
        beta=cfg.beta,
    )
    return problem.data, problem.aggregator, problem.evaluation


PROBLEM_BUILDERS: Dict[str, Callable[[SweepConfig, int], Tuple[LoggedDataset, SurrogateAggregator, EvaluationTables]]] = {
    "synthetic": _synthetic_problem,
    "kuairec": _kuairec_problem,
}


def build_context(cfg: SweepConfig, seed: int) -> SimulationContext:
    """Data, nuisance models and evaluation tables shared by every method of one simulation."""
    data, aggregator, evaluation = PROBLEM_BUILDERS[cfg.environment](cfg, seed)
    if cfg.uses_estimated_obs:
        data = estimate_obs_prob(data)
    models = fit_models(data, cfg.ridge, aggregator)
    return SimulationContext(
        data=data,
        models=models,
        aggregator=aggregator,
        evaluation=evaluation,
        beta=cfg.beta,
        trainer=cfg.trainer,
        tuner=cfg.tuner,
        seed=seed,
        estimate_obs=cfg.uses_estimated_obs,
    )


# ============================================================================
# SIMULATION JOBS
# ============================================================================

def _row(value: float, method: str, sim: int, seed: int, metrics: Optional[Dict[str, float]] = None, error: str = "") -> Dict:
    row = {"axis": value, "method": method, "sim": sim, "seed": seed}
    row.update(metrics or {name: np.nan for name in ALL_METRICS})
    row["error"] = error
    return row


def _describe(e: Exception) -> str:
    return f"{type(e).__name__}: {e}"


@observe(name="simulation")
def run_simulation(cfg: SweepConfig, value: float, sim: int) -> List[Dict]:
    """
    Rows for every method at one axis value and simulation index.

    The simulation seed depends on (master seed, sim) only, so every axis
    value of a sim reuses the same random draws.
    """
    seed = derive_seed(cfg.seed, sim)
    tag_current_span({"axis": cfg.axis, "value": value, "sim": sim, "seed": seed})
    try:
        ctx = build_context(cfg.at(value), seed)
    except Exception as e:
        logger.warning("sim %d at %s=%s failed during setup: %s", sim, cfg.axis, value, e)
        return [_row(value, method, sim, seed, error=_describe(e)) for method in cfg.methods]

    rows = []
    for method in cfg.methods:
        try:
            outcome = METHODS[method](ctx)
            metrics = score_report(ctx.evaluation.report(outcome.policy), outcome.gamma)
            rows.append(_row(value, method, sim, seed, metrics))
        except Exception as e:
            logger.warning("method %s failed in sim %d at %s=%s: %s", method, sim, cfg.axis, value, e)
            rows.append(_row(value, method, sim, seed, error=_describe(e)))
    return rows


def sweep_jobs(cfg: SweepConfig) -> List[Tuple[float, int]]:
    return [(value, sim) for value in cfg.values for sim in range(cfg.n_sims)]


def run_sweep(cfg: SweepConfig, on_job_done: Optional[Callable[[], None]] = None) -> pd.DataFrame:
    """
    Run every (axis value, sim) job and collect one row per (value, method, sim).

    Args:
        cfg: sweep configuration with a master seed
        on_job_done: called once per finished job, for progress reporting

    Returns:
        DataFrame with columns ROW_COLUMNS; rows with a non-empty `error`
        carry NaN metrics

    Raises:
        ConfigurationError: if the kuairec input cannot be loaded at all
    """
    if cfg.environment == "kuairec":
        try:
            _cached_matrix(cfg.data_path)
        except Exception as e:
            raise ConfigurationError(f"cannot load interaction data from {cfg.data_path}: {e}") from e

    jobs = sweep_jobs(cfg)
    logger.info(
        "sweeping %s over %s with %d methods x %d sims (%d jobs, n_jobs=%d)",
        cfg.axis, cfg.values, len(cfg.methods), cfg.n_sims, len(jobs), cfg.n_jobs,
    )
    results = Parallel(n_jobs=cfg.n_jobs, return_as="generator")(
        delayed(run_simulation)(cfg, value, sim) for value, sim in jobs
    )
    rows: List[Dict] = []
    # the generator yields in submission order, so serial and parallel runs agree
    for job_rows in results:
        rows.extend(job_rows)
        if on_job_done is not None:
            on_job_done()

    table = pd.DataFrame(rows, columns=ROW_COLUMNS)
    n_errors = int((table["error"] != "").sum())
    if n_errors:
        logger.warning("%d of %d rows are error rows", n_errors, len(table))
    return table


def error_rows(rows: pd.DataFrame) -> pd.DataFrame:
    return rows[rows["error"].fillna("") != ""]
