"""
Policy-learning methods compared in a sweep

Each method maps one simulation's shared inputs (data, nuisance models,
surrogate, evaluation tables) to a learned policy and, for the HyPeR
variants that pick a weight, the selected gamma.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

from opl.core import EvaluationTables, LoggedDataset, Policy
from opl.estimators import EstimatorConfig, EstimatorKind, SurrogateAggregator
from opl.models import FittedModels
from opl.trainer import DirectMethodMode, TrainerConfig, direct_method_policy, train_policy
from opl.tuner import TunerConfig, select_gamma, tune_gamma, tune_gamma_no_replacement


@dataclass
class SimulationContext:
    """Inputs shared by every method within one simulation"""
    data: LoggedDataset
    models: FittedModels
    aggregator: SurrogateAggregator
    evaluation: EvaluationTables
    beta: float
    trainer: TrainerConfig
    tuner: TunerConfig
    seed: int
    estimate_obs: bool = False
    _policies: Dict[Tuple[str, float], Policy] = field(default_factory=dict)

    def train(self, kind: EstimatorKind, gamma: float = 0.0) -> Policy:
        """Train once per (estimator, gamma) and reuse across methods."""
        key = (kind.value, float(gamma))
        if key not in self._policies:
            estimator = EstimatorConfig(kind=kind, gamma=gamma, beta=self.beta)
            self._policies[key] = train_policy(
                self.data, estimator, self.trainer, self.models, self.aggregator
            ).policy
        return self._policies[key]


@dataclass(frozen=True)
class MethodOutcome:
    policy: Policy
    gamma: Optional[float] = None


def _estimator_method(kind: EstimatorKind) -> Callable[[SimulationContext], MethodOutcome]:
    def run(ctx: SimulationContext) -> MethodOutcome:
        return MethodOutcome(ctx.train(kind))
    return run


def _direct_method(mode: DirectMethodMode) -> Callable[[SimulationContext], MethodOutcome]:
    def run(ctx: SimulationContext) -> MethodOutcome:
        return MethodOutcome(direct_method_policy(ctx.models, mode, ctx.aggregator))
    return run


def hyper_zero(ctx: SimulationContext) -> MethodOutcome:
    return MethodOutcome(ctx.train(EstimatorKind.HYPER, 0.0), gamma=0.0)


def hyper_beta(ctx: SimulationContext) -> MethodOutcome:
    return MethodOutcome(ctx.train(EstimatorKind.HYPER, ctx.beta), gamma=ctx.beta)


def hyper_tuned(ctx: SimulationContext) -> MethodOutcome:
    result = tune_gamma(ctx.data, ctx.beta, ctx.tuner, ctx.trainer, ctx.seed, ctx.estimate_obs)
    return MethodOutcome(ctx.train(EstimatorKind.HYPER, result.gamma_hat), gamma=result.gamma_hat)


def hyper_tuned_without_replacement(ctx: SimulationContext) -> MethodOutcome:
    result = tune_gamma_no_replacement(ctx.data, ctx.beta, ctx.tuner, ctx.trainer, ctx.seed, ctx.estimate_obs)
    return MethodOutcome(ctx.train(EstimatorKind.HYPER, result.gamma_hat), gamma=result.gamma_hat)


def hyper_optimal(ctx: SimulationContext) -> MethodOutcome:
    """Skyline: the grid gamma whose policy has the best TRUE combined value."""
    grid = ctx.tuner.grid
    values = [ctx.evaluation.values(ctx.train(EstimatorKind.HYPER, g)).combined for g in grid]
    gamma = select_gamma(grid, values, ctx.beta)
    return MethodOutcome(ctx.train(EstimatorKind.HYPER, gamma), gamma=gamma)


METHODS: Dict[str, Callable[[SimulationContext], MethodOutcome]] = {
    "r-ips": _estimator_method(EstimatorKind.R_IPS),
    "r-dr": _estimator_method(EstimatorKind.R_DR),
    "s-ips": _estimator_method(EstimatorKind.S_IPS),
    "s-dr": _estimator_method(EstimatorKind.S_DR),
    "r-dm": _direct_method(DirectMethodMode.R_DM),
    "s-dm": _direct_method(DirectMethodMode.S_DM),
    "dr-fsr": _estimator_method(EstimatorKind.DR_FSR),
    "hyper-0": hyper_zero,
    "hyper-beta": hyper_beta,
    "hyper-tuned": hyper_tuned,
    "hyper-tuned-wo": hyper_tuned_without_replacement,
    "hyper-optimal": hyper_optimal,
    # fully observed diagnostics
    "ips": _estimator_method(EstimatorKind.IPS),
    "dr": _estimator_method(EstimatorKind.DR),
}

DEFAULT_METHODS = ["r-dr", "s-dr", "hyper-0", "hyper-beta"]
