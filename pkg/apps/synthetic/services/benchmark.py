# apps/synthetic/services/benchmark.py
"""
합성 월드에서 전 과정 검증: simulate → fit → optimize → compare.

비교는 항상 참 모델(ground truth) 기준 + 같은 참 모델에 대한 격자 오라클 대비 regret.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from apps.allocation.conf import OptimizerConfig
from apps.allocation.services.baselines import baseline_allocation
from apps.allocation.services.optimizer import optimize_allocation
from apps.allocation.services.oracle import GridOracleResult, grid_oracle
from apps.fitting.conf import FitConfig
from apps.fitting.domain import PipelineResult
from apps.fitting.services.pipeline import fit_climb_model
from apps.mixture.concurrency import ordered_map
from apps.mixture.domain import (
    AllocationResult, ClimbModel, ImportanceWeights, ProportionVector,
)
from apps.mixture.exceptions import ClimbError, NonPositiveEffectiveRatio, StageError
from apps.scaling.services.law import effective_ratio_curve, predicted_loss, weighted_objective

from ..conf import BENCHMARK_BUDGET, BENCHMARK_RESOLUTION, RECOVERY_FLOORS
from .simulate import ExperimentDesign, simulate_experiments
from .world import WorldRanges, WorldSpec, sample_world

log = logging.getLogger(__name__)

STRATEGIES = ("climb", "uniform", "isolated", "natural")


@dataclass(frozen=True)
class StrategyOutcome:
    name: str
    allocation: ProportionVector
    weighted_loss: Optional[float]      # 참 모델 기준, 정의 불가면 None
    regret: Optional[float]             # (loss − oracle) / oracle


@dataclass(frozen=True)
class RecoveryErrors:
    """최대 상대오차. b̄, k̄ 는 대상 언어별 소스 평균 (균등 분배 설계로 식별되는 양)."""
    B: float
    beta: float
    E: float
    b_bar: float
    k_bar: float
    eta: float

    @property
    def worst(self) -> float:
        return max(self.B, self.beta, self.E, self.b_bar, self.k_bar, self.eta)

    def as_dict(self) -> Dict[str, float]:
        return {"B": self.B, "beta": self.beta, "E": self.E,
                "b_bar": self.b_bar, "k_bar": self.k_bar, "eta": self.eta}


@dataclass(frozen=True)
class ComparisonReport:
    strategies: Tuple[StrategyOutcome, ...]
    oracle: GridOracleResult
    token_budget: int
    resolution: float
    recovery: Optional[RecoveryErrors] = None
    fit_r_squared: Optional[float] = None
    # 같은 단일언어 적합에서 전이를 뺀 모델의 R²
    isolated_r_squared: Optional[float] = None

    def outcome(self, name: str) -> StrategyOutcome:
        for s in self.strategies:
            if s.name == name:
                return s
        raise KeyError(name)


def _off_diagonal_mean(mat: np.ndarray) -> np.ndarray:
    m = mat.shape[0]
    if m < 2:
        return np.zeros(m)
    return (mat.sum(axis=1) - np.diag(mat)) / (m - 1)


def _max_rel(truth: np.ndarray, est: np.ndarray, floor: float) -> float:
    if truth.size == 0:
        return 0.0
    denom = np.maximum(np.abs(truth), floor)
    denom = np.where(denom > 0, denom, 1.0)
    return float(np.max(np.abs(est - truth) / denom))


def recovery_errors(truth: ClimbModel, recovered: ClimbModel,
                    eta_identifiable: Optional[Sequence[bool]] = None,
                    floors: Optional[Mapping[str, float]] = None) -> RecoveryErrors:
    """floors: 상대오차 분모 하한 (기본 RECOVERY_FLOORS, 일부 키만 덮어쓰기 가능)."""
    floor = {**RECOVERY_FLOORS, **(floors or {})}
    if truth.languages != recovered.languages:
        raise ClimbError("recovery needs models over the same languages")
    tB, tbeta, tE = truth.mono_arrays()
    rB, rbeta, rE = recovered.mono_arrays()
    tt, rt = truth.transfer, recovered.transfer
    mask = np.ones(truth.m, dtype=bool) if eta_identifiable is None else np.asarray(eta_identifiable, dtype=bool)
    return RecoveryErrors(
        B=_max_rel(tB, rB, floor["B"]),
        beta=_max_rel(tbeta, rbeta, floor["beta"]),
        E=_max_rel(tE, rE, floor["E"]),
        b_bar=_max_rel(_off_diagonal_mean(tt.b_array()), _off_diagonal_mean(rt.b_array()), floor["b_bar"]),
        k_bar=_max_rel(_off_diagonal_mean(tt.k_array()), _off_diagonal_mean(rt.k_array()), floor["k_bar"]),
        eta=_max_rel(tt.eta_array()[mask], rt.eta_array()[mask], floor["eta"]),
    )


def _ground_truth_loss(truth: ClimbModel, weights: ImportanceWeights, mixture: ProportionVector,
                       token_budget: float) -> Optional[float]:
    try:
        return weighted_objective(truth, weights, mixture, token_budget)
    except NonPositiveEffectiveRatio:
        return None


def compare_strategies(truth: ClimbModel, recovered: ClimbModel, allocation: AllocationResult,
                       weights: ImportanceWeights, token_budget: float, resolution: float,
                       natural_counts: Optional[Sequence[float]] = None, workers: int = 1) -> ComparisonReport:
    oracle = grid_oracle(truth, weights, token_budget, resolution, workers=workers)
    mixtures = {
        "climb": allocation.allocation,
        "uniform": baseline_allocation("uniform", recovered, weights, token_budget),
        "isolated": baseline_allocation("isolated", recovered, weights, token_budget),
        "natural": (baseline_allocation("natural", recovered, weights, token_budget, natural_counts)
                    if natural_counts is not None
                    else baseline_allocation("uniform", recovered, weights, token_budget)),
    }
    outcomes = []
    for name in STRATEGIES:
        mix = mixtures[name]
        loss = _ground_truth_loss(truth, weights, mix, token_budget)
        regret = None if loss is None else (loss - oracle.best_objective) / oracle.best_objective
        outcomes.append(StrategyOutcome(name=name, allocation=mix, weighted_loss=loss, regret=regret))
        log.info("strategy %-8s loss=%s regret=%s", name, loss, regret)
    return ComparisonReport(
        strategies=tuple(outcomes), oracle=oracle,
        token_budget=max(int(round(float(token_budget))), 1), resolution=float(resolution),
    )


def end_to_end(world: WorldSpec, design: Optional[ExperimentDesign] = None,
               fit_config: Optional[FitConfig] = None, opt_config: Optional[OptimizerConfig] = None,
               token_budget: float = BENCHMARK_BUDGET, resolution: float = BENCHMARK_RESOLUTION,
               weights: Optional[ImportanceWeights] = None,
               natural_counts: Optional[Sequence[float]] = None,
               recovery_floors: Optional[Mapping[str, float]] = None) -> Tuple[ClimbModel, AllocationResult, ComparisonReport]:
    """simulate → fit → optimize → compare. 실패 시 StageError 로 단계 표시."""
    fit_config = fit_config or FitConfig()
    opt_config = opt_config or OptimizerConfig()
    weights = weights or ImportanceWeights.uniform(len(world.languages))

    try:
        records = simulate_experiments(world, design, workers=fit_config.workers)
    except ClimbError as e:
        raise StageError("simulate", e) from e
    try:
        fit: PipelineResult = fit_climb_model(records, fit_config, world.languages)
    except ClimbError as e:
        raise StageError("fit", e) from e
    try:
        allocation = optimize_allocation(fit.model, weights, token_budget, opt_config)
    except ClimbError as e:
        raise StageError("optimize", e) from e
    try:
        report = compare_strategies(world.ground_truth, fit.model, allocation, weights, token_budget,
                                    resolution, natural_counts, workers=opt_config.workers)
        recovery = recovery_errors(world.ground_truth, fit.model, fit.eta_identifiable, recovery_floors)
    except ClimbError as e:
        raise StageError("compare", e) from e
    report = ComparisonReport(
        strategies=report.strategies, oracle=report.oracle, token_budget=report.token_budget,
        resolution=report.resolution, recovery=recovery, fit_r_squared=fit.overall_report.r_squared,
        isolated_r_squared=None if fit.isolated_report is None else fit.isolated_report.r_squared,
    )
    log.info("end-to-end seed=%d: recovery worst=%.3e climb regret=%s",
             world.seed, recovery.worst, report.outcome("climb").regret)
    return fit.model, allocation, report


# ---------- 시드 스윕 ----------
@dataclass(frozen=True)
class SweepRow:
    seed: int
    report: Optional[ComparisonReport]
    error: Optional[str] = None


def sweep(seeds: Sequence[int], m: int, noise_sigma: float = 0.0, transfer: str = "pairwise",
          ranges: Optional[WorldRanges] = None, design: Optional[ExperimentDesign] = None,
          fit_config: Optional[FitConfig] = None, opt_config: Optional[OptimizerConfig] = None,
          token_budget: float = BENCHMARK_BUDGET, resolution: float = BENCHMARK_RESOLUTION,
          workers: int = 1) -> List[SweepRow]:
    """시드마다 독립 월드로 end_to_end. 결과는 seeds 순서."""
    def one(seed: int) -> SweepRow:
        world = sample_world(m, seed, ranges, noise_sigma=noise_sigma, transfer=transfer)
        try:
            _, _, report = end_to_end(world, design, fit_config, opt_config, token_budget, resolution)
        except StageError as e:
            log.warning("seed %d failed: %s", seed, e)
            return SweepRow(seed=seed, report=None, error=str(e))
        return SweepRow(seed=seed, report=report)

    return ordered_map(one, list(seeds), workers)


# ---------- 그림용 데이터 ----------
def loss_curves(model: ClimbModel, mixture: ProportionVector, budgets: Sequence[float]) -> List[Dict[str, object]]:
    """배분 고정, 예산별 언어 손실 (정의 불가 지점은 생략)."""
    rows = []
    for D in budgets:
        for i, code in enumerate(model.languages.codes):
            try:
                loss = predicted_loss(model, mixture, i, D)
            except NonPositiveEffectiveRatio:
                continue
            rows.append({"curve": "loss", "language": code, "token_budget": float(D), "x": float(D), "y": loss})
    return rows


def ratio_curves(model: ClimbModel, budgets: Sequence[float], r_grid: Sequence[float]) -> List[Dict[str, object]]:
    """균등 분배 설계에서 r → r̃ (언어·예산별)."""
    rows = []
    for D in budgets:
        for i, code in enumerate(model.languages.codes):
            ys = effective_ratio_curve(model, i, D, r_grid)
            for r, y in zip(r_grid, ys):
                rows.append({"curve": "ratio", "language": code, "token_budget": float(D), "x": float(r), "y": float(y)})
    return rows


def allocation_curves(model: ClimbModel, weights: ImportanceWeights, budgets: Sequence[float],
                      config: Optional[OptimizerConfig] = None) -> List[Dict[str, object]]:
    """예산별 최적 배분 r_i(D). 최적화가 실패한 예산은 경고 후 생략."""
    config = config or OptimizerConfig()
    rows = []
    for D in budgets:
        try:
            result = optimize_allocation(model, weights, D, config)
        except ClimbError as e:
            log.warning("allocation curve: budget %.6g skipped: %s", D, e)
            continue
        for code, r in zip(model.languages.codes, result.allocation):
            rows.append({"curve": "allocation", "language": code, "token_budget": float(D), "x": float(D), "y": float(r)})
    return rows
