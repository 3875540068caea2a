# apps/fitting/domain.py
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from apps.mixture.domain import ClimbModel, ExperimentRecord
from apps.mixture.exceptions import InvariantViolation


@dataclass(frozen=True)
class FitReport:
    params: Any
    r_squared: float
    huber: float
    n_points: int
    converged: bool
    residuals: Tuple[float, ...]
    stage: str = ""
    label: str = ""
    n_params: int = 0

    def __post_init__(self):
        if self.huber < 0:
            raise InvariantViolation(f"huber must be >= 0, got {self.huber}")
        if self.n_points < self.n_params:
            raise InvariantViolation(f"{self.n_points} points for {self.n_params} free parameters")
        if self.r_squared > 1.0 + 1e-12:
            raise InvariantViolation(f"r_squared must be <= 1, got {self.r_squared}")
        object.__setattr__(self, "residuals", tuple(float(r) for r in self.residuals))


@dataclass(frozen=True)
class AlphaObservation:
    source_index: int
    target_index: int
    token_budget: int
    alpha_hat: float

    def __post_init__(self):
        if self.source_index == self.target_index:
            raise InvariantViolation("AlphaObservation needs source != target")
        if self.token_budget < 1:
            raise InvariantViolation(f"token_budget must be >= 1, got {self.token_budget}")


@dataclass(frozen=True)
class RatioPair:
    """(r_i, r̃_i, 토큰 수) + 출처 기록."""
    language_index: int
    share: float
    ratio: float
    tokens: float
    record: Optional[ExperimentRecord] = None


@dataclass(frozen=True)
class AlphaFit:
    alpha_bar: float
    eta: float
    identifiable: bool
    residuals: Tuple[float, ...]
    n_points: int
    tokens: float = 0.0


@dataclass(frozen=True)
class AlphaSeries:
    """언어 하나에 대해 예산별 ᾱ + 공유 η."""
    target_index: int
    eta: float
    identifiable: bool
    fits: Tuple[AlphaFit, ...]


@dataclass(frozen=True)
class TransferFit:
    pairs: Dict[Tuple[int, int], Tuple[float, float]]   # (source, target) → (b, k)
    report: FitReport


@dataclass(frozen=True)
class PipelineResult:
    model: ClimbModel
    mono_reports: Tuple[FitReport, ...]
    ratio_reports: Tuple[FitReport, ...]
    transfer_report: Optional[FitReport]
    overall_report: FitReport
    alpha_observations: Tuple[AlphaObservation, ...]
    eta_identifiable: Tuple[bool, ...]
    isolated_report: Optional[FitReport] = None
    holdout_report: Optional[FitReport] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def stage_reports(self) -> List[FitReport]:
        out = list(self.mono_reports) + list(self.ratio_reports)
        if self.transfer_report is not None:
            out.append(self.transfer_report)
        out.append(self.overall_report)
        for rep in (self.isolated_report, self.holdout_report):
            if rep is not None:
                out.append(rep)
        return out
