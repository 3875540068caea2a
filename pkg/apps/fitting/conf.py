# apps/fitting/conf.py
from __future__ import annotations
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Tuple

from django.conf import settings

from apps.mixture.exceptions import InvariantViolation

# 마지막 15% 구간만 피팅에 사용
DEFAULT_MIN_TAIL_FRACTION = 0.85

# Huber δ (손실 단위, raw-space 잔차)
DEFAULT_HUBER_DELTA = 1e-3

# (B, β, E) 멀티스타트 격자
DEFAULT_BETA_GRID: Tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 11))
DEFAULT_E_GRID_FRACTIONS: Tuple[float, ...] = (0.0, 0.5, 0.9)   # × min(observed)

# β 프로파일 격자 (β 고정 시 (B, E) 는 선형 최소제곱)
BETA_PROFILE_GRID: Tuple[float, float, int] = (0.01, 2.0, 200)

# η 탐색 범위 / 프로파일 격자 크기
DEFAULT_ETA_BOUNDS: Tuple[float, float] = (1e-3, 50.0)
ETA_PROFILE_POINTS = 121

# |ᾱ| 가 이보다 작으면 η 식별 불가로 보고
ALPHA_IDENTIFIABILITY_TOL = 1e-3
UNIDENTIFIED_ETA = 1.0

# 단일언어 피팅에 필요한 최소 점/예산 수
MIN_MONO_POINTS = 3
MIN_MONO_BUDGETS = 2

# 균등 분배 설계 판정 허용 오차
EQUAL_SHARE_TOL = 1e-9

# 1/D 회귀 시 스케일링
INV_BUDGET_SCALE = 1e9


@dataclass(frozen=True)
class FitConfig:
    delta: float = DEFAULT_HUBER_DELTA
    max_iterations: int = 500
    beta_grid: Tuple[float, ...] = DEFAULT_BETA_GRID
    e_grid: Tuple[float, ...] = DEFAULT_E_GRID_FRACTIONS
    eta_bounds: Tuple[float, float] = DEFAULT_ETA_BOUNDS
    min_tail_fraction: float = DEFAULT_MIN_TAIL_FRACTION
    step_tolerance: float = 1e-12
    pairwise: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise InvariantViolation(f"delta must be > 0, got {self.delta}")
        if self.max_iterations < 1:
            raise InvariantViolation("max_iterations must be >= 1")
        if not self.beta_grid or any(not 0 < b <= 2 for b in self.beta_grid):
            raise InvariantViolation(f"beta_grid entries must be in (0, 2]: {self.beta_grid}")
        if not self.e_grid or any(not 0 <= f < 1 for f in self.e_grid):
            raise InvariantViolation(f"e_grid fractions must be in [0, 1): {self.e_grid}")
        lo, hi = self.eta_bounds
        if not 0 < lo < hi:
            raise InvariantViolation(f"eta_bounds must satisfy 0 < lo < hi: {self.eta_bounds}")
        if not 0 < self.min_tail_fraction < 1:
            raise InvariantViolation(f"min_tail_fraction must be in (0, 1): {self.min_tail_fraction}")
        if self.workers < 1:
            raise InvariantViolation("workers must be >= 1")
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "e_grid", tuple(float(f) for f in self.e_grid))
        object.__setattr__(self, "eta_bounds", (float(lo), float(hi)))

    @classmethod
    def from_settings(cls) -> "FitConfig":
        base = cls(workers=int(getattr(settings, "CLIMB_WORKERS", 1)))
        return base.with_overrides(getattr(settings, "CLIMB_FIT", {}) or {})

    def with_overrides(self, overrides: Mapping[str, Any]) -> "FitConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise InvariantViolation(f"unknown fit config keys: {sorted(unknown)}")
        clean = {k: (tuple(v) if isinstance(v, list) else v) for k, v in overrides.items()}
        return replace(self, **clean)

    def snapshot(self) -> Dict[str, Any]:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
