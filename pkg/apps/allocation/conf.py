# apps/allocation/conf.py
from __future__ import annotations
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping

from django.conf import settings

from apps.mixture.exceptions import InvariantViolation

DIRECTION_MODES = ("closed_form", "balanced")

# 격자 오라클 상한
MAX_LATTICE_POINTS = 10_000_000

# 실행 불가능한 시작점 보정 횟수
MAX_NUDGES = 64

# 유한차분 헤시안 상대 스텝
HESSIAN_STEP = 1e-6

# 내부 trust-region 반복 상한 (배리어 단계당)
INNER_MAX_ITER = 200

# 헤시안 스텝 반감 횟수 (한쪽이라도 내부점이 될 때까지)
HESSIAN_HALVINGS = 40

# 가중 손실 다듬기 단계의 거친 격자 시작점
REFINE_SEED_RESOLUTION = 0.05
REFINE_SEED_MAX_POINTS = 100_000


@dataclass(frozen=True)
class OptimizerConfig:
    rho: float = 1.0
    barrier_initial: float = 1e-2
    barrier_shrink: float = 0.2
    trust_radius_initial: float = 0.1
    max_outer: int = 40
    tolerance: float = 1e-10
    seed: int = 42
    random_starts: int = 8
    epsilon: float = 1e-9
    direction_mode: str = "closed_form"
    refine_loss: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.rho < 0:
            raise InvariantViolation(f"rho must be >= 0, got {self.rho}")
        if not self.barrier_initial > 0:
            raise InvariantViolation("barrier_initial must be > 0")
        if not 0 < self.barrier_shrink < 1:
            raise InvariantViolation("barrier_shrink must be in (0, 1)")
        if not self.trust_radius_initial > 0:
            raise InvariantViolation("trust_radius_initial must be > 0")
        if self.max_outer < 1:
            raise InvariantViolation("max_outer must be >= 1")
        if not self.tolerance > 0:
            raise InvariantViolation("tolerance must be > 0")
        if self.random_starts < 0:
            raise InvariantViolation("random_starts must be >= 0")
        if not self.epsilon > 0:
            raise InvariantViolation("epsilon must be > 0")
        if self.direction_mode not in DIRECTION_MODES:
            raise InvariantViolation(f"direction_mode must be one of {DIRECTION_MODES}, got {self.direction_mode!r}")
        if self.workers < 1:
            raise InvariantViolation("workers must be >= 1")

    @classmethod
    def from_settings(cls) -> "OptimizerConfig":
        base = cls(
            seed=int(getattr(settings, "CLIMB_SEED", 42)),
            workers=int(getattr(settings, "CLIMB_WORKERS", 1)),
        )
        return base.with_overrides(getattr(settings, "CLIMB_OPTIMIZER", {}) or {})

    def with_overrides(self, overrides: Mapping[str, Any]) -> "OptimizerConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise InvariantViolation(f"unknown optimizer config keys: {sorted(unknown)}")
        return replace(self, **dict(overrides))

    def snapshot(self) -> Dict[str, Any]:
        return asdict(self)
