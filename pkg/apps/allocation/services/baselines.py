# apps/allocation/services/baselines.py
from __future__ import annotations
from typing import Optional, Sequence

from apps.mixture.domain import ClimbModel, ImportanceWeights, ProportionVector, make_proportion
from apps.mixture.exceptions import InvariantViolation, MissingNaturalCounts

from .direction import optimal_direction

BASELINE_KINDS = ("uniform", "isolated", "natural")


def baseline_allocation(kind: str, model: ClimbModel, weights: ImportanceWeights, token_budget: float,
                        natural_counts: Optional[Sequence[float]] = None) -> ProportionVector:
    """
    uniform  : 1/m
    isolated : 전이 없는 모델(b=k=0)의 닫힌 해 방향을 그대로 배분으로 사용
    natural  : 코퍼스 크기 비율
    """
    if kind == "uniform":
        return ProportionVector.uniform(model.m)
    if kind == "isolated":
        return make_proportion(optimal_direction(model.without_transfer(), weights, token_budget))
    if kind == "natural":
        if natural_counts is None:
            raise MissingNaturalCounts("natural baseline needs per-language corpus counts")
        counts = [float(c) for c in natural_counts]
        if len(counts) != model.m:
            raise InvariantViolation(f"{len(counts)} natural counts for {model.m} languages")
        if any(c < 0 for c in counts):
            raise InvariantViolation(f"natural counts must be >= 0: {counts}")
        total = sum(counts)
        if not total > 0:
            raise MissingNaturalCounts("natural counts are all zero")
        return make_proportion([c / total for c in counts])
    raise InvariantViolation(f"unknown baseline {kind!r} (expected one of {BASELINE_KINDS})")
