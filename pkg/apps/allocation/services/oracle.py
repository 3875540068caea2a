# apps/allocation/services/oracle.py
"""해상도 격자 위 전수 탐색 → 옵티마이저 검증용 기준값."""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from apps.mixture.concurrency import ordered_map
from apps.mixture.domain import ClimbModel, ImportanceWeights, ProportionVector
from apps.mixture.exceptions import InfeasibleStart, InvalidResolution, TooManyLatticePoints
from apps.scaling.services.law import weighted_objective, weighted_objectives

from ..conf import MAX_LATTICE_POINTS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridOracleResult:
    best_mixture: ProportionVector
    best_objective: float
    resolution: float
    evaluated_count: int


def lattice_steps(resolution: float) -> int:
    """1/resolution 이 정수가 아니면 InvalidResolution."""
    res = float(resolution)
    if not 0 < res <= 1:
        raise InvalidResolution(f"resolution must be in (0, 1], got {resolution!r}")
    n = round(1.0 / res)
    if n < 1 or abs(n * res - 1.0) > 1e-9:
        raise InvalidResolution(f"1/resolution must be an integer, got {1.0 / res!r}")
    return int(n)


def lattice_size(n: int, m: int) -> int:
    return math.comb(n + m - 1, m - 1)


@lru_cache(maxsize=None)
def _compositions(n: int, parts: int) -> np.ndarray:
    """n 을 parts 개 음이 아닌 정수로 나누는 모든 조합 (사전순)."""
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for a in range(n + 1):
        sub = _compositions(n - a, parts - 1)
        blocks.append(np.column_stack([np.full(len(sub), a, dtype=np.int64), sub]))
    return np.vstack(blocks)


def grid_oracle(model: ClimbModel, weights: ImportanceWeights, token_budget: float, resolution: float,
                workers: int = 1) -> GridOracleResult:
    m = model.m
    n = lattice_steps(resolution)
    total = lattice_size(n, m)
    if total > MAX_LATTICE_POINTS:
        raise TooManyLatticePoints(f"{total} lattice points for m={m}, resolution={resolution} (max {MAX_LATTICE_POINTS})")

    # 첫 좌표 값마다 한 블록 → 블록 순서를 이으면 전체 사전순
    def evaluate(a: int) -> Tuple[np.ndarray, np.ndarray]:
        if m == 1:
            block = np.array([[n]], dtype=np.int64)
        else:
            sub = _compositions(n - a, m - 1)
            block = np.column_stack([np.full(len(sub), a, dtype=np.int64), sub])
        return block, weighted_objectives(model, weights, block / n, token_budget)

    firsts = [n] if m == 1 else list(range(n + 1))
    results: List[Tuple[np.ndarray, np.ndarray]] = ordered_map(evaluate, firsts, workers)
    points = np.vstack([b for b, _ in results])
    values = np.concatenate([v for _, v in results])
    valid = np.isfinite(values)
    if not valid.any():
        raise InfeasibleStart("no lattice point has a positive effective ratio for every weighted language")
    k = int(np.argmin(np.where(valid, values, np.inf)))
    best = ProportionVector(tuple(float(c) / n for c in points[k]))
    best_value = weighted_objective(model, weights, best, token_budget)
    log.info("grid oracle: %d/%d valid points at resolution %g, best %s = %.12g",
             int(valid.sum()), total, resolution, list(best.values), best_value)
    return GridOracleResult(best_mixture=best, best_objective=best_value, resolution=float(resolution),
                            evaluated_count=int(valid.sum()))
