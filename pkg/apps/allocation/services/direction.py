# apps/allocation/services/direction.py
"""
1단계: 최적 방향 p.

- optimal_direction: 닫힌 해 p_i ∝ (ω_i B_i β_i)^{1/(β_i+1)} · D^{−β_i/(β_i+1)}
- balanced_direction: Σ r̃ = total 제약 하 Σ ω_i B_i/(D r̃_i)^{β_i} 의 정확한 라그랑주 해
  (한계 이득 ω_i B_i β_i / (D^{β_i} r̃_i^{β_i+1}) 이 모든 언어에서 같아지는 점)
β 가 모두 같으면 두 결과는 일치.
"""
from __future__ import annotations
import math
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from apps.mixture.domain import ClimbModel, ImportanceWeights
from apps.mixture.exceptions import AllWeightsZero, InvariantViolation, NonPositiveTokens


def _active(model: ClimbModel, weights: ImportanceWeights, token_budget: float):
    if len(weights) != model.m:
        raise InvariantViolation(f"{len(weights)} weights for {model.m} languages")
    D = float(token_budget)
    if not D > 0 or not math.isfinite(D):
        raise NonPositiveTokens(f"token budget must be > 0, got {token_budget!r}")
    omega = weights.as_array()
    active = omega > 0
    if not active.any():
        raise AllWeightsZero("all importance weights are zero")
    B, beta, _ = model.mono_arrays()
    # log(ω_i B_i β_i) − β_i log D
    a = np.full(model.m, -np.inf)
    a[active] = np.log(omega[active] * B[active] * beta[active]) - beta[active] * math.log(D)
    return active, a, beta


def optimal_direction(model: ClimbModel, weights: ImportanceWeights, token_budget: float) -> Tuple[float, ...]:
    active, a, beta = _active(model, weights, token_budget)
    logq = np.full(model.m, -np.inf)
    logq[active] = a[active] / (beta[active] + 1.0)
    p = np.zeros(model.m)
    p[active] = np.exp(logq[active] - logsumexp(logq[active]))
    return tuple(float(x) for x in p / math.fsum(p))


def balanced_direction(model: ClimbModel, weights: ImportanceWeights, token_budget: float,
                       total: float = 1.0) -> Tuple[float, ...]:
    """한계 이득 균형점 (라그랑주 승수 log λ 를 brentq 로 탐색) → 방향(합 1)."""
    if not total > 0:
        raise InvariantViolation(f"total must be > 0, got {total}")
    active, a, beta = _active(model, weights, token_budget)
    aa, bb = a[active], beta[active] + 1.0
    log_total = math.log(total)

    # r̃_i(u) = exp((a_i − u)/(β_i+1)),  u = log λ;  h(u) 는 u 에 대해 감소
    def h(u: float) -> float:
        return float(logsumexp((aa - u) / bb)) - log_total

    u0 = float(np.mean(aa - bb * (log_total - math.log(aa.size))))
    lo, hi, step = u0 - 1.0, u0 + 1.0, 1.0
    while h(lo) < 0:
        step *= 2.0
        lo -= step
    step = 1.0
    while h(hi) > 0:
        step *= 2.0
        hi += step
    u = brentq(h, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    r = np.zeros(model.m)
    r[active] = np.exp((aa - u) / bb)
    return tuple(float(x) for x in r / math.fsum(r))


def marginal_benefits(model: ClimbModel, weights: ImportanceWeights, token_budget: float,
                      effective_ratios: Sequence[float]) -> np.ndarray:
    """ω_i B_i β_i / (D^{β_i} r̃_i^{β_i+1}). ω_i = 0 언어는 0."""
    B, beta, _ = model.mono_arrays()
    omega = weights.as_array()
    r = np.asarray(effective_ratios, dtype=np.float64)
    D = float(token_budget)
    out = np.zeros(model.m)
    act = omega > 0
    out[act] = omega[act] * B[act] * beta[act] / (D ** beta[act] * r[act] ** (beta[act] + 1.0))
    return out


def magnitude_profile(model: ClimbModel, direction: Sequence[float], token_budget: float,
                      c_values: Sequence[float]) -> List[Tuple[float, float]]:
    """c 배 크기 r̃ = c·p 에서의 Σ B_i/(D c p_i)^{β_i}."""
    B, beta, _ = model.mono_arrays()
    p = np.asarray(direction, dtype=np.float64)
    D = float(token_budget)
    out = []
    for c in c_values:
        x = float(c) * p
        if np.any(x <= 0):
            raise InvariantViolation(f"c * p must be > 0 for every language (c={c})")
        out.append((float(c), math.fsum(B / (D * x) ** beta)))
    return out
