# apps/scaling/services/law.py
"""
순방향 모델(순수 함수).

  mono_loss                     L = B / D^β + E
  interaction_ratio_from_loss   r̃ = (1/D) · (B / (L − E))^(1/β)   (관측 손실 → 등가 단일언어 비율)
  transfer_strength             α(D) = b + k / D
  predicted_ratio               r̃_i = r_i + (Σ_{j≠i} α_{j→i}(D) r_j) · (1 − e^{−η_i r_i})
  predicted_loss                L_i = B_i / (D · r̃_i)^{β_i} + E_i

언어 인덱스는 0-based.
"""
from __future__ import annotations
import math
from typing import Sequence

import numpy as np

from apps.mixture.domain import ClimbModel, ImportanceWeights, MonoScalingParams, ProportionVector
from apps.mixture.exceptions import (
    InvariantViolation, LossAtOrBelowFloor, NonPositiveEffectiveRatio, NonPositiveTokens, RatioOverflow,
)

from ..conf import FLOOR_MARGIN, MAX_LOG_RATIO, MIN_EFFECTIVE_RATIO


def _check_tokens(tokens: float) -> float:
    tokens = float(tokens)
    if not tokens > 0 or not math.isfinite(tokens):
        raise NonPositiveTokens(f"token count must be > 0, got {tokens!r}")
    return tokens


def _check_index(model: ClimbModel, i: int) -> int:
    if not 0 <= i < model.m:
        raise InvariantViolation(f"language index {i} out of range for {model.m} languages")
    return i


# ---------- 단일 언어 ----------
def mono_loss(params: MonoScalingParams, tokens: float) -> float:
    tokens = _check_tokens(tokens)
    return params.B / tokens ** params.beta + params.E


def interaction_ratio_from_loss(params: MonoScalingParams, token_budget: float, observed_loss: float) -> float:
    """관측 손실을 단일언어 법칙으로 역산 → 같은 손실을 내는 단일언어 토큰 / D."""
    token_budget = _check_tokens(token_budget)
    gap = float(observed_loss) - params.E
    if gap <= FLOOR_MARGIN:
        raise LossAtOrBelowFloor(
            f"observed loss {observed_loss!r} is at or below the irreducible floor E={params.E!r}"
        )
    # log 공간: (B/gap)^(1/β) 는 β 가 작으면 쉽게 오버플로
    log_ratio = (math.log(params.B) - math.log(gap)) / params.beta - math.log(token_budget)
    if log_ratio > MAX_LOG_RATIO:
        raise RatioOverflow(
            f"interaction ratio exp({log_ratio:.4g}) for loss {observed_loss!r} overflows (beta={params.beta!r})"
        )
    return math.exp(log_ratio)


def transfer_strength(b: float, k: float, token_budget: float) -> float:
    token_budget = _check_tokens(token_budget)
    return b + k / token_budget


# ---------- 상호작용 비율 ----------
def predicted_ratio(model: ClimbModel, mixture: ProportionVector, language_index: int, token_budget: float) -> float:
    i = _check_index(model, language_index)
    token_budget = _check_tokens(token_budget)
    r = mixture.values
    r_i = r[i]
    # r_i ∈ {0, 1} 이면 전이항이 대수적으로 0 → 정확히 r_i
    if r_i == 0.0 or r_i == 1.0:
        return r_i
    t = model.transfer
    inflow = math.fsum(
        transfer_strength(t.b[i][j], t.k[i][j], token_budget) * r[j]
        for j in range(model.m) if j != i
    )
    return r_i + inflow * -math.expm1(-t.eta[i] * r_i)


def predicted_ratios(model: ClimbModel, mixtures: np.ndarray, token_budget: float) -> np.ndarray:
    """(n, m) 배치 버전. 그리드 오라클/옵티마이저용."""
    token_budget = _check_tokens(token_budget)
    R = np.atleast_2d(np.asarray(mixtures, dtype=np.float64))
    alpha = model.transfer.alpha(token_budget)          # [i][j], 대각 0
    inflow = R @ alpha.T                                 # Σ_j α_{j→i} r_j
    gate = -np.expm1(-R * model.transfer.eta_array())   # 1 − e^{−η r}
    return R + inflow * gate


def ratio_jacobian(model: ClimbModel, r: np.ndarray, token_budget: float) -> np.ndarray:
    """∂r̃_i/∂r_j (m×m). 대각: 1 + S_i η_i e^{−η_i r_i}, 비대각: α_{j→i} (1 − e^{−η_i r_i})."""
    token_budget = _check_tokens(token_budget)
    r = np.asarray(r, dtype=np.float64)
    alpha = model.transfer.alpha(token_budget)
    eta = model.transfer.eta_array()
    inflow = alpha @ r
    gate = -np.expm1(-eta * r)
    J = alpha * gate[:, None]
    J[np.diag_indices_from(J)] = 1.0 + inflow * eta * np.exp(-eta * r)
    return J


def ratio_slope(model: ClimbModel, mixture: ProportionVector, language_index: int, token_budget: float) -> float:
    """∂r̃_i/∂r_i (다른 언어 비율 고정)."""
    i = _check_index(model, language_index)
    return float(ratio_jacobian(model, mixture.as_array(), token_budget)[i, i])


def effective_ratio_curve(model: ClimbModel, language_index: int, token_budget: float,
                          r_grid: Sequence[float]) -> np.ndarray:
    """균등 분배 설계(r_j = (1−r_i)/(m−1)) 에서의 r̃_i(r_i) 곡선."""
    i = _check_index(model, language_index)
    m = model.m
    grid = np.asarray(r_grid, dtype=np.float64)
    R = np.empty((grid.size, m))
    R[:] = ((1.0 - grid) / max(m - 1, 1))[:, None]
    R[:, i] = grid
    return predicted_ratios(model, R, token_budget)[:, i]


# ---------- 손실 ----------
def predicted_loss(model: ClimbModel, mixture: ProportionVector, language_index: int, token_budget: float) -> float:
    i = _check_index(model, language_index)
    r_eff = predicted_ratio(model, mixture, i, token_budget)
    if r_eff <= MIN_EFFECTIVE_RATIO:
        raise NonPositiveEffectiveRatio(
            f"effective ratio {r_eff!r} for {model.languages.codes[i]!r} is not positive",
            language_index=i,
        )
    p = model.mono[i]
    return p.B / (float(token_budget) * r_eff) ** p.beta + p.E


def weighted_objective(model: ClimbModel, weights: ImportanceWeights, mixture: ProportionVector,
                       token_budget: float) -> float:
    """Σ ω_i L_i. ω_i = 0 인 언어는 평가하지 않음."""
    if len(weights) != model.m:
        raise InvariantViolation(f"{len(weights)} weights for {model.m} languages")
    terms = [
        w * predicted_loss(model, mixture, i, token_budget)
        for i, w in enumerate(weights.omega) if w > 0
    ]
    return math.fsum(terms)


def weighted_objectives(model: ClimbModel, weights: ImportanceWeights, mixtures: np.ndarray,
                        token_budget: float) -> np.ndarray:
    """배치 버전. 양의 가중치 언어 중 r̃ ≤ 1e-12 가 있는 행은 +inf."""
    R = np.atleast_2d(np.asarray(mixtures, dtype=np.float64))
    r_eff = predicted_ratios(model, R, token_budget)
    B, beta, E = model.mono_arrays()
    omega = weights.as_array()
    active = omega > 0
    r_act = r_eff[:, active]
    bad = np.any(r_act <= MIN_EFFECTIVE_RATIO, axis=1)
    safe = np.where(r_act > MIN_EFFECTIVE_RATIO, r_act, 1.0)
    losses = B[active] / (float(token_budget) * safe) ** beta[active] + E[active]
    out = losses @ omega[active]
    out[bad] = np.inf
    return out
