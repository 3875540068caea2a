# apps/fitting/services/transfer.py
"""
다국어 실험 → 전이 파라미터 (b, k, η).

1) ratio_pairs: 관측 손실을 단일언어 법칙으로 역산 → (r_i, r̃_i, 토큰)
2) 균등 분배 설계에서 r̃ = r + ᾱ(1−r)(1−e^{−ηr}) 로 축약
   - ᾱ 는 η 가 정해지면 선형 → 닫힌 해, η 는 프로파일 최소제곱
3) 예산별 ᾱ̂ 을 (1, 1/D) 에 OLS → (b, k)
"""
from __future__ import annotations
import logging
import math
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from apps.mixture.domain import ExperimentRecord, MonoScalingParams, ProportionVector
from apps.mixture.exceptions import (
    InsufficientData, InvariantViolation, LossAtOrBelowFloor, RatioOverflow, SingularDesign,
)
from apps.scaling.services.law import interaction_ratio_from_loss

from ..conf import (
    ALPHA_IDENTIFIABILITY_TOL, ETA_PROFILE_POINTS, INV_BUDGET_SCALE, UNIDENTIFIED_ETA, FitConfig,
)
from ..domain import AlphaFit, AlphaObservation, AlphaSeries, FitReport, RatioPair, TransferFit
from .metrics import safe_goodness_of_fit

log = logging.getLogger(__name__)


# ---------- (r_i, r̃_i) ----------
def ratio_pairs(records: Sequence[ExperimentRecord], mono: Sequence[MonoScalingParams],
                skip_invalid: bool = False) -> List[RatioPair]:
    """
    각 기록의 관측 손실을 자기 언어의 단일언어 법칙으로 역산.
    skip_invalid: 바닥(E) 이하이거나 역산이 넘치는 기록은 건너뜀 (노이즈 있는 로그용).
    """
    out = []
    for rec in records:
        i = rec.language_index
        if i >= len(mono):
            raise InvariantViolation(f"[{rec.run_id}] no mono params for {rec.language!r}")
        try:
            r_eff = interaction_ratio_from_loss(mono[i], rec.tokens, rec.val_loss)
        except (LossAtOrBelowFloor, RatioOverflow) as e:
            where = f"[{rec.run_id}] {rec.language} at step_fraction {rec.step_fraction}"
            if skip_invalid:
                log.debug("%s dropped: %s", where, e)
                continue
            raise type(e)(f"{where}: {e}") from e
        out.append(RatioPair(language_index=i, share=rec.share, ratio=r_eff, tokens=rec.tokens, record=rec))
    return out


# ---------- 균등 분배 축약식 ----------
def _gate(r: np.ndarray, eta: float) -> np.ndarray:
    return (1.0 - r) * -np.expm1(-eta * r)


def _alpha_given_eta(r: np.ndarray, y: np.ndarray, eta: float) -> Tuple[float, np.ndarray]:
    """η 고정 시 ᾱ 의 최소제곱 닫힌 해 + 잔차(관측 − 예측)."""
    g = _gate(r, eta)
    alpha = float(np.dot(g, y) / np.dot(g, g))
    return alpha, y - alpha * g


def _informative(pairs: Sequence[RatioPair]) -> Tuple[np.ndarray, np.ndarray]:
    keep = [p for p in pairs if 0.0 < p.share < 1.0]
    r = np.array([p.share for p in keep], dtype=np.float64)
    y = np.array([p.ratio - p.share for p in keep], dtype=np.float64)
    return r, y


def _profile_eta(groups: List[Tuple[np.ndarray, np.ndarray]], bounds: Tuple[float, float]) -> float:
    """모든 예산이 공유하는 η: log 격자 → 경계 있는 스칼라 최소화."""
    def sse(eta: float) -> float:
        return math.fsum(float(np.dot(res, res)) for res in (_alpha_given_eta(r, y, eta)[1] for r, y in groups))

    lo, hi = bounds
    grid = np.geomspace(lo, hi, ETA_PROFILE_POINTS)
    values = np.array([sse(float(e)) for e in grid])
    k = int(np.argmin(values))
    eta, best = float(grid[k]), float(values[k])
    a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, grid.size - 1)])
    if b > a:
        res = minimize_scalar(sse, bounds=(a, b), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
        if res.success and float(res.fun) <= best:
            eta = float(res.x)
    return eta


def fit_alpha_at_budget(pairs: Sequence[RatioPair], eta: Optional[float] = None,
                        config: Optional[FitConfig] = None) -> AlphaFit:
    """한 예산의 균등 분배 쌍 → ᾱ (η 가 None 이면 (ᾱ, η) 동시 추정)."""
    config = config or FitConfig()
    r, y = _informative(pairs)
    shared = eta is not None
    need = 1 if shared else 2
    if r.size < need:
        raise InsufficientData(f"alpha fit needs >= {need} pairs with 0 < r < 1, got {r.size}")
    if not shared:
        eta = _profile_eta([(r, y)], config.eta_bounds)
    alpha, res = _alpha_given_eta(r, y, float(eta))
    identifiable = abs(alpha) >= ALPHA_IDENTIFIABILITY_TOL
    tokens = pairs[0].tokens if pairs else 0.0
    return AlphaFit(
        alpha_bar=alpha, eta=float(eta) if (identifiable or shared) else UNIDENTIFIED_ETA,
        identifiable=identifiable, residuals=tuple(res), n_points=int(r.size), tokens=tokens,
    )


def fit_alpha_series(pairs_by_budget: Mapping[float, Sequence[RatioPair]],
                     config: Optional[FitConfig] = None, target_index: int = 0) -> AlphaSeries:
    """예산별 ᾱ(D) + 모든 예산이 공유하는 단일 η."""
    config = config or FitConfig()
    keys = sorted(pairs_by_budget)
    if not keys:
        raise InsufficientData("alpha series needs at least one budget")
    groups = []
    for key in keys:
        r, y = _informative(pairs_by_budget[key])
        if r.size < 1:
            raise InsufficientData(f"no multilingual pairs at {key:.6g} tokens")
        groups.append((r, y))
    total = sum(r.size for r, _ in groups)
    if total < len(groups) + 1:
        raise InsufficientData(f"{total} pairs cannot fit {len(groups)} alphas and a shared eta")

    eta = _profile_eta(groups, config.eta_bounds)
    fits = []
    for key, (r, y) in zip(keys, groups):
        alpha, res = _alpha_given_eta(r, y, eta)
        fits.append(AlphaFit(alpha_bar=alpha, eta=eta, identifiable=abs(alpha) >= ALPHA_IDENTIFIABILITY_TOL,
                             residuals=tuple(res), n_points=int(r.size), tokens=float(key)))
    identifiable = any(f.identifiable for f in fits)
    if not identifiable:
        # ᾱ ≈ 0 → η 는 아무 값이나 동일한 적합도
        eta = UNIDENTIFIED_ETA
        fits = [AlphaFit(f.alpha_bar, eta, False, f.residuals, f.n_points, f.tokens) for f in fits]
    return AlphaSeries(target_index=target_index, eta=eta, identifiable=identifiable, fits=tuple(fits))


# ---------- 쌍별 α_{j→i} ----------
def resolve_pairwise_alpha(runs: Sequence[Tuple[ProportionVector, float]], target_index: int,
                           eta: float) -> Dict[int, float]:
    """
    같은 예산의 (혼합 비율, r̃_i) 목록 → 소스별 α_{j→i}.
    r̃_i − r_i = Σ_{j≠i} α_{j→i} r_j (1 − e^{−η r_i}) 를 선형 최소제곱으로 푼다.
    """
    if not runs:
        raise InsufficientData("pairwise alpha needs runs")
    m = len(runs[0][0])
    i = target_index
    sources = [j for j in range(m) if j != i]
    A = np.empty((len(runs), len(sources)))
    rhs = np.empty(len(runs))
    for row, (mix, r_eff) in enumerate(runs):
        if len(mix) != m:
            raise InvariantViolation("runs disagree on the number of languages")
        r = mix.as_array()
        gate = -math.expm1(-eta * r[i])
        A[row] = r[sources] * gate
        rhs[row] = r_eff - r[i]
    if np.linalg.matrix_rank(A) < len(sources):
        raise SingularDesign(
            f"companion design for target {i} has rank {np.linalg.matrix_rank(A)} < {len(sources)}"
        )
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return {j: float(a) for j, a in zip(sources, sol)}


# ---------- α(D) = b + k / D ----------
def fit_transfer(observations: Sequence[AlphaObservation], delta: Optional[float] = None) -> TransferFit:
    """(source, target) 쌍마다 α̂ 를 (1, 1/D) 에 OLS."""
    delta = delta if delta is not None else FitConfig().delta
    by_pair: Dict[Tuple[int, int], List[AlphaObservation]] = defaultdict(list)
    for ob in observations:
        by_pair[(ob.source_index, ob.target_index)].append(ob)
    if not by_pair:
        raise InsufficientData("no alpha observations")

    pairs: Dict[Tuple[int, int], Tuple[float, float]] = {}
    observed, predicted = [], []
    for key in sorted(by_pair):
        obs = by_pair[key]
        if len({o.token_budget for o in obs}) < 2:
            raise InsufficientData(f"transfer {key[0]}->{key[1]} needs >= 2 distinct budgets")
        D = np.array([o.token_budget for o in obs], dtype=np.float64)
        a = np.array([o.alpha_hat for o in obs], dtype=np.float64)
        X = np.column_stack([np.ones_like(D), INV_BUDGET_SCALE / D])
        coef, *_ = np.linalg.lstsq(X, a, rcond=None)
        b, k = float(coef[0]), float(coef[1]) * INV_BUDGET_SCALE
        pairs[key] = (b, k)
        observed.extend(a)
        predicted.extend(X @ coef)

    r2, h = safe_goodness_of_fit(observed, predicted, delta)
    report = FitReport(
        params={f"{j}->{i}": bk for (j, i), bk in pairs.items()},
        r_squared=r2, huber=h, n_points=len(observed), converged=True,
        residuals=tuple(np.asarray(predicted) - np.asarray(observed)),
        stage="transfer", label="all", n_params=2 * len(pairs),
    )
    return TransferFit(pairs=pairs, report=report)
