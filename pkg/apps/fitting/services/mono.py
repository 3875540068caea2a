# apps/fitting/services/mono.py
"""
단일언어 스케일링 법칙 (B, β, E) 피팅.

- 꼬리 구간(step_fraction ≥ 0.85) 기록만 사용
- 시작점: β 프로파일 최저점 (β 고정 시 (B, E) 는 선형 최소제곱) + β 격자 × E 격자
- 각 시작점에서 Huber 손실(raw-space 잔차) robust 최소제곱으로 정밀화
- 최종 목적함수 최소 → 동률이면 시작점 인덱스가 작은 쪽
"""
from __future__ import annotations
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from apps.mixture.concurrency import ordered_map
from apps.mixture.conf import BETA_MAX
from apps.mixture.domain import ExperimentRecord, MonoScalingParams
from apps.mixture.exceptions import (
    EmptyAfterFilter, InsufficientData, InvariantViolation, NoConvergence,
)

from ..conf import BETA_PROFILE_GRID, MIN_MONO_BUDGETS, MIN_MONO_POINTS, FitConfig
from ..domain import FitReport
from .metrics import huber_array, safe_goodness_of_fit

log = logging.getLogger(__name__)

BETA_MIN = 1e-6


def filter_tail(records: Sequence[ExperimentRecord], min_fraction: float = 0.85) -> List[ExperimentRecord]:
    """step_fraction ≥ min_fraction 만 남김 (입력 순서 유지)."""
    if not 0.0 < float(min_fraction) < 1.0:
        raise InvariantViolation(f"min_fraction must be in (0, 1), got {min_fraction!r}")
    kept = [r for r in records if r.step_fraction >= min_fraction]
    if not kept:
        raise EmptyAfterFilter(f"no records with step_fraction >= {min_fraction}")
    return kept


# ---------- 시작점 ----------
def _project(beta: float, s: np.ndarray, y: np.ndarray) -> Optional[Tuple[float, float, float]]:
    """β 고정 → (B', E) 선형 최소제곱 (E ≥ 0). (B', E, SSE). B' ≤ 0 이면 None."""
    z = s ** -beta
    zc = z - z.mean()
    yc = y - y.mean()
    denom = float(np.dot(zc, zc))
    if not denom > 0:
        return None
    Bp = float(np.dot(zc, yc) / denom)
    E = float(y.mean() - Bp * z.mean())
    # 중심화된 잔차: E ≈ y 인 큰 상수를 더했다 빼지 않음
    res = Bp * zc - yc
    if E < 0.0:
        E = 0.0
        Bp = float(np.dot(z, y) / np.dot(z, z))
        res = Bp * z - y
    if not Bp > 0:
        return None
    return Bp, E, float(np.dot(res, res))


def _profile_start(s: np.ndarray, y: np.ndarray) -> Optional[Tuple[float, float, float]]:
    """β 격자에서 SSE 최저 → 이웃 구간에서 경계 있는 스칼라 최소화."""
    lo, hi, n = BETA_PROFILE_GRID
    grid = np.linspace(lo, min(hi, BETA_MAX), n)

    def sse(beta: float) -> float:
        out = _project(float(beta), s, y)
        return math.inf if out is None else out[2]

    values = np.array([sse(b) for b in grid])
    if not np.isfinite(values).any():
        return None
    k = int(np.argmin(values))
    beta = float(grid[k])
    a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, n - 1)])
    res = minimize_scalar(sse, bounds=(a, b), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    if res.success and float(res.fun) <= float(values[k]):
        beta = float(res.x)
    Bp, E, _ = _project(beta, s, y)
    return math.log(Bp), beta, E


def _starts(s: np.ndarray, y: np.ndarray, config: FitConfig) -> List[Tuple[float, float, float]]:
    """(log B', β, E) 시작점 목록. B' 는 정규화 토큰 s 기준 계수."""
    y_min = float(y.min())
    out = []
    profiled = _profile_start(s, y)
    if profiled is not None:
        out.append(profiled)
    for beta in config.beta_grid:
        z = s ** -beta
        for frac in config.e_grid:
            E0 = frac * y_min
            B0 = float(np.dot(z, y - E0) / np.dot(z, z))
            if not B0 > 0:
                B0 = max(float(np.mean(y - E0)), 1e-12)
            out.append((math.log(B0), min(float(beta), BETA_MAX), E0))
    return out


def _residuals(x: np.ndarray, log_s: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.exp(x[0] - x[1] * log_s) + x[2] - y


def _refine(start, s, log_s, y, e_max, config: FitConfig) -> Optional[Tuple[np.ndarray, float]]:
    def jac(x, *_):
        v = np.exp(x[0] - x[1] * log_s)
        return np.column_stack([v, -v * log_s, np.ones_like(y)])

    lb = np.array([-np.inf, BETA_MIN, 0.0])
    ub = np.array([np.inf, BETA_MAX, e_max])
    x0 = np.clip(np.asarray(start, dtype=np.float64), lb, ub)
    try:
        res = least_squares(
            _residuals, x0, jac=jac, bounds=(lb, ub), method="trf",
            loss="huber", f_scale=config.delta, x_scale="jac",
            ftol=1e-15, xtol=config.step_tolerance, gtol=None,
            max_nfev=config.max_iterations, args=(log_s, y),
        )
    except (ValueError, FloatingPointError) as e:
        log.debug("start %s rejected: %s", start, e)
        return None
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        log.debug("start %s did not converge (status=%s)", start, res.status)
        return None
    objective = math.fsum(huber_array(_residuals(res.x, log_s, y), config.delta))
    return res.x, objective


def fit_monolingual(records: Sequence[ExperimentRecord], config: Optional[FitConfig] = None) -> FitReport:
    """r_i = 1 기록으로 L = B / D^β + E 피팅."""
    config = config or FitConfig()
    if not records:
        raise InsufficientData("monolingual fit needs records")
    code = records[0].language
    for r in records:
        if r.language != code:
            raise InvariantViolation(f"monolingual fit mixes languages {code!r} and {r.language!r}")
        if r.share != 1.0:
            raise InvariantViolation(f"[{r.run_id}] record for {code!r} is not monolingual (share={r.share})")

    tail = [r for r in records if r.step_fraction >= config.min_tail_fraction]
    budgets = {r.token_budget for r in tail}
    if len(tail) < MIN_MONO_POINTS or len(budgets) < MIN_MONO_BUDGETS:
        raise InsufficientData(
            f"{code}: monolingual fit needs >= {MIN_MONO_POINTS} tail points over >= {MIN_MONO_BUDGETS} "
            f"budgets, got {len(tail)} points over {len(budgets)}"
        )

    tokens = np.array([r.tokens for r in tail], dtype=np.float64)
    y = np.array([r.val_loss for r in tail], dtype=np.float64)
    # 토큰을 기하평균으로 정규화 → 야코비안 스케일 균형
    log_ref = float(np.mean(np.log(tokens)))
    log_s = np.log(tokens) - log_ref
    s = np.exp(log_s)
    # 노이즈가 있으면 E 가 min(y) 보다 클 수 있음
    e_max = float(y.max())

    starts = _starts(s, y, config)
    outcomes = ordered_map(lambda st: _refine(st, s, log_s, y, e_max, config), starts, config.workers)
    # 다듬지 않은 시작점도 후보 (trf 가 모두 실패해도 프로파일 해는 남음)
    for st in starts:
        x = np.asarray(st, dtype=np.float64)
        outcomes.append((x, math.fsum(huber_array(_residuals(x, log_s, y), config.delta))))

    best_idx, best = None, None
    for idx, out in enumerate(outcomes):
        if out is None or not math.isfinite(out[1]):
            continue
        log.debug("%s candidate %d: beta=%.4g E=%.6g objective=%.6e", code, idx, out[0][1], out[0][2], out[1])
        if best is None or out[1] < best[1]:
            best_idx, best = idx, out
    if best is None:
        raise NoConvergence(f"{code}: all {len(starts)} starts failed")

    x = best[0]
    beta, E = float(x[1]), float(x[2])
    B = math.exp(float(x[0]) + beta * log_ref)
    params = MonoScalingParams(B=B, beta=beta, E=E)
    predicted = B / tokens ** beta + E
    r2, h = safe_goodness_of_fit(y, predicted, config.delta)
    log.info("mono %s: B=%.6g beta=%.6g E=%.6g R2=%.6f (candidate %d/%d)",
             code, B, beta, E, r2, best_idx, len(outcomes))
    return FitReport(
        params=params, r_squared=r2, huber=h, n_points=len(tail), converged=True,
        residuals=tuple(predicted - y), stage="mono", label=code, n_params=3,
    )
