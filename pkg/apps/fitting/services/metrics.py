# apps/fitting/services/metrics.py
from __future__ import annotations
from typing import Sequence, Tuple

import numpy as np

from apps.mixture.exceptions import DegenerateVariance, InsufficientData, InvariantViolation


def huber(residual: float, delta: float) -> float:
    """½r² (|r| ≤ δ), δ(|r| − ½δ) (그 외). |r| = δ 에서 C¹ 연속."""
    if not delta > 0:
        raise InvariantViolation(f"delta must be > 0, got {delta}")
    a = abs(float(residual))
    if a <= delta:
        return 0.5 * a * a
    return delta * (a - 0.5 * delta)


def huber_array(residuals: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(np.asarray(residuals, dtype=np.float64))
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def goodness_of_fit(observed: Sequence[float], predicted: Sequence[float], delta: float) -> Tuple[float, float]:
    """(R², 평균 Huber)."""
    y = np.asarray(observed, dtype=np.float64)
    yhat = np.asarray(predicted, dtype=np.float64)
    if y.shape != yhat.shape:
        raise InvariantViolation(f"length mismatch: {y.size} observed vs {yhat.size} predicted")
    if y.size < 2:
        raise InsufficientData("goodness_of_fit needs at least 2 points")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DegenerateVariance("observed values are all identical (SS_tot = 0)")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot, float(np.mean(huber_array(y - yhat, delta)))


def safe_goodness_of_fit(observed: Sequence[float], predicted: Sequence[float], delta: float,
                         exact_tol: float = 1e-12) -> Tuple[float, float]:
    """리포트용. 관측값이 상수면 잔차가 ~0 일 때 R²=1, 아니면 0 으로 보고."""
    y = np.asarray(observed, dtype=np.float64)
    yhat = np.asarray(predicted, dtype=np.float64)
    try:
        return goodness_of_fit(y, yhat, delta)
    except (DegenerateVariance, InsufficientData):
        res = y - yhat
        h = float(np.mean(huber_array(res, delta))) if res.size else 0.0
        ok = res.size == 0 or float(np.max(np.abs(res))) <= exact_tol
        return (1.0 if ok else 0.0), h
