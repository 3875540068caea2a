# apps/allocation/services/optimizer.py
"""
2단계: 심플렉스 위에서 크기 최적화.

  F(r) = −Σ r̃_i(r) + ρ Σ (r̂_i − p_i)²,   r̂ = r̃ / Σ r̃

- r 은 앞의 m−1 좌표 y 로 매개화 (r_m = 1 − Σ y) → 등식 제약 제거
- r_i ≥ ε, r̃_i ≥ ε 에 로그 배리어, 배리어를 줄여가며 trust-region 부분문제 반복
  (정확한 그래디언트 + 중앙차분 헤시안)
- 시작점: p, 균등, 시드 고정 Dirichlet 점들 → F 최소 (동률이면 앞선 시작점)
- 다듬기(refine_loss, 전이가 있을 때만): F 해, p, 균등, 거친 격자 최저점에서
  같은 배리어 방식으로 Σ ω_i L_i 를 직접 줄임 → 가중 손실이 가장 낮은 점 채택
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from apps.mixture.concurrency import ordered_map
from apps.mixture.domain import AllocationResult, ClimbModel, ImportanceWeights, make_proportion
from apps.mixture.exceptions import (
    ClimbError, InfeasibleStart, InvariantViolation, NoConvergence, NonPositiveEffectiveRatio,
)
from apps.scaling.services.law import predicted_loss, predicted_ratios, ratio_jacobian, weighted_objective

from ..conf import (
    HESSIAN_HALVINGS, HESSIAN_STEP, INNER_MAX_ITER, MAX_NUDGES, REFINE_SEED_MAX_POINTS,
    REFINE_SEED_RESOLUTION, OptimizerConfig,
)
from .direction import balanced_direction, optimal_direction
from .oracle import grid_oracle, lattice_size, lattice_steps

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Solve:
    start_index: int
    r: np.ndarray
    objective: float
    converged: bool
    stages: int


class _Problem:
    """목적함수와 배리어 항을 y 좌표로 평가. 하위 클래스가 value / grad_rt 를 채움."""

    def __init__(self, model: ClimbModel, token_budget: float, epsilon: float, guard: np.ndarray):
        self.model = model
        self.D = float(token_budget)
        self.eps = epsilon
        self.m = model.m
        # r̃ 배리어를 거는 언어
        self.guard = guard

    def value(self, rt: np.ndarray) -> float:
        raise NotImplementedError

    def grad_rt(self, rt: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_r(self, y: np.ndarray) -> np.ndarray:
        return np.append(y, 1.0 - math.fsum(y))

    def ratios(self, r: np.ndarray) -> np.ndarray:
        return predicted_ratios(self.model, r[None, :], self.D)[0]

    def objective(self, r: np.ndarray) -> float:
        return self.value(self.ratios(r))

    def interior(self, r: np.ndarray) -> bool:
        return bool(np.all(r > self.eps) and np.all(self.ratios(r)[self.guard] > self.eps))

    def barrier_value(self, y: np.ndarray, mu: float) -> float:
        r = self.to_r(y)
        if not np.all(r > self.eps):
            return math.inf
        rt = self.ratios(r)
        if not np.all(rt[self.guard] > self.eps):
            return math.inf
        f = self.value(rt)
        return f - mu * (math.fsum(np.log(r - self.eps)) + math.fsum(np.log(rt[self.guard] - self.eps)))

    def barrier_grad(self, y: np.ndarray, mu: float) -> np.ndarray:
        r = self.to_r(y)
        rt = self.ratios(r)
        g_rt = self.grad_rt(rt)
        g_rt[self.guard] -= mu / (rt[self.guard] - self.eps)
        J = ratio_jacobian(self.model, r, self.D)
        g_r = J.T @ g_rt - mu / (r - self.eps)
        return g_r[:-1] - g_r[-1]

    def _shift(self, y: np.ndarray, k: int, h: float) -> np.ndarray:
        out = y.copy()
        out[k] += h
        return out

    def barrier_hess(self, y: np.ndarray, mu: float) -> np.ndarray:
        n = y.size
        H = np.empty((n, n))
        for k in range(n):
            h = HESSIAN_STEP * max(abs(y[k]), 1e-3)
            # 양쪽이 내부점이면 중앙차분, 한쪽만이면 전진/후진 차분, 둘 다 아니면 스텝 축소
            for _ in range(HESSIAN_HALVINGS):
                up, dn = self._shift(y, k, h), self._shift(y, k, -h)
                up_ok, dn_ok = self.interior(self.to_r(up)), self.interior(self.to_r(dn))
                if up_ok and dn_ok:
                    H[:, k] = (self.barrier_grad(up, mu) - self.barrier_grad(dn, mu)) / (2.0 * h)
                    break
                if up_ok:
                    H[:, k] = (self.barrier_grad(up, mu) - self.barrier_grad(y, mu)) / h
                    break
                if dn_ok:
                    H[:, k] = (self.barrier_grad(y, mu) - self.barrier_grad(dn, mu)) / h
                    break
                h *= 0.5
            else:
                raise NoConvergence(f"no interior point within {h:.1e} of the iterate along coordinate {k}")
        return 0.5 * (H + H.T)


class _Surrogate(_Problem):
    """F(r). Σ r̃ ≤ 0 이면 +inf."""

    def __init__(self, model: ClimbModel, token_budget: float, p: np.ndarray, rho: float, epsilon: float):
        super().__init__(model, token_budget, epsilon, np.ones(model.m, dtype=bool))
        self.p = p
        self.rho = rho

    def value(self, rt: np.ndarray) -> float:
        T = math.fsum(rt)
        if not T > 0:
            return math.inf
        rhat = rt / T
        return -T + self.rho * math.fsum((rhat - self.p) ** 2)

    def grad_rt(self, rt: np.ndarray) -> np.ndarray:
        T = float(np.sum(rt))
        rhat = rt / T
        dev = rhat - self.p
        # ∂F/∂r̃_k = −1 + (2ρ/T)[(r̂_k − p_k) − Σ_i (r̂_i − p_i) r̂_i]
        return -1.0 + (2.0 * self.rho / T) * (dev - float(np.dot(dev, rhat)))


class _WeightedLoss(_Problem):
    """Σ ω_i B_i (D r̃_i)^−β_i 를 기준점 값으로 나눈 것 (E 는 상수라 제외)."""

    def __init__(self, model: ClimbModel, token_budget: float, omega: np.ndarray, epsilon: float,
                 reference: np.ndarray):
        super().__init__(model, token_budget, epsilon, omega > 0)
        B, beta, _ = model.mono_arrays()
        self.coef = (omega * B)[self.guard]
        self.beta = beta[self.guard]
        self.scale = 1.0
        self.scale = 1.0 / self.value(self.ratios(reference))

    def value(self, rt: np.ndarray) -> float:
        act = rt[self.guard]
        if not np.all(act > 0):
            return math.inf
        return self.scale * math.fsum(self.coef * (self.D * act) ** -self.beta)

    def grad_rt(self, rt: np.ndarray) -> np.ndarray:
        g = np.zeros(self.m)
        act = rt[self.guard]
        g[self.guard] = -self.scale * self.beta * self.coef * (self.D * act) ** -self.beta / act
        return g


# ---------- 시작점 ----------
def _make_interior(problem: _Problem, r: np.ndarray) -> Optional[np.ndarray]:
    """r 을 내부점으로 보정. 실패하면 None."""
    m = problem.m
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= problem.eps):
        r = (1.0 - 1e-3) * r + 1e-3 / m
    if problem.interior(r):
        return r
    rt = problem.ratios(r)
    worst = int(np.argmin(np.where(problem.guard, rt - problem.eps, np.inf)))
    vertex = np.zeros(m)
    vertex[worst] = 1.0
    # 문제 언어의 꼭짓점 쪽으로 남은 거리를 절반씩 좁힘
    t = 0.0
    for _ in range(MAX_NUDGES):
        t = 0.5 * (t + 1.0)
        cand = (1.0 - t) * r + t * vertex
        if problem.interior(cand):
            return cand
    return None


def _interior_starts(problem: _Problem, raw: Sequence[np.ndarray]) -> List[Tuple[int, np.ndarray]]:
    out = []
    for idx, r in enumerate(raw):
        fixed = _make_interior(problem, r)
        if fixed is None:
            log.debug("start %d skipped: no interior point toward any vertex", idx)
            continue
        out.append((idx, fixed))
    return out


def _starts(problem: _Surrogate, config: OptimizerConfig) -> List[Tuple[int, np.ndarray]]:
    m = problem.m
    raw = [problem.p.copy(), np.full(m, 1.0 / m)]
    if config.random_starts:
        rng = np.random.default_rng(config.seed)
        raw.extend(rng.dirichlet(np.ones(m), size=config.random_starts))
    return _interior_starts(problem, raw)


def _lattice_seed(model: ClimbModel, weights: ImportanceWeights, token_budget: float) -> Optional[np.ndarray]:
    """거친 격자 최저점. 격자가 너무 크거나 유효점이 없으면 None."""
    if lattice_size(lattice_steps(REFINE_SEED_RESOLUTION), model.m) > REFINE_SEED_MAX_POINTS:
        return None
    try:
        return grid_oracle(model, weights, token_budget, REFINE_SEED_RESOLUTION).best_mixture.as_array()
    except InfeasibleStart:
        return None


# ---------- 배리어 단계 ----------
def _solve_from(problem: _Problem, idx: int, r0: np.ndarray, config: OptimizerConfig) -> Optional[_Solve]:
    y = r0[:-1].copy()
    mu = config.barrier_initial
    radius = config.trust_radius_initial
    converged, stages = True, 0
    while True:
        if stages >= config.max_outer:
            log.debug("start %d: barrier not below tolerance after %d stages", idx, stages)
            return None
        try:
            res = minimize(
                problem.barrier_value, y, args=(mu,), method="trust-exact",
                jac=problem.barrier_grad, hess=problem.barrier_hess,
                options={"initial_trust_radius": radius, "max_trust_radius": 1.0,
                         "gtol": config.tolerance, "maxiter": INNER_MAX_ITER},
            )
        except (ClimbError, ValueError, np.linalg.LinAlgError) as e:
            log.debug("start %d: stage %d failed: %s", idx, stages + 1, e)
            return None
        stages += 1
        if not np.all(np.isfinite(res.x)) or not math.isfinite(float(res.fun)):
            log.debug("start %d: stage %d left the domain", idx, stages)
            return None
        converged = converged and bool(res.success)
        step = float(np.max(np.abs(res.x - y))) if y.size else 0.0
        y = res.x
        log.debug("start %d stage %d: mu=%.1e value=%.12g step=%.2e", idx, stages, mu, float(res.fun), step)
        if mu <= config.tolerance:
            break
        mu *= config.barrier_shrink
    r = problem.to_r(y)
    return _Solve(start_index=idx, r=r, objective=problem.objective(r), converged=converged, stages=stages)


def _best(problem: _Problem, solves: List[_Solve], points: Sequence[np.ndarray], first_index: int) -> _Solve:
    """배리어 해 + 다듬지 않은 점들 중 목적값 최소 (동률이면 앞선 인덱스)."""
    candidates = list(solves)
    for offset, r in enumerate(points):
        value = problem.objective(r)
        if math.isfinite(value):
            candidates.append(_Solve(start_index=first_index + offset, r=r, objective=value,
                                     converged=True, stages=0))
    return min(candidates, key=lambda s: (s.objective, s.start_index))


def _refine(model: ClimbModel, weights: ImportanceWeights, token_budget: float, surrogate_best: _Solve,
            p: np.ndarray, config: OptimizerConfig) -> Tuple[_Solve, bool]:
    """가중 손실 다듬기. (최종 해, F 해에서 바뀌었는지)."""
    omega = weights.as_array()
    problem = _WeightedLoss(model, token_budget, omega, config.epsilon, surrogate_best.r)
    raw = [surrogate_best.r, p, np.full(model.m, 1.0 / model.m)]
    seed = _lattice_seed(model, weights, token_budget)
    if seed is not None:
        raw.append(seed)
    starts = _interior_starts(problem, raw)
    solves = ordered_map(lambda s: _solve_from(problem, s[0], s[1], config), starts, config.workers)
    finished = [s for s in solves if s is not None]
    best = _best(problem, finished, raw, len(raw))
    moved = best.objective < problem.objective(surrogate_best.r)
    log.debug("refine: %d/%d starts finished, relative reducible loss %.12g", len(finished), len(starts),
              best.objective)
    if not moved:
        return surrogate_best, False
    return best, True


def _direction(model: ClimbModel, weights: ImportanceWeights, token_budget: float, mode: str) -> Tuple[float, ...]:
    if mode == "balanced":
        return balanced_direction(model, weights, token_budget)
    return optimal_direction(model, weights, token_budget)


def _losses(model: ClimbModel, mixture, token_budget: float) -> Tuple[Optional[float], ...]:
    out = []
    for i in range(model.m):
        try:
            out.append(predicted_loss(model, mixture, i, token_budget))
        except NonPositiveEffectiveRatio:
            out.append(None)
    return tuple(out)


def optimize_allocation(model: ClimbModel, weights: ImportanceWeights, token_budget: float,
                        config: Optional[OptimizerConfig] = None) -> AllocationResult:
    config = config or OptimizerConfig()
    if model.m < 2:
        raise InvariantViolation("allocation needs at least 2 languages")
    p = np.asarray(_direction(model, weights, token_budget, config.direction_mode))
    problem = _Surrogate(model, token_budget, p, config.rho, config.epsilon)

    starts = _starts(problem, config)
    if not starts:
        raise InfeasibleStart("no start point with every effective ratio above epsilon")

    solves = ordered_map(lambda s: _solve_from(problem, s[0], s[1], config), starts, config.workers)
    finished = [s for s in solves if s is not None]
    if not finished:
        raise NoConvergence(f"no start finished within {config.max_outer} barrier stages")

    omega = weights.as_array()

    def usable(r: np.ndarray) -> bool:
        rt = problem.ratios(r)
        return bool(np.all(rt[omega > 0] > config.epsilon))

    # 원래의 p / 균등 시작점 자체도 후보 → F(r*) ≤ F(p), F(uniform)
    plain = [r for r in (p, np.full(model.m, 1.0 / model.m)) if usable(r)]
    best = _best(problem, finished, plain, 2 + config.random_starts)
    log.debug("optimize: F=%.12g from start %d (%d/%d finished)", best.objective, best.start_index,
              len(finished), len(starts))

    refined = False
    # 전이가 없으면 r* = p 가 답 (다듬기 생략)
    if config.refine_loss and not model.transfer.is_zero and usable(best.r):
        best, refined = _refine(model, weights, token_budget, best, p, config)

    allocation = make_proportion(np.clip(best.r, 0.0, None))
    r_eff = problem.ratios(allocation.as_array())
    try:
        wl = weighted_objective(model, weights, allocation, token_budget)
    except ClimbError:
        wl = None
    objective_value = problem.objective(allocation.as_array())
    log.info("optimize: F=%.12g, weighted loss=%s, refined=%s", objective_value, wl, refined)
    return AllocationResult(
        direction=tuple(float(x) for x in p),
        allocation=allocation,
        effective_ratios=tuple(float(x) for x in r_eff),
        predicted_losses=_losses(model, allocation, token_budget),
        objective_value=objective_value,
        rho=config.rho,
        token_budget=max(int(round(float(token_budget))), 1),
        weighted_loss=wl,
        starts=len(finished),
        converged=best.converged,
        refined=refined,
    )
