# test/test_allocation.py
from __future__ import annotations
import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp

from apps.allocation.conf import OptimizerConfig
from apps.allocation.services.baselines import baseline_allocation
from apps.allocation.services.direction import (
    balanced_direction, magnitude_profile, marginal_benefits, optimal_direction,
)
from apps.allocation.services.optimizer import _Surrogate, optimize_allocation
from apps.allocation.services.oracle import grid_oracle, lattice_size, lattice_steps
from apps.mixture.domain import ImportanceWeights, ProportionVector
from apps.mixture.exceptions import (
    InfeasibleStart, InvalidResolution, InvariantViolation, MissingNaturalCounts, NoConvergence, NonPositiveTokens,
    TooManyLatticePoints,
)
from apps.scaling.services.law import predicted_ratios, weighted_objective
from apps.synthetic.services.world import WorldRanges, sample_world

from .factories import (
    POSITIVE_LARGE_D_RANGES, make_model, small_world, symmetric_transfer_model, zero_transfer_model,
)

UNIFORM3 = ImportanceWeights.uniform(3)


def reducible(model, r, D):
    B, beta, _ = model.mono_arrays()
    return float(np.sum(B / (D * np.asarray(r)) ** beta))


# ---------- 방향 ----------
def test_closed_form_direction_is_a_positive_simplex_point():
    p = optimal_direction(zero_transfer_model(), UNIFORM3, 1e10)
    assert abs(math.fsum(p) - 1.0) <= 1e-9
    assert all(x > 0 for x in p)


def test_closed_form_equals_balanced_when_betas_match():
    model = make_model(("en", "zh", "es"), [(1.0, 0.4, 2.0), (3.0, 0.4, 1.8), (0.5, 0.4, 2.2)])
    w = ImportanceWeights((1.0, 2.0, 0.5))
    np.testing.assert_allclose(optimal_direction(model, w, 1e10), balanced_direction(model, w, 1e10), atol=1e-10)


def test_balanced_direction_matches_numeric_minimum():
    model = make_model(("en", "zh"), [(1.0, 0.5, 0.0), (1.0, 1.0, 0.0)])
    D = 1e9

    # d/dr [ (D r)^-0.5 + (D (1-r))^-1 ] = 0
    def slope(r):
        return -0.5 * D ** -0.5 * r ** -1.5 + D ** -1.0 * (1.0 - r) ** -2.0

    r0 = brentq(slope, 0.5, 1.0 - 1e-12, xtol=1e-15)
    p = balanced_direction(model, ImportanceWeights.uniform(2), D)
    assert p[0] == pytest.approx(r0, abs=1e-6)
    assert p[1] == pytest.approx(1.0 - r0, abs=1e-6)


def test_balanced_direction_equalizes_marginals_and_is_a_minimum():
    world = small_world(3, seed=5, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise")
    model = world.ground_truth
    D = 5e10
    p = np.asarray(balanced_direction(model, UNIFORM3, D))
    mb = marginal_benefits(model, UNIFORM3, D, p)
    np.testing.assert_allclose(mb, np.full(3, mb.mean()), rtol=1e-6)
    base = reducible(model, p, D)
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            for eps in (0.01, -0.01):
                q = p.copy()
                q[i] += eps * p[i]
                q[j] -= eps * p[i]
                assert reducible(model, q, D) > base


def test_zero_weight_language_gets_no_direction():
    p = optimal_direction(zero_transfer_model(), ImportanceWeights((1.0, 0.0, 1.0)), 1e10)
    assert p[1] == 0.0 and p[0] > 0 and p[2] > 0
    q = balanced_direction(zero_transfer_model(), ImportanceWeights((1.0, 0.0, 1.0)), 1e10)
    assert q[1] == 0.0


def test_direction_input_checks():
    with pytest.raises(InvariantViolation):
        optimal_direction(zero_transfer_model(), ImportanceWeights.uniform(2), 1e10)
    with pytest.raises(NonPositiveTokens):
        optimal_direction(zero_transfer_model(), UNIFORM3, 0.0)


def test_magnitude_profile_halves_with_double_budget_share():
    model = make_model(("en",), [(1.0, 1.0, 0.0)])
    profile = magnitude_profile(model, (1.0,), 1.0, (1.0, 2.0, 4.0))
    assert profile == [(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)]
    with pytest.raises(InvariantViolation):
        magnitude_profile(model, (1.0,), 1.0, (0.0,))


def numeric_direction(model, D):
    """softmax 좌표에서 Σ B_i/(D r̃_i)^{β_i} 를 BFGS 로 직접 최소화."""
    B, beta, _ = model.mono_arrays()
    scale = float(np.sum(B / (D / model.m) ** beta))

    def f(z):
        r = np.exp(z - logsumexp(z))
        return float(np.sum(B / (D * r) ** beta)) / scale

    def grad(z):
        r = np.exp(z - logsumexp(z))
        dr = -beta * B / (D * r) ** beta / r / scale
        return r * (dr - np.dot(r, dr))

    res = minimize(f, np.zeros(model.m), jac=grad, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000})
    return np.exp(res.x - logsumexp(res.x))


SWEEP_SIZES = (2, 3, 5)


def test_balanced_direction_matches_numeric_minimum_over_50_worlds():
    D = 5e10
    for seed in range(50):
        m = SWEEP_SIZES[seed % 3]
        model = sample_world(m, seed, transfer="none").ground_truth
        w = ImportanceWeights.uniform(m)
        p = np.asarray(balanced_direction(model, w, D))
        np.testing.assert_allclose(p, numeric_direction(model, D), atol=1e-6, err_msg=f"seed {seed}")
        mb = marginal_benefits(model, w, D, p)
        np.testing.assert_allclose(mb, np.full(m, mb.mean()), rtol=1e-6, err_msg=f"seed {seed}")


def test_closed_form_direction_is_exact_when_betas_match_over_50_worlds():
    D = 5e10
    for seed in range(50):
        m = SWEEP_SIZES[seed % 3]
        model = sample_world(m, seed, WorldRanges(beta=(0.35, 0.35)), transfer="none").ground_truth
        p = np.asarray(optimal_direction(model, ImportanceWeights.uniform(m), D))
        np.testing.assert_allclose(p, numeric_direction(model, D), atol=1e-6, err_msg=f"seed {seed}")


def test_magnitude_profile_strictly_decreases_over_20_worlds():
    cs = np.linspace(0.05, 3.0, 100)
    for seed in range(20):
        model = sample_world(3, seed).ground_truth
        p = optimal_direction(model, UNIFORM3, 5e10)
        values = np.array([v for _, v in magnitude_profile(model, p, 5e10, cs)])
        assert np.all(np.diff(values) < 0), seed
        h = 1e-6 * cs
        up = np.array([v for _, v in magnitude_profile(model, p, 5e10, cs + h)])
        dn = np.array([v for _, v in magnitude_profile(model, p, 5e10, cs - h)])
        assert np.all((up - dn) / (2 * h) < 0), seed


# ---------- 크기 최적화 ----------
@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_zero_transfer_reduces_to_direction(rho):
    model = zero_transfer_model()
    res = optimize_allocation(model, UNIFORM3, 1e10, OptimizerConfig(rho=rho))
    np.testing.assert_allclose(res.allocation.values, res.direction, atol=1e-6)
    np.testing.assert_allclose(res.direction, optimal_direction(model, UNIFORM3, 1e10), atol=1e-12)


def test_symmetric_transfer_stays_symmetric():
    res = optimize_allocation(symmetric_transfer_model(0.3, 2.0), ImportanceWeights.uniform(2), 1e10)
    np.testing.assert_allclose(res.allocation.values, (0.5, 0.5), atol=1e-6)
    assert res.objective_value < -1.0
    assert sum(res.effective_ratios) > 1.0


def test_optimizer_never_worse_than_its_own_starts():
    world = small_world(3, seed=2, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise")
    model = world.ground_truth
    res = optimize_allocation(model, UNIFORM3, 5e10, OptimizerConfig(rho=1.0, refine_loss=False))
    assert not res.refined

    def F(r):
        rt = predicted_ratios(model, r, 5e10)[0]
        return -rt.sum() + 1.0 * np.sum((rt / rt.sum() - np.asarray(res.direction)) ** 2)

    assert res.objective_value <= F(res.direction) + 1e-12
    assert res.objective_value <= F(np.full(3, 1 / 3)) + 1e-12
    assert abs(math.fsum(res.allocation.values) - 1.0) <= 1e-9
    assert res.weighted_loss == pytest.approx(weighted_objective(model, UNIFORM3, res.allocation, 5e10))


def test_strongly_negative_transfer_has_no_feasible_start():
    model = make_model(("en", "zh"), [(1.0, 0.3, 2.0)] * 2, b=[[0, -50.0], [-50.0, 0]], eta=[2.0, 2.0])
    with pytest.raises(InfeasibleStart):
        optimize_allocation(model, ImportanceWeights.uniform(2), 1e10)


def test_single_language_is_rejected():
    with pytest.raises(InvariantViolation):
        optimize_allocation(make_model(("en",), [(1.0, 0.3, 2.0)]), ImportanceWeights.uniform(1), 1e10)


def test_optimizer_is_worker_independent():
    model = small_world(3, seed=4, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise").ground_truth
    a = optimize_allocation(model, UNIFORM3, 5e10, OptimizerConfig(workers=1))
    b = optimize_allocation(model, UNIFORM3, 5e10, OptimizerConfig(workers=4))
    assert a.allocation.values == b.allocation.values
    assert a.objective_value == b.objective_value


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_optimizer_is_within_half_percent_of_grid_oracle(m, seed, rho):
    model = small_world(m, seed, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise").ground_truth
    w = ImportanceWeights.uniform(m)
    res = optimize_allocation(model, w, 5e10, OptimizerConfig(rho=rho))
    oracle = grid_oracle(model, w, 5e10, 0.01)
    assert weighted_objective(model, w, res.allocation, 5e10) <= oracle.best_objective * 1.005


def test_loss_refinement_never_raises_the_weighted_loss():
    model = small_world(3, seed=2, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise").ground_truth
    plain = optimize_allocation(model, UNIFORM3, 5e10, OptimizerConfig(refine_loss=False))
    refined = optimize_allocation(model, UNIFORM3, 5e10)
    assert refined.weighted_loss <= plain.weighted_loss + 1e-12
    for r in (refined.direction, np.full(3, 1 / 3)):
        assert refined.weighted_loss <= weighted_objective(model, UNIFORM3, ProportionVector(tuple(r)), 5e10) + 1e-12
    if not refined.refined:
        assert refined.allocation == plain.allocation


@pytest.mark.parametrize("seed", range(10))
def test_zero_transfer_world_matches_direction_and_isolated_baseline(seed):
    model = sample_world(3, seed, transfer="none").ground_truth
    res = optimize_allocation(model, UNIFORM3, 5e10)
    assert not res.refined
    np.testing.assert_allclose(res.allocation.values, optimal_direction(model, UNIFORM3, 5e10), atol=1e-6)
    iso = baseline_allocation("isolated", model, UNIFORM3, 5e10)
    np.testing.assert_allclose(res.allocation.values, iso.values, atol=1e-4)


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_optimizer_matches_grid_oracle_on_default_worlds(m, rho):
    w = ImportanceWeights.uniform(m)
    for seed in range(30):
        model = sample_world(m, seed).ground_truth
        res = optimize_allocation(model, w, 5e10, OptimizerConfig(rho=rho))
        oracle = grid_oracle(model, w, 5e10, 0.01)
        assert weighted_objective(model, w, res.allocation, 5e10) <= oracle.best_objective * 1.005, seed


def surrogate_at_uniform():
    model = small_world(3, seed=2, ranges=POSITIVE_LARGE_D_RANGES, transfer="pairwise").ground_truth
    p = np.asarray(optimal_direction(model, UNIFORM3, 5e10))
    return _Surrogate(model, 5e10, p, 1.0, 1e-9), np.full(2, 1 / 3)


def test_hessian_uses_one_sided_difference_at_the_boundary():
    problem, y = surrogate_at_uniform()
    central = problem.barrier_hess(y, 1e-2)
    # y[0] 를 늘리는 쪽은 모두 바깥 → 좌표 0 은 후진 차분
    problem.interior = lambda r: bool(r[0] <= y[0])
    one_sided = problem.barrier_hess(y, 1e-2)
    np.testing.assert_allclose(one_sided, central, rtol=1e-4, atol=1e-6)


def test_hessian_without_interior_neighbours_fails_cleanly():
    problem, y = surrogate_at_uniform()
    problem.interior = lambda r: False
    with pytest.raises(NoConvergence):
        problem.barrier_hess(y, 1e-2)


# ---------- 격자 오라클 ----------
def test_lattice_helpers():
    assert lattice_steps(0.5) == 2
    assert lattice_size(2, 2) == 3
    assert lattice_size(100, 3) == 5151
    for bad in (0.3, 0.0, 1.5):
        with pytest.raises(InvalidResolution):
            lattice_steps(bad)


def test_grid_oracle_small_lattice():
    model = make_model(("en", "zh"), [(1.0, 0.3, 2.0)] * 2)
    both = grid_oracle(model, ImportanceWeights.uniform(2), 1e9, 0.5)
    # 꼭짓점은 ω>0 언어의 r̃=0 → 제외
    assert both.evaluated_count == 1
    assert both.best_mixture.values == (0.5, 0.5)
    first = grid_oracle(model, ImportanceWeights((1.0, 0.0)), 1e9, 0.5)
    assert first.evaluated_count == 2
    assert first.best_mixture.values == (1.0, 0.0)
    assert first.best_objective == weighted_objective(model, ImportanceWeights((1.0, 0.0)), first.best_mixture, 1e9)


def test_grid_oracle_limits():
    model = make_model(tuple(f"l{i}" for i in range(10)), [(1.0, 0.3, 2.0)] * 10)
    with pytest.raises(TooManyLatticePoints):
        grid_oracle(model, ImportanceWeights.uniform(10), 1e9, 0.01)
    with pytest.raises(InvalidResolution):
        grid_oracle(model, ImportanceWeights.uniform(10), 1e9, 0.3)


def test_grid_oracle_refines_consistently():
    model = small_world(3, seed=8, transfer="none").ground_truth
    coarse = grid_oracle(model, UNIFORM3, 5e10, 0.05)
    fine = grid_oracle(model, UNIFORM3, 5e10, 0.01, workers=4)
    diff = np.abs(coarse.best_mixture.as_array() - fine.best_mixture.as_array())
    assert np.all(diff <= 0.05 + 1e-12)
    assert fine.best_objective <= coarse.best_objective
    assert fine == grid_oracle(model, UNIFORM3, 5e10, 0.01, workers=1)


# ---------- 기준선 ----------
def test_baselines():
    model = zero_transfer_model()
    assert baseline_allocation("uniform", model, UNIFORM3, 1e10) == ProportionVector.uniform(3)
    nat = baseline_allocation("natural", model, UNIFORM3, 1e10, natural_counts=(30, 10, 10))
    np.testing.assert_allclose(nat.values, (0.6, 0.2, 0.2), atol=1e-12)
    iso = baseline_allocation("isolated", symmetric_transfer_model(), ImportanceWeights.uniform(2), 1e10)
    assert iso.values == pytest.approx(optimal_direction(symmetric_transfer_model().without_transfer(),
                                                         ImportanceWeights.uniform(2), 1e10))


def test_baseline_errors():
    model = zero_transfer_model()
    with pytest.raises(MissingNaturalCounts):
        baseline_allocation("natural", model, UNIFORM3, 1e10)
    with pytest.raises(MissingNaturalCounts):
        baseline_allocation("natural", model, UNIFORM3, 1e10, natural_counts=(0, 0, 0))
    with pytest.raises(InvariantViolation):
        baseline_allocation("natural", model, UNIFORM3, 1e10, natural_counts=(1, 2))
    with pytest.raises(InvariantViolation):
        baseline_allocation("greedy", model, UNIFORM3, 1e10)
