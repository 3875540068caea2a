# test/test_mixture.py
from __future__ import annotations
import threading
import time

import numpy as np
import pytest

from apps.allocation.conf import OptimizerConfig
from apps.fitting.conf import FitConfig
from apps.mixture.concurrency import ordered_map
from apps.mixture.conf import EQUALITY_TOL
from apps.mixture.domain import (
    AllocationResult, ExperimentRecord, ImportanceWeights, LanguageSet, MonoScalingParams,
    ProportionVector, TransferParams, make_proportion,
)
from apps.mixture.exceptions import (
    ClimbError, InvariantViolation, NegativeEntry, NotNormalized, ParseError, StageError,
)

from .factories import make_model, record, two_language_model


# ---------- LanguageSet ----------
def test_language_set_keeps_order_and_indexes():
    langs = LanguageSet(("en", "zh", "es"))
    assert list(langs) == ["en", "zh", "es"]
    assert langs.index("es") == 2
    assert "zh" in langs and "fr" not in langs


@pytest.mark.parametrize("codes", [(), ("en", "en"), ("en", " "), ("en", 3)])
def test_language_set_rejects_bad_codes(codes):
    with pytest.raises(InvariantViolation):
        LanguageSet(codes)


def test_language_set_unknown_code():
    with pytest.raises(InvariantViolation, match="unknown language"):
        LanguageSet(("en",)).index("zh")


# ---------- ProportionVector ----------
def test_make_proportion_renormalizes_within_input_tolerance():
    p = make_proportion([0.5, 0.5 + 5e-7])
    assert abs(sum(p.values) - 1.0) <= 1e-12
    assert make_proportion(p.values) == p


def test_make_proportion_clamps_tiny_negatives():
    p = make_proportion([1.0, -1e-13])
    assert p.values == (1.0, 0.0)


def test_make_proportion_rejects():
    with pytest.raises(NotNormalized):
        make_proportion([0.6, 0.6])
    with pytest.raises(NegativeEntry):
        make_proportion([1.1, -0.1])
    with pytest.raises(InvariantViolation):
        make_proportion([])
    with pytest.raises(InvariantViolation):
        make_proportion([float("nan"), 1.0])


def test_proportion_vector_equality_is_indexwise():
    a = ProportionVector((0.25, 0.75))
    assert a == ProportionVector((0.25 + 1e-13, 0.75 - 1e-13))
    assert a != ProportionVector((0.75, 0.25))


def test_equal_proportion_vectors_hash_alike():
    a = ProportionVector((0.25, 0.75))
    b = ProportionVector((0.25 + 1e-15, 0.75 - 1e-15))
    assert a == b
    assert hash(a) == hash(b)
    assert len({a, b}) == 1
    assert {a: "x"}[b] == "x"
    near = ProportionVector((0.25 + 0.9 * EQUALITY_TOL, 0.75 - 0.9 * EQUALITY_TOL))
    assert near == a and hash(near) == hash(a)


def test_uniform_and_vertex():
    assert ProportionVector.uniform(4).values == (0.25,) * 4
    assert ProportionVector.vertex(3, 1).values == (0.0, 1.0, 0.0)


# ---------- 파라미터 ----------
@pytest.mark.parametrize("B,beta,E", [(0.0, 0.3, 1.0), (1.0, 0.0, 1.0), (1.0, 2.5, 1.0), (1.0, 0.3, -0.1)])
def test_mono_params_invariants(B, beta, E):
    with pytest.raises(InvariantViolation):
        MonoScalingParams(B=B, beta=beta, E=E)


def test_transfer_params_diagonal_must_be_zero():
    with pytest.raises(InvariantViolation, match="diagonal"):
        TransferParams(b=((0.1, 0.0), (0.0, 0.0)), k=((0.0, 0.0), (0.0, 0.0)), eta=(1.0, 1.0))
    with pytest.raises(InvariantViolation):
        TransferParams.zeros(2, eta=(1.0, 0.0))


def test_transfer_alpha_matrix():
    t = TransferParams.from_arrays(np.array([[0.0, 0.3], [0.1, 0.0]]), np.array([[0.0, 5e9], [0.0, 0.0]]), [1.0, 2.0])
    np.testing.assert_allclose(t.alpha(1e10), [[0.0, 0.8], [0.1, 0.0]])


def test_model_sizes_must_agree():
    with pytest.raises(InvariantViolation, match="disagree"):
        make_model(("en", "zh"), [(1.0, 0.3, 2.0)], b=np.zeros((2, 2)), k=np.zeros((2, 2)))


def test_without_transfer_keeps_eta():
    m = two_language_model(0.4, 2.0).without_transfer()
    assert m.transfer.b == ((0.0, 0.0), (0.0, 0.0))
    assert m.transfer.eta == (2.0, 1.0)


# ---------- ExperimentRecord ----------
def test_record_properties():
    langs = LanguageSet(("en", "zh"))
    rec = record(langs, "r1", 1000, 0.9, (0.25, 0.75), "zh", 2.5)
    assert rec.language_index == 1
    assert rec.share == 0.75
    assert rec.tokens == pytest.approx(900.0)


@pytest.mark.parametrize("budget,step,lang,loss", [
    (0, 1.0, "en", 2.0), (10, 0.0, "en", 2.0), (10, 1.5, "en", 2.0), (10, 1.0, "fr", 2.0), (10, 1.0, "en", 0.0),
])
def test_record_invariants(budget, step, lang, loss):
    with pytest.raises(InvariantViolation):
        record(LanguageSet(("en", "zh")), "r1", budget, step, (0.5, 0.5), lang, loss)


def test_record_mixture_length():
    with pytest.raises(InvariantViolation, match="entries"):
        ExperimentRecord("r1", 10, 1.0, ProportionVector((1.0,)), "en", 2.0, LanguageSet(("en", "zh")))


# ---------- 가중치 / 결과 ----------
def test_importance_weights():
    assert ImportanceWeights.uniform(3).omega == (1.0, 1.0, 1.0)
    with pytest.raises(InvariantViolation):
        ImportanceWeights((0.0, 0.0))
    with pytest.raises(InvariantViolation):
        ImportanceWeights((1.0, -1.0))


def test_allocation_result_normalized_ratios():
    res = AllocationResult(
        direction=(0.5, 0.5), allocation=ProportionVector((0.5, 0.5)), effective_ratios=(0.6, 0.2),
        predicted_losses=(2.0, None), objective_value=-0.8, rho=1.0, token_budget=100,
    )
    assert res.normalized_ratios == pytest.approx((0.75, 0.25))
    with pytest.raises(InvariantViolation):
        AllocationResult(direction=(0.7, 0.7), allocation=ProportionVector((0.5, 0.5)), effective_ratios=(0.5, 0.5),
                         predicted_losses=(None, None), objective_value=0.0, rho=1.0, token_budget=100)


# ---------- 설정 ----------
def test_fit_config_overrides():
    cfg = FitConfig().with_overrides({"delta": 1e-2, "beta_grid": [0.2, 0.4]})
    assert cfg.delta == 1e-2
    assert cfg.beta_grid == (0.2, 0.4)
    assert cfg.snapshot()["beta_grid"] == [0.2, 0.4]
    with pytest.raises(InvariantViolation, match="unknown"):
        FitConfig().with_overrides({"nope": 1})
    with pytest.raises(InvariantViolation):
        FitConfig(delta=0.0)


def test_optimizer_config_from_settings(settings):
    settings.CLIMB_SEED = 7
    settings.CLIMB_OPTIMIZER = {"rho": 10.0}
    cfg = OptimizerConfig.from_settings()
    assert (cfg.seed, cfg.rho) == (7, 10.0)
    with pytest.raises(InvariantViolation):
        OptimizerConfig(direction_mode="newton")


# ---------- 예외 ----------
def test_error_hierarchy():
    e = ParseError("bad value", line=3)
    assert e.line == 3 and str(e) == "line 3: bad value"
    assert isinstance(e, ClimbError)
    wrapped = StageError("fit", e)
    assert wrapped.stage == "fit" and str(wrapped).startswith("[fit]")


# ---------- ordered_map ----------
def test_ordered_map_keeps_input_order():
    def slow_square(x):
        time.sleep(0.001 * (5 - x))
        return x * x, threading.get_ident()

    items = list(range(5))
    serial = [v for v, _ in ordered_map(slow_square, items, workers=1)]
    parallel = [v for v, _ in ordered_map(slow_square, items, workers=4)]
    assert serial == parallel == [0, 1, 4, 9, 16]
