# apps/synthetic/services/simulate.py
"""
참 모델로 학습 로그를 합성.

언어마다: 예산별 단일언어 1회 + 비율 c 별 균등 분배 다국어 1회 (기본 3·m·2 회)
(companion_runs) 비율 c 별 대상 + 다음 언어 두 개만 섞은 run 추가
각 run 은 step_fraction f 마다 sub-budget f·D 에서 손실 기록, 노이즈는 exp(σ z).
run 별 난수 스트림은 SeedSequence.spawn 으로 분리 → 실행 순서와 무관.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from apps.mixture.concurrency import ordered_map
from apps.mixture.domain import ExperimentRecord, ProportionVector, make_proportion
from apps.mixture.exceptions import InvariantViolation
from apps.scaling.services.law import predicted_loss, predicted_ratio

from ..conf import DESIGN_BUDGETS, DESIGN_PROPORTIONS, DESIGN_STEP_FRACTIONS, MIN_SIMULATED_RATIO
from .world import WorldSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentDesign:
    budgets: Tuple[int, ...] = DESIGN_BUDGETS
    proportions: Tuple[float, ...] = DESIGN_PROPORTIONS
    step_fractions: Tuple[float, ...] = DESIGN_STEP_FRACTIONS
    # m >= 3 이면 대상 언어 + 다음 언어 하나만 섞은 run 추가 (쌍별 α 분해용)
    companion_runs: bool = False

    def __post_init__(self):
        budgets = tuple(int(b) for b in self.budgets)
        if not budgets or any(b < 1 for b in budgets) or len(set(budgets)) != len(budgets):
            raise InvariantViolation(f"budgets must be distinct positive integers: {self.budgets}")
        if any(not 0 < c < 1 for c in self.proportions):
            raise InvariantViolation(f"proportions must be in (0, 1): {self.proportions}")
        if not self.step_fractions or any(not 0 < f <= 1 for f in self.step_fractions):
            raise InvariantViolation(f"step_fractions must be in (0, 1]: {self.step_fractions}")
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "proportions", tuple(float(c) for c in self.proportions))
        object.__setattr__(self, "step_fractions", tuple(float(f) for f in self.step_fractions))


@dataclass(frozen=True)
class _Run:
    run_id: str
    token_budget: int
    mixture: ProportionVector


def equal_share_mixture(m: int, target: int, share: float) -> ProportionVector:
    rest = (1.0 - share) / (m - 1)
    return make_proportion([share if j == target else rest for j in range(m)])


def companion_mixture(m: int, target: int, companion: int, share: float) -> ProportionVector:
    return make_proportion([share if j == target else (1.0 - share if j == companion else 0.0) for j in range(m)])


def design_runs(world: WorldSpec, design: ExperimentDesign) -> List[_Run]:
    m = len(world.languages)
    runs = []
    for i, code in enumerate(world.languages.codes):
        for k, D in enumerate(design.budgets, start=1):
            runs.append(_Run(f"{code}-mono-D{k}", D, ProportionVector.vertex(m, i)))
        for c in design.proportions:
            for k, D in enumerate(design.budgets, start=1):
                runs.append(_Run(f"{code}-c{c:g}-D{k}", D, equal_share_mixture(m, i, c)))
        if design.companion_runs and m >= 3:
            other = world.languages.codes[(i + 1) % m]
            for c in design.proportions:
                for k, D in enumerate(design.budgets, start=1):
                    runs.append(_Run(f"{code}+{other}-c{c:g}-D{k}", D, companion_mixture(m, i, (i + 1) % m, c)))
    return runs


def _simulate_run(world: WorldSpec, design: ExperimentDesign, run: _Run, seed_seq) -> List[ExperimentRecord]:
    model = world.ground_truth
    rng = np.random.default_rng(seed_seq)
    out = []
    for f in design.step_fractions:
        tokens = f * run.token_budget
        for j, code in enumerate(world.languages.codes):
            if run.mixture[j] <= 0.0:
                continue
            if predicted_ratio(model, run.mixture, j, tokens) <= MIN_SIMULATED_RATIO:
                continue
            loss = predicted_loss(model, run.mixture, j, tokens)
            if world.noise_sigma > 0:
                loss *= math.exp(world.noise_sigma * rng.standard_normal())
            out.append(ExperimentRecord(
                run_id=run.run_id, token_budget=run.token_budget, step_fraction=f,
                mixture=run.mixture, language=code, val_loss=loss, languages=world.languages,
            ))
    return out


def simulate_experiments(world: WorldSpec, design: Optional[ExperimentDesign] = None,
                         workers: int = 1) -> List[ExperimentRecord]:
    design = design or ExperimentDesign()
    runs = design_runs(world, design)
    streams = np.random.SeedSequence(world.seed).spawn(len(runs))
    per_run = ordered_map(lambda t: _simulate_run(world, design, *t), list(zip(runs, streams)), workers)
    records = [rec for rs in per_run for rec in rs]
    log.info("simulated %d runs -> %d records (noise_sigma=%g)", len(runs), len(records), world.noise_sigma)
    return records
