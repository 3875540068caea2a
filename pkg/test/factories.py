# test/factories.py
"""테스트 공용 모델/기록 생성기."""
from __future__ import annotations
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from apps.experiments.services.io import world_to_dict, write_json
from apps.mixture.domain import (
    ClimbModel, ExperimentRecord, LanguageSet, MonoScalingParams, ProportionVector, TransferParams,
)
from apps.synthetic.services.simulate import ExperimentDesign
from apps.synthetic.services.world import WorldRanges, WorldSpec, sample_world

# 작은 예산(수천 토큰)에서 k/D 가 b 와 같은 크기가 되도록 줄인 k 범위
SMALL_DESIGN = ExperimentDesign(budgets=(2_000, 10_000))
SMALL_RANGES = WorldRanges(k=(-200.0, 1_000.0))
# 양의 전이만 (η 식별 보장, 최적화 내부점 보장)
POSITIVE_RANGES = WorldRanges(b=(0.1, 0.8), k=(0.0, 1_000.0))
POSITIVE_LARGE_D_RANGES = WorldRanges(b=(0.0, 0.8), k=(0.0, 1e10), beta=(0.3, 0.6))

Mono = Tuple[float, float, float]


def make_model(codes: Sequence[str], mono: Sequence[Mono], b=None, k=None, eta=None) -> ClimbModel:
    m = len(codes)
    b = np.zeros((m, m)) if b is None else np.asarray(b, dtype=float)
    k = np.zeros((m, m)) if k is None else np.asarray(k, dtype=float)
    eta = [1.0] * m if eta is None else list(eta)
    return ClimbModel(
        languages=LanguageSet(tuple(codes)),
        mono=tuple(MonoScalingParams(B=B, beta=beta, E=E) for B, beta, E in mono),
        transfer=TransferParams.from_arrays(b, k, eta),
    )


def two_language_model(alpha: float = 0.4, eta: float = 2.0) -> ClimbModel:
    """en ← zh 전이만 있는 대칭 단일언어 모델."""
    return make_model(("en", "zh"), [(1.0, 0.5, 2.0), (1.0, 0.5, 2.0)],
                      b=[[0.0, alpha], [0.0, 0.0]], eta=[eta, 1.0])


def zero_transfer_model() -> ClimbModel:
    return make_model(("en", "zh", "es"), [(1.0, 0.3, 2.0), (2.0, 0.35, 2.1), (0.8, 0.28, 1.9)])


def symmetric_transfer_model(b: float = 0.3, eta: float = 2.0) -> ClimbModel:
    return make_model(("en", "zh"), [(1.0, 0.3, 2.0), (1.0, 0.3, 2.0)],
                      b=[[0.0, b], [b, 0.0]], eta=[eta, eta])


def record(model_or_langs, run_id: str, token_budget: int, step_fraction: float,
           mixture: Sequence[float], language: str, val_loss: float) -> ExperimentRecord:
    langs = model_or_langs.languages if hasattr(model_or_langs, "languages") else model_or_langs
    return ExperimentRecord(
        run_id=run_id, token_budget=token_budget, step_fraction=step_fraction,
        mixture=ProportionVector(tuple(mixture)), language=language, val_loss=val_loss, languages=langs,
    )


def small_world(m: int, seed: int, ranges: WorldRanges = POSITIVE_RANGES, transfer: str = "aggregate",
                noise_sigma: float = 0.0) -> WorldSpec:
    return sample_world(m, seed, ranges, noise_sigma=noise_sigma, transfer=transfer)


def write_world(path: Path, world: WorldSpec) -> Path:
    write_json(path, world_to_dict(world))
    return path

