# apps/synthetic/services/world.py
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from apps.mixture.conf import DEFAULT_LANGUAGE_CODES
from apps.mixture.domain import ClimbModel, LanguageSet, MonoScalingParams, TransferParams
from apps.mixture.exceptions import InvariantViolation

from ..conf import (
    B_RANGE, BETA_RANGE, E_RANGE, ETA_RANGE, TRANSFER_B_RANGE, TRANSFER_K_RANGE, TRANSFER_MODES,
)

log = logging.getLogger(__name__)

Range = Tuple[float, float]


@dataclass(frozen=True)
class WorldRanges:
    B: Range = B_RANGE
    beta: Range = BETA_RANGE
    E: Range = E_RANGE
    b: Range = TRANSFER_B_RANGE
    k: Range = TRANSFER_K_RANGE
    eta: Range = ETA_RANGE

    def __post_init__(self):
        for name in ("B", "beta", "E", "b", "k", "eta"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise InvariantViolation(f"range {name} must satisfy lo <= hi: {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.B[0] <= 0 or self.beta[0] <= 0 or self.E[0] < 0 or self.eta[0] <= 0:
            raise InvariantViolation("B, beta, eta ranges must be positive and E non-negative")


@dataclass(frozen=True)
class WorldSpec:
    languages: LanguageSet
    ground_truth: ClimbModel
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise InvariantViolation(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.ground_truth.languages != self.languages:
            raise InvariantViolation("world languages differ from the ground-truth model")


def language_codes(m: int) -> Tuple[str, ...]:
    codes = tuple(DEFAULT_LANGUAGE_CODES)
    if m <= len(codes):
        return codes[:m]
    return codes + tuple(f"l{i}" for i in range(len(codes), m))


def sample_world(m: int, seed: int, ranges: Optional[WorldRanges] = None, noise_sigma: float = 0.0,
                 transfer: str = "pairwise", codes: Optional[Sequence[str]] = None) -> WorldSpec:
    """
    문서화된 범위에서 균등 추출한 참 모델. 같은 (m, seed, ranges, transfer) → 같은 결과.

    transfer:
      pairwise  : 쌍마다 독립적인 (b_ji, k_ji)
      aggregate : 대상 언어마다 (b_i, k_i) 하나 → 모든 소스에 동일 (균등 분배 설계로 완전 식별)
      none      : b = k = 0
    """
    if m < 2:
        raise InvariantViolation(f"a world needs m >= 2 languages, got {m}")
    if transfer not in TRANSFER_MODES:
        raise InvariantViolation(f"transfer must be one of {TRANSFER_MODES}, got {transfer!r}")
    ranges = ranges or WorldRanges()
    langs = LanguageSet(tuple(codes) if codes is not None else language_codes(m))
    if len(langs) != m:
        raise InvariantViolation(f"{len(langs)} codes for m={m}")

    rng = np.random.default_rng(seed)
    B = rng.uniform(*ranges.B, size=m)
    beta = rng.uniform(*ranges.beta, size=m)
    E = rng.uniform(*ranges.E, size=m)
    b = rng.uniform(*ranges.b, size=(m, m))
    k = rng.uniform(*ranges.k, size=(m, m))
    eta = rng.uniform(*ranges.eta, size=m)
    if transfer == "aggregate":
        b = np.repeat(b[:, :1], m, axis=1)
        k = np.repeat(k[:, :1], m, axis=1)
    elif transfer == "none":
        b = np.zeros((m, m))
        k = np.zeros((m, m))

    model = ClimbModel(
        languages=langs,
        mono=tuple(MonoScalingParams(B=float(B[i]), beta=float(beta[i]), E=float(E[i])) for i in range(m)),
        transfer=TransferParams.from_arrays(b, k, eta.tolist()),
    )
    log.debug("sampled %s world m=%d seed=%d", transfer, m, seed)
    return WorldSpec(languages=langs, ground_truth=model, noise_sigma=float(noise_sigma), seed=int(seed))
