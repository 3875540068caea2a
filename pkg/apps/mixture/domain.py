# apps/mixture/domain.py
"""
피팅/예측/최적화가 공유하는 도메인 타입.

- 모든 타입은 생성 시점에 불변식 검증 → 실패 시 예외 (부분적으로 유효한 인스턴스는 없음)
- frozen dataclass + tuple 저장 → 생성 후 변경 불가, 스레드 간 공유 안전
- 행렬 인덱스는 [target][source] (α_{j→i} 는 b[i][j])
"""
from __future__ import annotations
import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

from .conf import BETA_MAX, EQUALITY_TOL, NEGATIVE_TOL, SIMPLEX_INPUT_TOL, SIMPLEX_TOL
from .exceptions import InvariantViolation, NegativeEntry, NotNormalized


def _finite(values: Iterable[float], what: str) -> Tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in out):
        raise InvariantViolation(f"{what} must be finite: {out}")
    return out


# ---------- 언어 집합 ----------
@dataclass(frozen=True)
class LanguageSet:
    codes: Tuple[str, ...]

    def __post_init__(self):
        codes = tuple(self.codes)
        if not codes:
            raise InvariantViolation("LanguageSet needs at least one language")
        for c in codes:
            if not isinstance(c, str) or not c.strip():
                raise InvariantViolation(f"language code must be a non-empty string: {c!r}")
        if len(set(codes)) != len(codes):
            raise InvariantViolation(f"duplicate language codes: {list(codes)}")
        object.__setattr__(self, "codes", codes)

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[str]:
        return iter(self.codes)

    def __contains__(self, code: object) -> bool:
        return code in self.codes

    def index(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise InvariantViolation(f"unknown language {code!r} (known: {list(self.codes)})") from None


# ---------- 심플렉스 위의 점 ----------
@dataclass(frozen=True, eq=False)
class ProportionVector:
    values: Tuple[float, ...]

    def __post_init__(self):
        vals = _finite(self.values, "proportions")
        if not vals:
            raise InvariantViolation("ProportionVector must not be empty")
        if any(v < 0.0 for v in vals):
            raise NegativeEntry(f"negative proportion in {vals}")
        if abs(math.fsum(vals) - 1.0) > SIMPLEX_TOL:
            raise NotNormalized(f"proportions sum to {math.fsum(vals)!r}, expected 1")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProportionVector) or len(other) != len(self):
            return NotImplemented
        return all(abs(a - b) <= EQUALITY_TOL for a, b in zip(self.values, other.values))

    def __hash__(self) -> int:
        # 허용오차 동등성은 추이적이지 않음: 값 대신 길이만 해시
        return hash((ProportionVector, len(self.values)))

    def __repr__(self) -> str:
        return f"ProportionVector({list(self.values)})"

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @classmethod
    def uniform(cls, m: int) -> "ProportionVector":
        return make_proportion([1.0 / m] * m)

    @classmethod
    def vertex(cls, m: int, i: int) -> "ProportionVector":
        vals = [0.0] * m
        vals[i] = 1.0
        return cls(tuple(vals))


def make_proportion(values: Sequence[float]) -> ProportionVector:
    """원시 입력 → 검증된 심플렉스 점. |Σ−1| ≤ 1e-6 이면 재정규화, 아니면 거부."""
    vals = _finite(values, "proportions")
    if not vals:
        raise InvariantViolation("proportions must not be empty")
    if any(v < -NEGATIVE_TOL for v in vals):
        raise NegativeEntry(f"negative proportion in {list(vals)}")
    vals = tuple(max(v, 0.0) for v in vals)
    total = math.fsum(vals)
    if abs(total - 1.0) > SIMPLEX_INPUT_TOL:
        raise NotNormalized(f"proportions sum to {total!r}, expected 1 (tolerance {SIMPLEX_INPUT_TOL})")
    # ulp 수준 오차는 그대로 둠 → 재정규화가 멱등
    if abs(total - 1.0) <= EQUALITY_TOL:
        return ProportionVector(vals)
    return ProportionVector(tuple(v / total for v in vals))


# ---------- 단일 언어 스케일링 법칙 (B, β, E) ----------
@dataclass(frozen=True)
class MonoScalingParams:
    B: float
    beta: float
    E: float

    def __post_init__(self):
        B, beta, E = _finite((self.B, self.beta, self.E), "MonoScalingParams")
        if not B > 0:
            raise InvariantViolation(f"B must be > 0, got {B}")
        if not 0 < beta <= BETA_MAX:
            raise InvariantViolation(f"beta must be in (0, {BETA_MAX}], got {beta}")
        if not E >= 0:
            raise InvariantViolation(f"E must be >= 0, got {E}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "E", E)


# ---------- 언어 간 전이 (b_ji, k_ji, η_i) ----------
def _square(rows: Sequence[Sequence[float]], m: int, what: str) -> Tuple[Tuple[float, ...], ...]:
    out = tuple(_finite(r, what) for r in rows)
    if len(out) != m or any(len(r) != m for r in out):
        raise InvariantViolation(f"{what} must be {m}x{m}")
    for i in range(m):
        if out[i][i] != 0.0:
            raise InvariantViolation(f"{what} diagonal must be exactly zero (index {i})")
    return out


@dataclass(frozen=True)
class TransferParams:
    b: Tuple[Tuple[float, ...], ...]
    k: Tuple[Tuple[float, ...], ...]
    eta: Tuple[float, ...]

    def __post_init__(self):
        eta = _finite(self.eta, "eta")
        m = len(eta)
        if m < 1:
            raise InvariantViolation("eta must not be empty")
        if any(e <= 0 for e in eta):
            raise InvariantViolation(f"eta must be > 0: {eta}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "b", _square(self.b, m, "b"))
        object.__setattr__(self, "k", _square(self.k, m, "k"))

    @property
    def m(self) -> int:
        return len(self.eta)

    @classmethod
    def zeros(cls, m: int, eta: float | Sequence[float] = 1.0) -> "TransferParams":
        etas = tuple(eta) if isinstance(eta, (list, tuple)) else (float(eta),) * m
        z = tuple((0.0,) * m for _ in range(m))
        return cls(b=z, k=z, eta=etas)

    @classmethod
    def from_arrays(cls, b: np.ndarray, k: np.ndarray, eta: Sequence[float]) -> "TransferParams":
        b = np.array(b, dtype=np.float64)
        k = np.array(k, dtype=np.float64)
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(k, 0.0)
        return cls(b=tuple(map(tuple, b.tolist())), k=tuple(map(tuple, k.tolist())), eta=tuple(eta))

    def b_array(self) -> np.ndarray:
        return np.asarray(self.b, dtype=np.float64)

    def k_array(self) -> np.ndarray:
        return np.asarray(self.k, dtype=np.float64)

    def eta_array(self) -> np.ndarray:
        return np.asarray(self.eta, dtype=np.float64)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.b_array()) or np.any(self.k_array()))

    def alpha(self, token_budget: float) -> np.ndarray:
        """α_{j→i}(D) 행렬, [i][j]."""
        return self.b_array() + self.k_array() / float(token_budget)


# ---------- 전체 모델 ----------
@dataclass(frozen=True)
class ClimbModel:
    languages: LanguageSet
    mono: Tuple[MonoScalingParams, ...]
    transfer: TransferParams

    def __post_init__(self):
        mono = tuple(self.mono)
        m = len(self.languages)
        if len(mono) != m or self.transfer.m != m:
            raise InvariantViolation(
                f"model sizes disagree: {m} languages, {len(mono)} mono params, {self.transfer.m} transfer rows"
            )
        object.__setattr__(self, "mono", mono)

    @property
    def m(self) -> int:
        return len(self.languages)

    def mono_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        B = np.array([p.B for p in self.mono])
        beta = np.array([p.beta for p in self.mono])
        E = np.array([p.E for p in self.mono])
        return B, beta, E

    def without_transfer(self) -> "ClimbModel":
        """b=k=0 인 동일 모델 (isolated 기준선)."""
        return replace(self, transfer=TransferParams.zeros(self.m, self.transfer.eta))


# ---------- 관측 기록 ----------
@dataclass(frozen=True)
class ExperimentRecord:
    run_id: str
    token_budget: int
    step_fraction: float
    mixture: ProportionVector
    language: str
    val_loss: float
    languages: LanguageSet

    def __post_init__(self):
        if not str(self.run_id).strip():
            raise InvariantViolation("run_id must not be empty")
        if isinstance(self.token_budget, bool) or int(self.token_budget) != self.token_budget or self.token_budget < 1:
            raise InvariantViolation(f"[{self.run_id}] token_budget must be a positive integer, got {self.token_budget!r}")
        if not 0.0 < float(self.step_fraction) <= 1.0:
            raise InvariantViolation(f"[{self.run_id}] step_fraction must be in (0, 1], got {self.step_fraction!r}")
        if not (math.isfinite(float(self.val_loss)) and float(self.val_loss) > 0):
            raise InvariantViolation(f"[{self.run_id}] val_loss must be > 0, got {self.val_loss!r}")
        if self.language not in self.languages:
            raise InvariantViolation(f"[{self.run_id}] language {self.language!r} not in {list(self.languages)}")
        if len(self.mixture) != len(self.languages):
            raise InvariantViolation(f"[{self.run_id}] mixture has {len(self.mixture)} entries for {len(self.languages)} languages")
        object.__setattr__(self, "token_budget", int(self.token_budget))
        object.__setattr__(self, "step_fraction", float(self.step_fraction))
        object.__setattr__(self, "val_loss", float(self.val_loss))

    @property
    def language_index(self) -> int:
        return self.languages.index(self.language)

    @property
    def share(self) -> float:
        return self.mixture[self.language_index]

    @property
    def tokens(self) -> float:
        """측정 시점까지 본 토큰 수 (step_fraction · D)."""
        return self.step_fraction * self.token_budget


# ---------- 중요도 가중치 ω ----------
@dataclass(frozen=True)
class ImportanceWeights:
    omega: Tuple[float, ...]

    def __post_init__(self):
        omega = _finite(self.omega, "omega")
        if any(w < 0 for w in omega):
            raise InvariantViolation(f"omega must be >= 0: {omega}")
        if not any(w > 0 for w in omega):
            raise InvariantViolation("at least one omega must be > 0")
        object.__setattr__(self, "omega", omega)

    def __len__(self) -> int:
        return len(self.omega)

    @classmethod
    def uniform(cls, m: int) -> "ImportanceWeights":
        return cls(omega=(1.0,) * m)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=np.float64)


# ---------- 최적 배분 결과 ----------
@dataclass(frozen=True)
class AllocationResult:
    direction: Tuple[float, ...]
    allocation: ProportionVector
    effective_ratios: Tuple[float, ...]
    predicted_losses: Tuple[Optional[float], ...]
    objective_value: float
    rho: float
    token_budget: int
    weighted_loss: Optional[float] = None
    starts: int = 0
    converged: bool = True
    refined: bool = False

    def __post_init__(self):
        direction = _finite(self.direction, "direction")
        m = len(self.allocation)
        if len(direction) != m or len(self.effective_ratios) != m or len(self.predicted_losses) != m:
            raise InvariantViolation("AllocationResult vectors must all have length m")
        # ω=0 언어는 p_i=0 으로 제외되므로 ≥ 0 만 강제
        if any(p < 0 for p in direction) or abs(math.fsum(direction) - 1.0) > SIMPLEX_TOL:
            raise InvariantViolation(f"direction must be a simplex point: {direction}")
        if self.rho < 0:
            raise InvariantViolation(f"rho must be >= 0, got {self.rho}")
        if self.token_budget < 1:
            raise InvariantViolation(f"token_budget must be >= 1, got {self.token_budget}")
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "effective_ratios", tuple(float(x) for x in self.effective_ratios))

    @property
    def normalized_ratios(self) -> Tuple[float, ...]:
        """r̂ = r̃ / Σ r̃"""
        total = math.fsum(self.effective_ratios)
        return tuple(x / total for x in self.effective_ratios)
