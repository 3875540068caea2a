# apps/mixture/exceptions.py
from __future__ import annotations
from typing import Optional


class ClimbError(ValueError):
    """서비스 레이어 공통 예외. 뷰에서는 400, 커맨드에서는 CommandError 로 변환."""


class InvariantViolation(ClimbError):
    pass


class NegativeEntry(ClimbError):
    pass


class NotNormalized(ClimbError):
    pass


class NonPositiveTokens(ClimbError):
    pass


class LossAtOrBelowFloor(ClimbError):
    pass


class RatioOverflow(ClimbError):
    """역산한 상호작용 비율이 float 범위를 넘음."""


class NonPositiveEffectiveRatio(ClimbError):
    def __init__(self, message: str, language_index: Optional[int] = None):
        super().__init__(message)
        self.language_index = language_index


class EmptyAfterFilter(ClimbError):
    pass


class InsufficientData(ClimbError):
    pass


class NoConvergence(ClimbError):
    pass


class SingularDesign(ClimbError):
    pass


class DegenerateVariance(ClimbError):
    pass


class AllWeightsZero(ClimbError):
    pass


class InfeasibleStart(ClimbError):
    pass


class TooManyLatticePoints(ClimbError):
    pass


class InvalidResolution(ClimbError):
    pass


class MissingNaturalCounts(ClimbError):
    pass


class ParseError(ClimbError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class StageError(ClimbError):
    """어느 단계(simulate/fit/optimize/compare)에서 실패했는지 라벨을 붙여 재전파."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
