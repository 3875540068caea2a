# apps/synthetic/conf.py
from typing import Tuple

# 문서화된 기본 범위 (균등 분포)
B_RANGE: Tuple[float, float] = (0.5, 5.0)
BETA_RANGE: Tuple[float, float] = (0.15, 0.6)
E_RANGE: Tuple[float, float] = (1.2, 2.5)
TRANSFER_B_RANGE: Tuple[float, float] = (-0.2, 0.8)
TRANSFER_K_RANGE: Tuple[float, float] = (-2e9, 1e10)
ETA_RANGE: Tuple[float, float] = (0.5, 10.0)

TRANSFER_MODES = ("pairwise", "aggregate", "none")

# 실험 설계 기본값: 예산 2개 × (단일언어 + 비율 2개), 꼬리 4개 지점
DESIGN_BUDGETS: Tuple[int, ...] = (20_000_000_000, 100_000_000_000)
DESIGN_PROPORTIONS: Tuple[float, ...] = (0.25, 0.6)
DESIGN_STEP_FRACTIONS: Tuple[float, ...] = (0.85, 0.9, 0.95, 1.0)

# 벤치마크 기본값
BENCHMARK_BUDGET = 50_000_000_000
BENCHMARK_RESOLUTION = 0.01

# 복원 오차 분모 하한 (0 근처 참값에서 상대오차 폭주 방지)
RECOVERY_FLOORS = {"B": 0.0, "beta": 0.0, "E": 0.0, "b_bar": 1e-2, "k_bar": 1e8, "eta": 0.0}

# r̃ 가 이 이하이면 해당 언어 기록 생략
MIN_SIMULATED_RATIO = 1e-12
