# 순방향 모델 임계값
FLOOR_MARGIN = 1e-12           # L − E 가 이 이하면 역산 불가
MIN_EFFECTIVE_RATIO = 1e-12    # r̃ 가 이 이하면 손실 정의 불가 (clamp 하지 않음)
MAX_LOG_RATIO = 700.0          # 역산 비율의 log 상한 (exp 오버플로 직전)
