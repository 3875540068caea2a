from django.conf import settings

# 심플렉스 허용 오차
SIMPLEX_TOL = 1e-9           # 정규화 이후
SIMPLEX_INPUT_TOL = 1e-6     # 원시 입력(CSV/JSON) 허용
NEGATIVE_TOL = 1e-12
EQUALITY_TOL = 1e-12

BETA_MAX = 2.0

# 기본 언어 코드(합성 월드용): 16개 언어 실험 구성 순서
DEFAULT_LANGUAGE_CODES = tuple(getattr(settings, "CLIMB_LANGUAGE_CODES", (
    "en", "zh", "es", "de", "ar", "ko", "ja", "fr",
    "ru", "pt", "it", "nl", "id", "th", "vi", "tr",
)))
