# apps/experiments/views.py
from __future__ import annotations

from rest_framework.response import Response
from rest_framework.views import APIView

from apps.allocation.conf import OptimizerConfig
from apps.allocation.services.optimizer import optimize_allocation
from apps.allocation.services.oracle import grid_oracle
from apps.mixture.exceptions import ClimbError

from .serializers import (
    AllocationOutSerializer, DirectionRequestSerializer, DirectionResponseSerializer,
    OptimizeRequestSerializer, PredictRequestSerializer, PredictResponseSerializer,
)
from .services.io import model_from_dict, parse_budget, parse_mixture, parse_weights
from .services.predictions import direction_payload, predict_languages
from .services.reports import allocation_to_dict

from drf_spectacular.utils import extend_schema, OpenApiExample, OpenApiResponse

_MODEL_EXAMPLE = {
    "languages": ["en", "zh"],
    "mono": {"en": {"B": 1.0, "beta": 0.3, "E": 1.8}, "zh": {"B": 2.0, "beta": 0.35, "E": 2.1}},
    "transfer": {"b": [[0.0, 0.3], [0.4, 0.0]], "k": [[0.0, 5e9], [2e9, 0.0]]},
    "eta": {"en": 2.0, "zh": 3.0},
}


# ---------- 손실 예측 ----------
@extend_schema(
    tags=["CLIMB"],
    summary="언어별 검증 손실 예측",
    description="모델 JSON, 총 토큰 수(K/M/B/T 접미사 허용), 언어 비율(빠진 언어는 0)로 언어별 r̃ 와 손실을 계산합니다.",
    request=PredictRequestSerializer,
    responses={200: PredictResponseSerializer, 400: OpenApiResponse(description="유효하지 않은 입력")},
    examples=[OpenApiExample(
        "2개 언어", request_only=True,
        value={"model": _MODEL_EXAMPLE, "budget": "100B", "mixture": {"en": 0.5, "zh": 0.5}},
    )],
)
class PredictAPIView(APIView):
    def post(self, request):
        s = PredictRequestSerializer(data=request.data)
        s.is_valid(raise_exception=True)
        v = s.validated_data
        try:
            model = model_from_dict(v["model"])
            D = parse_budget(v["budget"])
            mixture = parse_mixture(v["mixture"], model.languages)
            payload = predict_languages(model, mixture, D)
        except ClimbError as e:
            return Response({"detail": str(e)}, status=400)
        return Response(PredictResponseSerializer(payload).data)


# ---------- 최적 방향 ----------
@extend_schema(
    tags=["CLIMB"],
    summary="최적 방향 p",
    description="closed_form: 닫힌 해 / balanced: 한계 이득이 모든 언어에서 같아지는 정확한 해.",
    request=DirectionRequestSerializer,
    responses={200: DirectionResponseSerializer, 400: OpenApiResponse(description="유효하지 않은 입력")},
)
class DirectionAPIView(APIView):
    def post(self, request):
        s = DirectionRequestSerializer(data=request.data)
        s.is_valid(raise_exception=True)
        v = s.validated_data
        try:
            model = model_from_dict(v["model"])
            D = parse_budget(v["budget"])
            weights = parse_weights(v.get("weights"), model.languages)
            payload = direction_payload(model, weights, D, v["mode"])
        except ClimbError as e:
            return Response({"detail": str(e)}, status=400)
        return Response(DirectionResponseSerializer(payload).data)


# ---------- 최적 배분 ----------
@extend_schema(
    tags=["CLIMB"],
    summary="최적 언어 배분",
    description="방향 p 를 구한 뒤 심플렉스 위에서 F(r) = −Σ r̃ + ρ Σ (r̂ − p)² 를 최소화합니다. grid_res 를 주면 격자 오라클도 함께 반환합니다.",
    request=OptimizeRequestSerializer,
    responses={200: AllocationOutSerializer, 400: OpenApiResponse(description="유효하지 않은 입력")},
)
class OptimizeAPIView(APIView):
    def post(self, request):
        s = OptimizeRequestSerializer(data=request.data)
        s.is_valid(raise_exception=True)
        v = s.validated_data
        try:
            model = model_from_dict(v["model"])
            D = parse_budget(v["budget"])
            weights = parse_weights(v.get("weights"), model.languages)
            cfg = OptimizerConfig.from_settings().with_overrides({"direction_mode": v["mode"]})
            if v.get("rho") is not None:
                cfg = cfg.with_overrides({"rho": v["rho"]})
            if v.get("seed") is not None:
                cfg = cfg.with_overrides({"seed": v["seed"]})
            result = optimize_allocation(model, weights, D, cfg)
            oracle = grid_oracle(model, weights, D, v["grid_res"], workers=cfg.workers) if v.get("grid_res") else None
        except ClimbError as e:
            return Response({"detail": str(e)}, status=400)
        return Response(AllocationOutSerializer(allocation_to_dict(model.languages, result, oracle)).data)
