# apps/experiments/serializers.py
from __future__ import annotations
from rest_framework import serializers

# ---------- 실험 로그 CSV 한 행 ----------
class RecordRowSerializer(serializers.Serializer):
    run_id = serializers.CharField()
    token_budget = serializers.IntegerField(min_value=1)
    step_fraction = serializers.FloatField()
    language = serializers.CharField()
    proportion = serializers.FloatField()
    # 비어 있으면 비율만 기록된 행 (해당 언어 손실 없음)
    val_loss = serializers.FloatField(required=False, allow_null=True)

    def validate_step_fraction(self, v):
        if not 0.0 < v <= 1.0:
            raise serializers.ValidationError("must be in (0, 1]")
        return v

    def validate_val_loss(self, v):
        if v is not None and not v > 0:
            raise serializers.ValidationError("must be > 0")
        return v


# ---------- 모델 / 월드 JSON ----------
class MonoParamsSerializer(serializers.Serializer):
    B = serializers.FloatField()
    beta = serializers.FloatField()
    E = serializers.FloatField()


class TransferMatricesSerializer(serializers.Serializer):
    b = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    k = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))


class ModelFileSerializer(serializers.Serializer):
    languages = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    mono = serializers.DictField(child=MonoParamsSerializer())
    transfer = TransferMatricesSerializer()
    eta = serializers.DictField(child=serializers.FloatField())
    index_convention = serializers.CharField(required=False)
    fit_meta = serializers.JSONField(required=False)
    manifest = serializers.CharField(required=False, allow_null=True)

    def validate(self, attrs):
        codes = attrs["languages"]
        for key in ("mono", "eta"):
            missing = [c for c in codes if c not in attrs[key]]
            extra = [c for c in attrs[key] if c not in codes]
            if missing or extra:
                raise serializers.ValidationError({key: f"languages mismatch (missing={missing}, extra={extra})"})
        return attrs


class WorldFileSerializer(ModelFileSerializer):
    noise_sigma = serializers.FloatField(min_value=0.0)
    seed = serializers.IntegerField()


# ---------- REST 요청 ----------
class PredictRequestSerializer(serializers.Serializer):
    model = serializers.JSONField()
    budget = serializers.CharField(help_text="토큰 수 (K/M/B/T 접미사 허용)")
    mixture = serializers.DictField(child=serializers.FloatField(), help_text="code → 비율 (없는 언어는 0)")


class DirectionRequestSerializer(serializers.Serializer):
    model = serializers.JSONField()
    budget = serializers.CharField()
    weights = serializers.DictField(child=serializers.FloatField(min_value=0.0), required=False)
    mode = serializers.ChoiceField(choices=["closed_form", "balanced"], default="closed_form")


class OptimizeRequestSerializer(DirectionRequestSerializer):
    rho = serializers.FloatField(min_value=0.0, required=False)
    seed = serializers.IntegerField(required=False)
    grid_res = serializers.FloatField(required=False, allow_null=True)


# ---------- REST 응답 ----------
class LanguagePredictionOutSerializer(serializers.Serializer):
    language = serializers.CharField()
    proportion = serializers.FloatField()
    effective_ratio = serializers.FloatField()
    loss = serializers.FloatField(allow_null=True)


class PredictResponseSerializer(serializers.Serializer):
    token_budget = serializers.IntegerField()
    languages = LanguagePredictionOutSerializer(many=True)
    weighted_loss = serializers.FloatField(allow_null=True)


class DirectionResponseSerializer(serializers.Serializer):
    token_budget = serializers.IntegerField()
    mode = serializers.CharField()
    direction = serializers.DictField(child=serializers.FloatField())
    marginal_benefits = serializers.DictField(child=serializers.FloatField())


class OracleOutSerializer(serializers.Serializer):
    best_mixture = serializers.DictField(child=serializers.FloatField())
    best_objective = serializers.FloatField()
    resolution = serializers.FloatField()
    evaluated_count = serializers.IntegerField()


class AllocationOutSerializer(serializers.Serializer):
    token_budget = serializers.IntegerField()
    rho = serializers.FloatField()
    direction = serializers.DictField(child=serializers.FloatField())
    allocation = serializers.DictField(child=serializers.FloatField())
    effective_ratios = serializers.DictField(child=serializers.FloatField())
    predicted_losses = serializers.DictField(child=serializers.FloatField(allow_null=True))
    objective_value = serializers.FloatField()
    weighted_loss = serializers.FloatField(allow_null=True)
    starts = serializers.IntegerField()
    converged = serializers.BooleanField()
    refined = serializers.BooleanField()
    oracle = OracleOutSerializer(required=False, allow_null=True)
