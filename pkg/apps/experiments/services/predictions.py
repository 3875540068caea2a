# apps/experiments/services/predictions.py
from __future__ import annotations
from typing import Any, Dict, Optional

from apps.allocation.services.direction import balanced_direction, marginal_benefits, optimal_direction
from apps.mixture.domain import ClimbModel, ImportanceWeights, ProportionVector
from apps.mixture.exceptions import NonPositiveEffectiveRatio
from apps.scaling.services.law import predicted_loss, predicted_ratio, weighted_objective

from .reports import by_code


def predict_languages(model: ClimbModel, mixture: ProportionVector, token_budget: int,
                      weights: Optional[ImportanceWeights] = None) -> Dict[str, Any]:
    """언어별 r, r̃, 손실. r̃ ≤ 1e-12 인 언어의 손실은 None."""
    rows = []
    for i, code in enumerate(model.languages.codes):
        try:
            loss = predicted_loss(model, mixture, i, token_budget)
        except NonPositiveEffectiveRatio:
            loss = None
        rows.append({
            "language": code,
            "proportion": mixture[i],
            "effective_ratio": predicted_ratio(model, mixture, i, token_budget),
            "loss": loss,
        })
    weights = weights or ImportanceWeights.uniform(model.m)
    try:
        wl = weighted_objective(model, weights, mixture, token_budget)
    except NonPositiveEffectiveRatio:
        wl = None
    return {"token_budget": int(token_budget), "languages": rows, "weighted_loss": wl}


def direction_payload(model: ClimbModel, weights: ImportanceWeights, token_budget: int,
                      mode: str = "closed_form") -> Dict[str, Any]:
    p = balanced_direction(model, weights, token_budget) if mode == "balanced" \
        else optimal_direction(model, weights, token_budget)
    mb = marginal_benefits(model, weights, token_budget, [x if x > 0 else 1.0 for x in p])
    mb = [v if x > 0 else 0.0 for v, x in zip(mb, p)]
    return {
        "token_budget": int(token_budget),
        "mode": mode,
        "direction": by_code(model.languages, p),
        "marginal_benefits": by_code(model.languages, mb),
    }
