# apps/experiments/services/reports.py
"""결과 객체 → JSON/표 변환 (커맨드와 REST 뷰 공용)."""
from __future__ import annotations
from typing import Any, Dict, List, Optional

import pandas as pd

from apps.allocation.services.oracle import GridOracleResult
from apps.fitting.domain import FitReport, PipelineResult
from apps.mixture.domain import AllocationResult, LanguageSet, ProportionVector
from apps.synthetic.services.benchmark import ComparisonReport

from .io import fmt

STAGE_COLUMNS = ["stage", "label", "r_squared", "huber", "n_points", "converged"]


def by_code(languages: LanguageSet, values) -> Dict[str, Any]:
    return {c: (None if v is None else float(v)) for c, v in zip(languages.codes, values)}


def mixture_dict(languages: LanguageSet, mixture: ProportionVector) -> Dict[str, float]:
    return by_code(languages, mixture.values)


def oracle_to_dict(languages: LanguageSet, oracle: GridOracleResult) -> Dict[str, Any]:
    return {
        "best_mixture": mixture_dict(languages, oracle.best_mixture),
        "best_objective": oracle.best_objective,
        "resolution": oracle.resolution,
        "evaluated_count": oracle.evaluated_count,
    }


def allocation_to_dict(languages: LanguageSet, result: AllocationResult,
                       oracle: Optional[GridOracleResult] = None) -> Dict[str, Any]:
    out = {
        "token_budget": result.token_budget,
        "rho": result.rho,
        "direction": by_code(languages, result.direction),
        "allocation": mixture_dict(languages, result.allocation),
        "effective_ratios": by_code(languages, result.effective_ratios),
        "predicted_losses": by_code(languages, result.predicted_losses),
        "objective_value": result.objective_value,
        "weighted_loss": result.weighted_loss,
        "starts": result.starts,
        "converged": result.converged,
        "refined": result.refined,
    }
    if oracle is not None:
        out["oracle"] = oracle_to_dict(languages, oracle)
    return out


def stage_rows(fit: PipelineResult) -> List[Dict[str, Any]]:
    def row(rep: FitReport) -> Dict[str, Any]:
        return {"stage": rep.stage, "label": rep.label, "r_squared": rep.r_squared,
                "huber": rep.huber, "n_points": rep.n_points, "converged": rep.converged}
    return [row(r) for r in fit.stage_reports()]


def stage_frame(fit: PipelineResult) -> pd.DataFrame:
    df = pd.DataFrame(stage_rows(fit), columns=STAGE_COLUMNS)
    df["r_squared"] = df["r_squared"].map(fmt)
    df["huber"] = df["huber"].map(fmt)
    return df


def fit_meta(fit: PipelineResult) -> Dict[str, Any]:
    codes = fit.model.languages.codes
    return {
        "stages": stage_rows(fit),
        "eta_identifiable": {c: bool(v) for c, v in zip(codes, fit.eta_identifiable)},
        "alpha_observations": [
            {"source": codes[o.source_index], "target": codes[o.target_index],
             "token_budget": o.token_budget, "alpha_hat": o.alpha_hat}
            for o in fit.alpha_observations
        ],
        **fit.meta,
    }


def comparison_to_dict(languages: LanguageSet, report: ComparisonReport) -> Dict[str, Any]:
    return {
        "token_budget": report.token_budget,
        "resolution": report.resolution,
        "oracle": oracle_to_dict(languages, report.oracle),
        "strategies": [
            {"name": s.name, "allocation": mixture_dict(languages, s.allocation),
             "weighted_loss": s.weighted_loss, "regret": s.regret}
            for s in report.strategies
        ],
        "recovery": report.recovery.as_dict() if report.recovery is not None else None,
        "fit_r_squared": report.fit_r_squared,
        "isolated_r_squared": report.isolated_r_squared,
    }
