# apps/fitting/services/pipeline.py
"""
실험 기록 → ClimbModel 전체 파이프라인.

filter_tail → 언어별 fit_monolingual → ratio_pairs → fit_alpha_series(공유 η)
→ 균등 분해(b_ji = b̄_i, k_ji = k̄_i) 또는 쌍별 분해(pairwise) → fit_transfer
→ 전체 손실 예측 리포트 + 전이 없는 단일언어 법칙만의 리포트(isolated)

fit_with_holdout: 큰 예산 기록을 빼고 적합 → 빠진 기록에서 외삽 정확도
"""
from __future__ import annotations
import logging
from collections import defaultdict
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from apps.mixture.concurrency import ordered_map
from apps.mixture.domain import ClimbModel, ExperimentRecord, LanguageSet, ProportionVector, TransferParams
from apps.mixture.exceptions import InsufficientData, InvariantViolation, NonPositiveEffectiveRatio, SingularDesign
from apps.scaling.services.law import predicted_loss

from ..conf import EQUAL_SHARE_TOL, FitConfig
from ..domain import AlphaObservation, AlphaSeries, FitReport, PipelineResult, RatioPair
from .metrics import safe_goodness_of_fit
from .mono import filter_tail, fit_monolingual
from .transfer import fit_alpha_series, fit_transfer, ratio_pairs, resolve_pairwise_alpha

log = logging.getLogger(__name__)


def is_equal_share(record: ExperimentRecord, tol: float = EQUAL_SHARE_TOL) -> bool:
    """대상 언어 외 나머지가 (1 − r_i)/(m − 1) 로 균등한 다국어 기록인지."""
    i = record.language_index
    share = record.share
    m = len(record.mixture)
    if not 0.0 < share < 1.0 or m < 2:
        return False
    rest = (1.0 - share) / (m - 1)
    return all(abs(v - rest) <= tol for j, v in enumerate(record.mixture) if j != i)


def _languages_of(records: Sequence[ExperimentRecord], languages: Optional[LanguageSet]) -> LanguageSet:
    langs = languages or records[0].languages
    for r in records:
        if r.languages.codes != langs.codes:
            raise InvariantViolation(f"[{r.run_id}] language set {list(r.languages)} != {list(langs)}")
    return langs


def _ratio_report(code: str, series: AlphaSeries, pairs: List[RatioPair], delta: float) -> FitReport:
    residuals = np.concatenate([np.asarray(f.residuals) for f in series.fits])
    observed = np.array([p.ratio for p in pairs])
    predicted = observed - residuals
    r2, h = safe_goodness_of_fit(observed, predicted, delta)
    return FitReport(
        params={"eta": series.eta, "identifiable": series.identifiable,
                "alpha": {f"{f.tokens:.17g}": f.alpha_bar for f in series.fits}},
        r_squared=r2, huber=h, n_points=int(observed.size), converged=True,
        residuals=tuple(-residuals), stage="ratio", label=code,
        n_params=min(len(series.fits) + 1, int(observed.size)),
    )


def loss_report(model: ClimbModel, records: Sequence[ExperimentRecord], delta: float,
                stage: str, label: str = "all") -> FitReport:
    """기록별 예측 손실 vs 관측. 유효 비율이 양수가 아닌 기록은 건너뜀."""
    observed, predicted, skipped = [], [], 0
    for rec in records:
        try:
            predicted.append(predicted_loss(model, rec.mixture, rec.language_index, rec.tokens))
            observed.append(rec.val_loss)
        except NonPositiveEffectiveRatio:
            skipped += 1
    if skipped:
        log.warning("%s: %d records skipped (non-positive effective ratio)", stage, skipped)
    r2, h = safe_goodness_of_fit(observed, predicted, delta)
    return FitReport(
        params={"languages": list(model.languages.codes), "skipped": skipped},
        r_squared=r2, huber=h, n_points=len(observed), converged=True,
        residuals=tuple(np.asarray(predicted) - np.asarray(observed)), stage=stage, label=label,
    )


def _pairwise_observations(tail: Sequence[ExperimentRecord], mono, etas: Sequence[float]
                           ) -> Tuple[List[AlphaObservation], int]:
    """대상 언어·토큰 수마다 모든 다국어 기록으로 α_{j→i} 를 풂. (관측, 버린 기록 수)."""
    multi = [r for r in tail if 0.0 < r.share < 1.0]
    pairs = ratio_pairs(multi, mono, skip_invalid=True)
    grouped: Dict[Tuple[int, float], List[Tuple[ProportionVector, float]]] = defaultdict(list)
    for p in pairs:
        # 정규화 오차로 같은 토큰 수가 갈라지지 않게 12 자리로 묶음
        grouped[(p.language_index, float(f"{p.tokens:.12g}"))].append((p.record.mixture, p.ratio))
    out = []
    covered = set()
    for i, tokens in sorted(grouped):
        try:
            alphas = resolve_pairwise_alpha(grouped[(i, tokens)], i, etas[i])
        except SingularDesign:
            # 혼합이 한 종류뿐인 토큰 수 (다른 언어가 대상인 run 의 기록 등)
            continue
        covered.add(i)
        for j in sorted(alphas):
            out.append(AlphaObservation(j, i, max(int(round(tokens)), 1), alphas[j]))
    missing = sorted(set(range(len(etas))) - covered)
    if missing:
        raise InsufficientData(f"targets {missing}: no token count with a full-rank companion design (simulate with companion runs)")
    return out, len(multi) - len(pairs)


def fit_climb_model(records: Sequence[ExperimentRecord], config: Optional[FitConfig] = None,
                    languages: Optional[LanguageSet] = None) -> PipelineResult:
    config = config or FitConfig()
    if not records:
        raise InsufficientData("no records to fit")
    langs = _languages_of(records, languages)
    m = len(langs)
    tail = filter_tail(records, config.min_tail_fraction)
    log.info("fitting %d languages from %d tail records (of %d)", m, len(tail), len(records))

    # ---------- 1) 단일언어 ----------
    mono_sets = [[r for r in tail if r.language_index == i and r.share == 1.0] for i in range(m)]
    for i, rs in enumerate(mono_sets):
        if not rs:
            raise InsufficientData(f"{langs.codes[i]}: no monolingual records")
    mono_reports = ordered_map(lambda rs: fit_monolingual(rs, config), mono_sets, config.workers)
    mono = tuple(rep.params for rep in mono_reports)

    # ---------- 2) 상호작용 비율 + 공유 η ----------
    observations: List[AlphaObservation] = []
    ratio_reports: List[FitReport] = []
    etas = [1.0] * m
    identifiable = [False] * m
    dropped = 0
    if m >= 2:
        per_lang: List[List[RatioPair]] = []
        for i in range(m):
            multi = [r for r in tail if r.language_index == i and is_equal_share(r)]
            if not multi:
                raise InsufficientData(f"{langs.codes[i]}: no equal-share multilingual records")
            pairs = ratio_pairs(multi, mono, skip_invalid=True)
            if not pairs:
                raise InsufficientData(f"{langs.codes[i]}: every equal-share loss is at or below the fitted floor")
            dropped += len(multi) - len(pairs)
            per_lang.append(pairs)
        if dropped:
            log.warning("%d equal-share records dropped (loss at or below the fitted floor)", dropped)

        def series_for(i: int) -> AlphaSeries:
            grouped: Dict[float, List[RatioPair]] = defaultdict(list)
            for p in per_lang[i]:
                grouped[p.tokens].append(p)
            return fit_alpha_series(grouped, config, target_index=i)

        series_list = ordered_map(series_for, range(m), config.workers)
        for i, series in enumerate(series_list):
            code = langs.codes[i]
            etas[i] = series.eta
            identifiable[i] = series.identifiable
            ordered_pairs = sorted(per_lang[i], key=lambda p: p.tokens)
            ratio_reports.append(_ratio_report(code, series, ordered_pairs, config.delta))
            log.info("ratio %s: eta=%.6g identifiable=%s alphas=%s", code, series.eta, series.identifiable,
                     [round(f.alpha_bar, 6) for f in series.fits])
            if config.pairwise:
                continue
            # 균등 분해: 모든 소스 j 에 같은 ᾱ_i
            for f in series.fits:
                for j in range(m):
                    if j != i:
                        observations.append(AlphaObservation(j, i, max(int(round(f.tokens)), 1), f.alpha_bar))
        if config.pairwise:
            observations, _ = _pairwise_observations(tail, mono, etas)

    # ---------- 3) α(D) = b + k / D ----------
    transfer_report = None
    b = np.zeros((m, m))
    k = np.zeros((m, m))
    if observations:
        tf = fit_transfer(observations, config.delta)
        transfer_report = tf.report
        for (j, i), (bb, kk) in tf.pairs.items():
            b[i, j], k[i, j] = bb, kk
    model = ClimbModel(languages=langs, mono=mono, transfer=TransferParams.from_arrays(b, k, etas))

    # ---------- 4) 전체 손실 예측 ----------
    overall = loss_report(model, tail, config.delta, stage="overall")
    log.info("overall: R2=%.6f huber=%.3e over %d records", overall.r_squared, overall.huber, overall.n_points)
    isolated = None
    if m >= 2:
        isolated = loss_report(model.without_transfer(), tail, config.delta, stage="isolated")
        log.info("isolated: R2=%.6f huber=%.3e", isolated.r_squared, isolated.huber)

    return PipelineResult(
        model=model,
        mono_reports=tuple(mono_reports),
        ratio_reports=tuple(ratio_reports),
        transfer_report=transfer_report,
        overall_report=overall,
        alpha_observations=tuple(observations),
        eta_identifiable=tuple(identifiable),
        isolated_report=isolated,
        meta={"tail_records": len(tail), "records": len(records),
              "skipped_overall": overall.params["skipped"], "dropped_ratio_records": dropped,
              "config": config.snapshot()},
    )


def fit_with_holdout(records: Sequence[ExperimentRecord], holdout_budget: float,
                     config: Optional[FitConfig] = None, languages: Optional[LanguageSet] = None) -> PipelineResult:
    """token_budget < holdout_budget 로 적합, 나머지 꼬리 기록에서 외삽 R²/Huber."""
    config = config or FitConfig()
    held = [r for r in records if r.token_budget >= holdout_budget]
    train = [r for r in records if r.token_budget < holdout_budget]
    if not held:
        raise InsufficientData(f"no records at or above the holdout budget {holdout_budget:.6g}")
    if not train:
        raise InsufficientData(f"no records below the holdout budget {holdout_budget:.6g}")
    result = fit_climb_model(train, config, languages)
    held_tail = filter_tail(held, config.min_tail_fraction)
    report = loss_report(result.model, held_tail, config.delta, stage="holdout", label=f"D>={holdout_budget:.6g}")
    log.info("holdout D>=%.6g: R2=%.6f huber=%.3e over %d records",
             holdout_budget, report.r_squared, report.huber, report.n_points)
    return replace(result, holdout_report=report,
                   meta={**result.meta, "holdout_budget": float(holdout_budget), "holdout_records": len(held_tail)})
