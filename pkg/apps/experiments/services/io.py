# apps/experiments/services/io.py
"""
파일 포맷.

CSV  : run_id,token_budget,step_fraction,language,proportion,val_loss  ((run, step, language) 당 한 행)
       val_loss 가 빈 칸이면 비율만 있는 행 (해당 언어는 기록 없음)
JSON : 모델 / 월드. 행렬은 [target][source] (α_{j→i} = b[i][j])
실수는 17 유효숫자(CSV), JSON 은 float repr (최단 왕복 표현) → 무손실
"""
from __future__ import annotations
import json
from collections import OrderedDict
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from apps.mixture.domain import (
    ClimbModel, ExperimentRecord, ImportanceWeights, LanguageSet, MonoScalingParams,
    ProportionVector, TransferParams, make_proportion,
)
from apps.mixture.exceptions import (
    ClimbError, InvariantViolation, NonPositiveTokens, ParseError,
)
from apps.synthetic.services.world import WorldSpec

from ..serializers import ModelFileSerializer, RecordRowSerializer, WorldFileSerializer

CSV_COLUMNS = ["run_id", "token_budget", "step_fraction", "language", "proportion", "val_loss"]
INDEX_CONVENTION = "transfer.b[i][j] and transfer.k[i][j] hold alpha_{j->i}: row = target i, column = source j"

BUDGET_SUFFIXES = {"K": 10 ** 3, "M": 10 ** 6, "B": 10 ** 9, "T": 10 ** 12}


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------- 플래그 파싱 ----------
def parse_budget(text: Any) -> int:
    """'1T', '5e10', '1.5B', 20000000000 → 정수 토큰 수."""
    raw = str(text).strip()
    mult = 1
    if raw and raw[-1].upper() in BUDGET_SUFFIXES:
        mult = BUDGET_SUFFIXES[raw[-1].upper()]
        raw = raw[:-1]
    try:
        value = Decimal(raw) * mult
    except InvalidOperation:
        raise InvariantViolation(f"invalid token budget {text!r}") from None
    if not value.is_finite() or value < 1:
        raise NonPositiveTokens(f"token budget must be >= 1, got {text!r}")
    return int(value.to_integral_value())


def parse_mapping(text: Optional[str]) -> "OrderedDict[str, float]":
    """'en=0.5,zh=0.5' → {'en': 0.5, 'zh': 0.5}"""
    out: "OrderedDict[str, float]" = OrderedDict()
    if not text:
        return out
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise InvariantViolation(f"expected code=value, got {part!r}")
        code, val = (s.strip() for s in part.split("=", 1))
        if code in out:
            raise InvariantViolation(f"duplicate language {code!r}")
        try:
            out[code] = float(val)
        except ValueError:
            raise InvariantViolation(f"invalid number for {code!r}: {val!r}") from None
    return out


def _by_language(mapping: Dict[str, float], languages: LanguageSet, what: str) -> List[float]:
    unknown = [c for c in mapping if c not in languages]
    if unknown:
        raise InvariantViolation(f"unknown languages in {what}: {unknown} (known: {list(languages)})")
    return [float(mapping.get(c, 0.0)) for c in languages]


def parse_mixture(mapping: Dict[str, float], languages: LanguageSet) -> ProportionVector:
    """빠진 언어는 0."""
    return make_proportion(_by_language(mapping, languages, "mixture"))


def parse_weights(mapping: Optional[Dict[str, float]], languages: LanguageSet) -> ImportanceWeights:
    """비어 있으면 균등, 아니면 빠진 언어는 0."""
    if not mapping:
        return ImportanceWeights.uniform(len(languages))
    return ImportanceWeights(tuple(_by_language(mapping, languages, "weights")))


# ---------- 실험 로그 CSV ----------
def ingest_records(path: str | Path) -> List[ExperimentRecord]:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty (header required)", line=1) from None
    except pd.errors.ParserError as e:
        raise ParseError(str(e), line=None) from e
    if list(df.columns) != CSV_COLUMNS:
        raise ParseError(f"header must be {','.join(CSV_COLUMNS)}, got {','.join(map(str, df.columns))}", line=1)
    if df.empty:
        return []

    rows = []
    for idx, raw in enumerate(df.to_dict(orient="records")):
        line = idx + 2
        data = {k: (v.strip() if isinstance(v, str) else v) for k, v in raw.items()}
        if data["val_loss"] == "":
            data["val_loss"] = None
        s = RecordRowSerializer(data=data)
        if not s.is_valid():
            raise ParseError("; ".join(f"{k}: {' '.join(map(str, v))}" for k, v in s.errors.items()), line=line)
        rows.append((line, s.validated_data))

    # 언어 순서 = 파일에서 처음 등장한 순서
    codes: List[str] = []
    for _, row in rows:
        if row["language"] not in codes:
            codes.append(row["language"])
    languages = LanguageSet(tuple(codes))

    groups: "OrderedDict[Tuple[str, float], Dict[str, Any]]" = OrderedDict()
    for line, row in rows:
        key = (row["run_id"], row["step_fraction"])
        g = groups.setdefault(key, {"token_budget": row["token_budget"], "shares": {}, "first_line": line})
        if g["token_budget"] != row["token_budget"]:
            raise InvariantViolation(f"[{row['run_id']}] step {row['step_fraction']}: token_budget differs across rows (line {line})")
        if row["language"] in g["shares"]:
            raise ParseError(f"duplicate row for {row['run_id']} step {row['step_fraction']} {row['language']}", line=line)
        g["shares"][row["language"]] = row["proportion"]

    mixtures: Dict[Tuple[str, float], ProportionVector] = {}
    for key, g in groups.items():
        try:
            mixtures[key] = make_proportion([g["shares"].get(c, 0.0) for c in codes])
        except ClimbError as e:
            raise InvariantViolation(f"[{key[0]}] step {key[1]}: proportions do not form a simplex ({e})") from e

    records = []
    for line, row in rows:
        if row["val_loss"] is None:
            continue
        key = (row["run_id"], row["step_fraction"])
        try:
            records.append(ExperimentRecord(
                run_id=row["run_id"], token_budget=row["token_budget"], step_fraction=row["step_fraction"],
                mixture=mixtures[key], language=row["language"], val_loss=row["val_loss"], languages=languages,
            ))
        except ClimbError as e:
            raise InvariantViolation(f"line {line}: {e}") from e
    return records


def records_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    """(run, step) 마다 모든 언어 한 행씩, 기록 없는 언어는 val_loss 빈 칸."""
    groups: "OrderedDict[Tuple[str, float], Dict[str, Any]]" = OrderedDict()
    for rec in records:
        g = groups.setdefault((rec.run_id, rec.step_fraction), {"rec": rec, "losses": {}})
        g["losses"][rec.language] = rec.val_loss
    rows = []
    for (run_id, step), g in groups.items():
        first: ExperimentRecord = g["rec"]
        for j, code in enumerate(first.languages.codes):
            loss = g["losses"].get(code)
            rows.append([run_id, str(first.token_budget), fmt(step), code, fmt(first.mixture[j]),
                         "" if loss is None else fmt(loss)])
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_records(records: Sequence[ExperimentRecord], path: str | Path) -> None:
    records_frame(records).to_csv(path, index=False, lineterminator="\n")


# ---------- JSON ----------
def write_json(path: str | Path, payload: Dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from e


def model_to_dict(model: ClimbModel, fit_meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    codes = list(model.languages.codes)
    t = model.transfer
    return {
        "languages": codes,
        "mono": {c: {"B": p.B, "beta": p.beta, "E": p.E} for c, p in zip(codes, model.mono)},
        "transfer": {"b": [list(r) for r in t.b], "k": [list(r) for r in t.k]},
        "eta": {c: e for c, e in zip(codes, t.eta)},
        "index_convention": INDEX_CONVENTION,
        "fit_meta": fit_meta or {},
    }


def _validated(serializer_cls, data: Dict[str, Any]) -> Dict[str, Any]:
    s = serializer_cls(data=data)
    if not s.is_valid():
        raise InvariantViolation(f"invalid model file: {s.errors}")
    return s.validated_data


def _model_from_validated(v: Dict[str, Any]) -> ClimbModel:
    codes = tuple(v["languages"])
    langs = LanguageSet(codes)
    mono = tuple(MonoScalingParams(**dict(v["mono"][c])) for c in codes)
    transfer = TransferParams(
        b=tuple(tuple(r) for r in v["transfer"]["b"]),
        k=tuple(tuple(r) for r in v["transfer"]["k"]),
        eta=tuple(v["eta"][c] for c in codes),
    )
    return ClimbModel(languages=langs, mono=mono, transfer=transfer)


def model_from_dict(data: Dict[str, Any]) -> ClimbModel:
    return _model_from_validated(_validated(ModelFileSerializer, data))


def world_to_dict(world: WorldSpec) -> Dict[str, Any]:
    out = model_to_dict(world.ground_truth)
    out.pop("fit_meta")
    out["noise_sigma"] = world.noise_sigma
    out["seed"] = world.seed
    return out


def world_from_dict(data: Dict[str, Any]) -> WorldSpec:
    v = _validated(WorldFileSerializer, data)
    model = _model_from_validated(v)
    return WorldSpec(languages=model.languages, ground_truth=model, noise_sigma=v["noise_sigma"], seed=v["seed"])
