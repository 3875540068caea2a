# test/test_experiments.py
from __future__ import annotations
import json
from io import StringIO

import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from rest_framework.test import APIClient

from apps.allocation.conf import OptimizerConfig
from apps.experiments.services.io import (
    CSV_COLUMNS, emit_records, ingest_records, model_from_dict, model_to_dict, parse_budget, parse_mapping,
    parse_mixture, parse_weights, world_from_dict, world_to_dict,
)
from apps.experiments.services.reports import STAGE_COLUMNS, comparison_to_dict
from apps.fitting.conf import FitConfig
from apps.mixture.domain import ImportanceWeights, LanguageSet
from apps.mixture.exceptions import InvariantViolation, NonPositiveTokens, NotNormalized, ParseError
from apps.synthetic.services.benchmark import end_to_end
from apps.synthetic.services.simulate import ExperimentDesign, simulate_experiments

from .factories import (
    SMALL_DESIGN, small_world, two_language_model, write_world, zero_transfer_model,
)

HEADER = ",".join(CSV_COLUMNS)
LANGS = LanguageSet(("en", "zh", "es"))


def run(name, *args):
    out, err = StringIO(), StringIO()
    call_command(name, *args, stdout=out, stderr=err)
    return out.getvalue(), err.getvalue()


def write_csv(path, *rows):
    path.write_text("\n".join((HEADER,) + rows) + "\n", encoding="utf-8")
    return path


# ---------- 플래그 파싱 ----------
@pytest.mark.parametrize("text,expected", [
    ("1T", 10 ** 12), ("1.5B", 1_500_000_000), ("5e10", 50_000_000_000), ("20000", 20_000), ("2k", 2_000),
])
def test_parse_budget(text, expected):
    assert parse_budget(text) == expected


def test_parse_budget_rejects():
    for text in ("0", "-5", "0.1"):
        with pytest.raises(NonPositiveTokens):
            parse_budget(text)
    with pytest.raises(InvariantViolation):
        parse_budget("abc")


def test_parse_mapping_and_mixture():
    mapping = parse_mapping("en=0.5, es=0.5")
    assert list(mapping) == ["en", "es"]
    assert parse_mixture(mapping, LANGS).values == (0.5, 0.0, 0.5)
    with pytest.raises(NotNormalized):
        parse_mixture({"en": 0.7, "zh": 0.7}, LANGS)
    with pytest.raises(InvariantViolation, match="unknown"):
        parse_mixture({"fr": 1.0}, LANGS)
    with pytest.raises(InvariantViolation, match="duplicate"):
        parse_mapping("en=0.5,en=0.5")
    with pytest.raises(InvariantViolation):
        parse_mapping("en:0.5")


def test_parse_weights():
    assert parse_weights({}, LANGS).omega == (1.0, 1.0, 1.0)
    assert parse_weights(None, LANGS).omega == (1.0, 1.0, 1.0)
    assert parse_weights({"zh": 2.0}, LANGS).omega == (0.0, 2.0, 0.0)


# ---------- CSV ----------
def test_csv_round_trip_is_byte_identical(tmp_path):
    records = simulate_experiments(small_world(3, seed=0, noise_sigma=0.01), SMALL_DESIGN)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_records(records, first)
    back = ingest_records(first)
    emit_records(back, second)
    assert first.read_bytes() == second.read_bytes()
    assert [r.val_loss for r in back] == [r.val_loss for r in records]
    assert back[0].languages == records[0].languages


def test_csv_proportion_only_rows(tmp_path):
    path = write_csv(tmp_path / "r.csv",
                     "r1,1000,1,en,0.25,2.5",
                     "r1,1000,1,zh,0.75,")
    records = ingest_records(path)
    assert len(records) == 1
    assert records[0].mixture.values == (0.25, 0.75)
    assert records[0].languages.codes == ("en", "zh")


def test_csv_mixture_must_form_a_simplex(tmp_path):
    path = write_csv(tmp_path / "r.csv", "r1,1000,1,en,0.6,2.5", "r1,1000,1,zh,0.6,2.6")
    with pytest.raises(InvariantViolation, match=r"\[r1\]"):
        ingest_records(path)


def test_csv_header_only_is_empty(tmp_path):
    assert ingest_records(write_csv(tmp_path / "r.csv")) == []


def test_csv_parse_errors(tmp_path):
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("run,budget\nr1,10\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        ingest_records(bad_header)
    assert exc.value.line == 1

    bad_value = write_csv(tmp_path / "v.csv", "r1,1000,1,en,1.0,2.5", "r2,1000,1,en,1.0,abc")
    with pytest.raises(ParseError) as exc:
        ingest_records(bad_value)
    assert exc.value.line == 3

    dup = write_csv(tmp_path / "d.csv", "r1,1000,1,en,1.0,2.5", "r1,1000,1,en,1.0,2.4")
    with pytest.raises(ParseError, match="duplicate"):
        ingest_records(dup)

    empty = tmp_path / "e.csv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ParseError):
        ingest_records(empty)


# ---------- JSON ----------
def test_model_json_round_trip():
    model = two_language_model()
    data = json.loads(json.dumps(model_to_dict(model, {"note": "x"})))
    assert model_from_dict(data) == model
    assert data["transfer"]["b"][0][1] == 0.4


def test_world_json_round_trip():
    world = small_world(3, seed=4, noise_sigma=0.02)
    assert world_from_dict(json.loads(json.dumps(world_to_dict(world)))) == world


def test_model_json_rejects_mismatched_languages():
    data = model_to_dict(two_language_model())
    data["eta"].pop("zh")
    with pytest.raises(InvariantViolation, match="eta"):
        model_from_dict(data)
    data = model_to_dict(two_language_model())
    data["transfer"]["b"][0][0] = 0.1
    with pytest.raises(InvariantViolation, match="diagonal"):
        model_from_dict(data)


# ---------- 커맨드 ----------
def test_sample_world_command(tmp_path):
    out = tmp_path / "world.json"
    run("sample_world", "--m", "3", "--seed", "7", "--transfer", "aggregate", "--output", str(out))
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["seed"] == 7 and data["languages"] == ["en", "zh", "es"]
    manifest = json.loads((tmp_path / "world.json.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "sample_world" and manifest["config"]["transfer"] == "aggregate"


def test_command_chain(tmp_path):
    world = write_world(tmp_path / "world.json", small_world(3, seed=1))
    csv = tmp_path / "runs.csv"
    run("simulate", "--input", str(world), "--output", str(csv), "--budgets", "2000,10000")
    assert pd.read_csv(csv).columns.tolist() == CSV_COLUMNS

    model_a, model_b, report = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "stages.csv"
    stdout, _ = run("fit", "--input", str(csv), "--output", str(model_a), "--report", str(report))
    run("fit", "--input", str(csv), "--output", str(model_b), "--workers", "4")
    a = json.loads(model_a.read_text(encoding="utf-8"))
    b = json.loads(model_b.read_text(encoding="utf-8"))
    for key in ("languages", "mono", "transfer", "eta"):
        assert a[key] == b[key]
    assert pd.read_csv(report).columns.tolist() == STAGE_COLUMNS
    assert "overall" in stdout
    manifest = json.loads((tmp_path / "a.json.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "fit" and manifest["inputs"] == [str(csv)]

    stdout, _ = run("predict", "--model", str(model_a), "--budget", "10K", "--mixture", "en=0.5,zh=0.25,es=0.25")
    payload = json.loads(stdout)
    assert [row["language"] for row in payload["languages"]] == ["en", "zh", "es"]
    assert payload["token_budget"] == 10_000

    alloc = tmp_path / "alloc.json"
    stdout, _ = run("optimize", "--model", str(model_a), "--budget", "10K", "--grid-res", "0.05",
                    "--output", str(alloc))
    result = json.loads(alloc.read_text(encoding="utf-8"))
    assert abs(sum(result["allocation"].values()) - 1.0) <= 1e-9
    assert result["oracle"]["resolution"] == 0.05
    assert "grid oracle" in stdout


def test_optimize_zero_transfer_check_passes(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(model_to_dict(zero_transfer_model())), encoding="utf-8")
    stdout, _ = run("optimize", "--model", str(path), "--budget", "10B", "--output", str(tmp_path / "out.json"))
    assert "zero-transfer check" in stdout and "[PASS]" in stdout


def test_fit_command_reports_stage_on_bad_input(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("run,budget\nr1,10\n", encoding="utf-8")
    with pytest.raises(CommandError, match=r"\[fit\]"):
        run("fit", "--input", str(bad), "--output", str(tmp_path / "m.json"))


def test_benchmark_command_matches_in_process_run(tmp_path):
    world = small_world(3, seed=2)
    world_path = write_world(tmp_path / "world.json", world)
    args = ["--world", str(world_path), "--design-budgets", "2000,10000", "--budget", "10000", "--grid-res", "0.05"]
    first, second = tmp_path / "one.json", tmp_path / "two.json"
    stdout, _ = run("benchmark", *args, "--output", str(first), "--plot-data", str(tmp_path / "curves.csv"))
    run("benchmark", *args, "--output", str(second))
    assert first.read_bytes().replace(b"one.json", b"two.json") == second.read_bytes()
    assert "climb" in stdout and "oracle" in stdout

    _, _, report = end_to_end(world, ExperimentDesign(budgets=(2_000, 10_000)), FitConfig.from_settings(),
                              OptimizerConfig.from_settings(), token_budget=10_000, resolution=0.05,
                              weights=ImportanceWeights.uniform(3))
    expected = json.loads(json.dumps(comparison_to_dict(world.languages, report)))
    assert json.loads(first.read_text(encoding="utf-8"))["comparison"] == expected
    curves = pd.read_csv(tmp_path / "curves.csv")
    assert set(curves["model"]) == {"truth", "recovered"}


def test_benchmark_output_is_identical_across_worker_counts(tmp_path):
    world_path = write_world(tmp_path / "world.json", small_world(3, seed=5))
    args = ["--world", str(world_path), "--design-budgets", "2000,10000", "--budget", "10000", "--grid-res", "0.05"]
    reports, curves = [], []
    for workers in ("1", "2", "8"):
        out, plot = tmp_path / f"w{workers}.json", tmp_path / f"w{workers}.csv"
        run("benchmark", *args, "--workers", workers, "--output", str(out), "--plot-data", str(plot))
        reports.append(out.read_bytes().replace(f"w{workers}.json".encode(), b"bench.json"))
        curves.append(plot.read_bytes())
    assert reports[0] == reports[1] == reports[2]
    assert curves[0] == curves[1] == curves[2]
    assert "allocation" in set(pd.read_csv(tmp_path / "w1.csv")["curve"])


def test_fit_command_pairwise_and_holdout(tmp_path):
    world = write_world(tmp_path / "world.json", small_world(3, seed=4, transfer="pairwise"))
    csv = tmp_path / "runs.csv"
    run("simulate", "--input", str(world), "--output", str(csv), "--budgets", "2000,10000,50000",
        "--companion-runs")
    assert any("+" in run_id for run_id in pd.read_csv(csv)["run_id"])
    manifest = json.loads((tmp_path / "runs.csv.manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["companion_runs"] is True

    model, report = tmp_path / "model.json", tmp_path / "stages.csv"
    stdout, _ = run("fit", "--input", str(csv), "--output", str(model), "--report", str(report),
                    "--pairwise", "--holdout-budget", "50K")
    stages = pd.read_csv(report)["stage"].tolist()
    assert stages[-3:] == ["overall", "isolated", "holdout"]
    meta = json.loads(model.read_text(encoding="utf-8"))["fit_meta"]
    assert meta["config"]["pairwise"] is True
    assert meta["holdout_budget"] == 50_000.0
    assert "holdout" in stdout


# ---------- REST ----------
@pytest.fixture
def api():
    return APIClient()


def test_predict_endpoint(api):
    body = {"model": model_to_dict(two_language_model()), "budget": "1B", "mixture": {"en": 0.5, "zh": 0.5}}
    res = api.post("/api/climb/predict", body, format="json")
    assert res.status_code == 200
    rows = res.json()["languages"]
    assert rows[0]["effective_ratio"] == pytest.approx(0.626424112, abs=1e-9)
    assert rows[1]["effective_ratio"] == 0.5


def test_predict_endpoint_rejects_bad_mixture(api):
    body = {"model": model_to_dict(two_language_model()), "budget": "1B", "mixture": {"en": 0.7, "zh": 0.7}}
    res = api.post("/api/climb/predict", body, format="json")
    assert res.status_code == 400
    assert "detail" in res.json()
    res = api.post("/api/climb/predict", {"model": {}, "mixture": {}}, format="json")
    assert res.status_code == 400


def test_direction_endpoint(api):
    body = {"model": model_to_dict(zero_transfer_model()), "budget": "10B", "mode": "balanced"}
    res = api.post("/api/climb/direction", body, format="json")
    assert res.status_code == 200
    data = res.json()
    assert sum(data["direction"].values()) == pytest.approx(1.0, abs=1e-9)
    mb = list(data["marginal_benefits"].values())
    assert max(mb) == pytest.approx(min(mb), rel=1e-6)


def test_optimize_endpoint(api):
    body = {"model": model_to_dict(zero_transfer_model()), "budget": "10B", "rho": 1.0, "grid_res": 0.05,
            "weights": {"en": 1.0, "zh": 1.0, "es": 1.0}}
    res = api.post("/api/climb/optimize", body, format="json")
    assert res.status_code == 200
    data = res.json()
    for code in ("en", "zh", "es"):
        assert data["allocation"][code] == pytest.approx(data["direction"][code], abs=1e-6)
    assert data["oracle"]["evaluated_count"] > 0


def test_schema_endpoint(api):
    assert api.get("/api/schema/").status_code == 200
