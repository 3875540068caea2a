# apps/experiments/management/commands/fit.py
from apps.experiments.services.io import ingest_records, model_to_dict, parse_budget, write_json
from apps.experiments.services.manifest import RunManifest, manifest_path_for
from apps.experiments.services.reports import fit_meta, stage_frame
from apps.fitting.services.pipeline import fit_climb_model, fit_with_holdout
from apps.mixture.exceptions import InsufficientData

from ._base import ClimbCommand


class Command(ClimbCommand):
    help = "Fit a cross-lingual scaling model from an experiment-log CSV."
    stage = "fit"

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="experiment-log CSV")
        parser.add_argument("--output", required=True, help="model JSON path")
        parser.add_argument("--report", help="per-stage R2/Huber CSV")
        parser.add_argument("--delta", type=float, help="Huber delta (loss units)")
        parser.add_argument("--config", help="JSON with 'fit'/'optimizer' overrides")
        parser.add_argument("--workers", type=int, help="thread pool size")
        parser.add_argument("--pairwise", action="store_true",
                            help="resolve alpha per source from companion runs instead of the uniform split")
        parser.add_argument("--holdout-budget",
                            help="fit on smaller budgets only and report extrapolation to runs at or above this budget")

    def run(self, **opts):
        fit_cfg, _ = self.load_configs(opts)
        if opts.get("delta") is not None:
            fit_cfg = fit_cfg.with_overrides({"delta": opts["delta"]})
        if opts.get("pairwise"):
            fit_cfg = fit_cfg.with_overrides({"pairwise": True})

        records = ingest_records(opts["input"])
        if not records:
            raise InsufficientData(f"{opts['input']} has no records")
        if opts.get("holdout_budget"):
            result = fit_with_holdout(records, parse_budget(opts["holdout_budget"]), fit_cfg)
        else:
            result = fit_climb_model(records, fit_cfg)

        out = opts["output"]
        self.ensure_parent(out)
        payload = model_to_dict(result.model, fit_meta(result))
        payload["manifest"] = manifest_path_for(out).name
        write_json(out, payload)

        table = stage_frame(result)
        outputs = [out]
        if opts.get("report"):
            self.ensure_parent(opts["report"])
            table.to_csv(opts["report"], index=False, lineterminator="\n")
            outputs.append(opts["report"])
        RunManifest(command="fit", inputs=[opts["input"]], outputs=outputs,
                    config={"fit": fit_cfg.snapshot(), "holdout_budget": result.meta.get("holdout_budget")}).write(out)

        self.stdout.write(table.to_string(index=False))
        self.done(f"Model saved: {out} ({len(result.model.languages)} languages, {len(records)} records)")
