# apps/experiments/management/commands/predict.py
from apps.experiments.services.io import (
    model_from_dict, parse_budget, parse_mapping, parse_mixture, parse_weights, read_json, write_json,
)
from apps.experiments.services.manifest import RunManifest, manifest_path_for
from apps.experiments.services.predictions import predict_languages

from ._base import ClimbCommand


class Command(ClimbCommand):
    help = "Predict per-language validation loss for a mixture and token budget."
    stage = "predict"

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="model JSON")
        parser.add_argument("--budget", required=True, help="total tokens (K/M/B/T suffix ok)")
        parser.add_argument("--mixture", required=True, help="code=share,... (missing languages = 0)")
        parser.add_argument("--weights", help="code=omega,... for the weighted loss (default uniform)")
        parser.add_argument("--output", help="JSON output path (default: stdout)")

    def run(self, **opts):
        model = model_from_dict(read_json(opts["model"]))
        D = parse_budget(opts["budget"])
        mixture = parse_mixture(parse_mapping(opts["mixture"]), model.languages)
        weights = parse_weights(parse_mapping(opts.get("weights")), model.languages)
        payload = predict_languages(model, mixture, D, weights)

        out = opts.get("output")
        if not out:
            self.echo_json(payload)
            return
        self.ensure_parent(out)
        payload["manifest"] = manifest_path_for(out).name
        write_json(out, payload)
        RunManifest(command="predict", inputs=[opts["model"]], outputs=[out],
                    config={"budget": D, "mixture": opts["mixture"], "weights": opts.get("weights")}).write(out)
        for row in payload["languages"]:
            self.stdout.write(f"{row['language']:>6}  r={row['proportion']:.6f}  "
                              f"r_eff={row['effective_ratio']:.6f}  loss={row['loss']}")
        self.done(f"Prediction saved: {out}")
