# apps/experiments/management/commands/simulate.py
from dataclasses import replace

from apps.experiments.services.io import emit_records, parse_budget, read_json, world_from_dict
from apps.experiments.services.manifest import RunManifest
from apps.synthetic.services.simulate import ExperimentDesign, simulate_experiments

from ._base import ClimbCommand


class Command(ClimbCommand):
    help = "Generate a synthetic experiment-log CSV from a world JSON."
    stage = "simulate"

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="world JSON")
        parser.add_argument("--output", required=True, help="records CSV path")
        parser.add_argument("--seed", type=int, help="override the world seed")
        parser.add_argument("--noise", type=float, help="override noise_sigma")
        parser.add_argument("--budgets", help="comma list of design budgets (default 20B,100B)")
        parser.add_argument("--proportions", help="comma list of target shares (default 0.25,0.6)")
        parser.add_argument("--companion-runs", action="store_true",
                            help="add target+next-language runs (m >= 3) for pairwise transfer fitting")
        parser.add_argument("--workers", type=int, default=1)

    def run(self, **opts):
        world = world_from_dict(read_json(opts["input"]))
        if opts.get("seed") is not None:
            world = replace(world, seed=opts["seed"])
        if opts.get("noise") is not None:
            world = replace(world, noise_sigma=opts["noise"])

        design = ExperimentDesign()
        if opts.get("budgets"):
            design = replace(design, budgets=tuple(parse_budget(b) for b in opts["budgets"].split(",")))
        if opts.get("proportions"):
            design = replace(design, proportions=tuple(float(c) for c in opts["proportions"].split(",")))
        if opts.get("companion_runs"):
            design = replace(design, companion_runs=True)

        records = simulate_experiments(world, design, workers=opts["workers"])
        out = opts["output"]
        self.ensure_parent(out)
        emit_records(records, out)
        RunManifest(command="simulate", inputs=[opts["input"]], outputs=[out],
                    config={"seed": world.seed, "noise_sigma": world.noise_sigma,
                            "budgets": list(design.budgets), "proportions": list(design.proportions),
                            "step_fractions": list(design.step_fractions),
                            "companion_runs": design.companion_runs}).write(out)
        self.done(f"Records saved: {out} ({len(records)} records)")
