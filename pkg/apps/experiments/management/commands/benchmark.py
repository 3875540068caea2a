# apps/experiments/management/commands/benchmark.py
from dataclasses import replace

import numpy as np
import pandas as pd

from apps.experiments.services.io import (
    fmt, model_to_dict, parse_budget, parse_mapping, parse_weights, read_json, world_from_dict,
    world_to_dict, write_json,
)
from apps.experiments.services.manifest import RunManifest, manifest_path_for
from apps.experiments.services.reports import allocation_to_dict, comparison_to_dict
from apps.synthetic.conf import BENCHMARK_BUDGET, BENCHMARK_RESOLUTION, TRANSFER_MODES
from apps.synthetic.services.benchmark import allocation_curves, end_to_end, loss_curves, ratio_curves
from apps.synthetic.services.simulate import ExperimentDesign
from apps.synthetic.services.world import sample_world

from ._base import ClimbCommand

# r̃-vs-r 곡선용 r 격자 (0, 1) 양 끝 제외
RATIO_GRID = tuple(np.round(np.linspace(0.02, 0.98, 49), 10).tolist())
# loss-vs-budget 곡선용 예산 배수
BUDGET_MULTIPLIERS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
PLOT_COLUMNS = ["model", "curve", "language", "token_budget", "x", "y"]


class Command(ClimbCommand):
    help = "Run simulate -> fit -> optimize -> compare on a synthetic world."
    stage = "benchmark"

    def add_arguments(self, parser):
        parser.add_argument("--m", type=int, default=3, help="number of languages (ignored with --world)")
        parser.add_argument("--seed", type=int, help="world seed (default CLIMB_SEED)")
        parser.add_argument("--noise", type=float, help="noise_sigma (default 0, or the world file value)")
        parser.add_argument("--transfer", choices=TRANSFER_MODES, default="pairwise")
        parser.add_argument("--world", help="world JSON to use instead of sampling one")
        parser.add_argument("--design-budgets", help="comma list of simulated run budgets (default 20B,100B)")
        parser.add_argument("--budget", default=str(BENCHMARK_BUDGET), help="allocation budget (K/M/B/T ok)")
        parser.add_argument("--grid-res", type=float, default=BENCHMARK_RESOLUTION)
        parser.add_argument("--rho", type=float)
        parser.add_argument("--weights", help="code=omega,... (default uniform)")
        parser.add_argument("--output", required=True, help="report JSON path")
        parser.add_argument("--plot-data", help="curves CSV path")
        parser.add_argument("--config", help="JSON with 'fit'/'optimizer' overrides")
        parser.add_argument("--workers", type=int, help="thread pool size")

    def _world(self, opts):
        if opts.get("world"):
            world = world_from_dict(read_json(opts["world"]))
            if opts.get("seed") is not None:
                world = replace(world, seed=opts["seed"])
            if opts.get("noise") is not None:
                world = replace(world, noise_sigma=opts["noise"])
            return world
        seed = opts["seed"] if opts.get("seed") is not None else self.default_seed()
        noise = opts["noise"] if opts.get("noise") is not None else 0.0
        return sample_world(opts["m"], seed, noise_sigma=noise, transfer=opts["transfer"])

    def run(self, **opts):
        fit_cfg, opt_cfg = self.load_configs(opts)
        if opts.get("rho") is not None:
            opt_cfg = opt_cfg.with_overrides({"rho": opts["rho"]})
        D = parse_budget(opts["budget"])
        design = ExperimentDesign()
        if opts.get("design_budgets"):
            design = replace(design, budgets=tuple(parse_budget(b) for b in opts["design_budgets"].split(",")))

        world = self._world(opts)
        weights = parse_weights(parse_mapping(opts.get("weights")), world.languages)
        recovered, allocation, report = end_to_end(
            world, design, fit_cfg, opt_cfg, token_budget=D, resolution=opts["grid_res"], weights=weights,
        )

        langs = world.languages
        out = opts["output"]
        self.ensure_parent(out)
        payload = {
            "world": world_to_dict(world),
            "recovered": model_to_dict(recovered),
            "allocation": allocation_to_dict(langs, allocation),
            "comparison": comparison_to_dict(langs, report),
            "manifest": manifest_path_for(out).name,
        }
        write_json(out, payload)
        outputs = [out]

        if opts.get("plot_data"):
            rows = []
            budgets = [D * k for k in BUDGET_MULTIPLIERS]
            for name, model in (("truth", world.ground_truth), ("recovered", recovered)):
                for row in loss_curves(model, allocation.allocation, budgets) + \
                        ratio_curves(model, design.budgets, RATIO_GRID) + \
                        allocation_curves(model, weights, budgets, opt_cfg):
                    rows.append({"model": name, **row})
            df = pd.DataFrame(rows, columns=PLOT_COLUMNS)
            for col in ("token_budget", "x", "y"):
                df[col] = df[col].map(fmt)
            self.ensure_parent(opts["plot_data"])
            df.to_csv(opts["plot_data"], index=False, lineterminator="\n")
            outputs.append(opts["plot_data"])

        RunManifest(command="benchmark", inputs=[opts["world"]] if opts.get("world") else [], outputs=outputs,
                    config={"m": len(langs), "seed": world.seed, "noise_sigma": world.noise_sigma,
                            "transfer": None if opts.get("world") else opts["transfer"], "budget": D,
                            "grid_res": opts["grid_res"], "design_budgets": list(design.budgets),
                            "fit": fit_cfg.snapshot(), "optimizer": opt_cfg.snapshot()}).write(out)

        self.stdout.write(f"{'strategy':>10} {'loss':>16} {'regret':>12}")
        for s in report.strategies:
            loss = "-" if s.weighted_loss is None else f"{s.weighted_loss:.12g}"
            regret = "-" if s.regret is None else f"{s.regret:.3e}"
            self.stdout.write(f"{s.name:>10} {loss:>16} {regret:>12}")
        self.stdout.write(f"{'oracle':>10} {report.oracle.best_objective:>16.12g}")
        if report.recovery is not None:
            self.stdout.write(f"recovery worst relative error: {report.recovery.worst:.3e}")
        self.done(f"Report saved: {out}")
