# apps/experiments/management/commands/optimize.py
from apps.allocation.services.optimizer import optimize_allocation
from apps.allocation.services.oracle import grid_oracle
from apps.experiments.services.io import (
    model_from_dict, parse_budget, parse_mapping, parse_weights, read_json, write_json,
)
from apps.experiments.services.manifest import RunManifest, manifest_path_for
from apps.experiments.services.reports import allocation_to_dict

from ._base import ClimbCommand

REDUCTION_TOL = 1e-6


class Command(ClimbCommand):
    help = "Compute the optimal language allocation for a token budget."
    stage = "optimize"

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="model JSON")
        parser.add_argument("--budget", required=True, help="total tokens (K/M/B/T suffix ok)")
        parser.add_argument("--weights", help="code=omega,... (default uniform, missing = 0)")
        parser.add_argument("--rho", type=float, help="direction penalty weight")
        parser.add_argument("--seed", type=int, help="multi-start seed (default CLIMB_SEED)")
        parser.add_argument("--grid-res", type=float, help="also run the grid oracle at this resolution")
        parser.add_argument("--direction-mode", choices=["closed_form", "balanced"])
        parser.add_argument("--output", help="JSON output path (default: stdout)")
        parser.add_argument("--config", help="JSON with 'fit'/'optimizer' overrides")
        parser.add_argument("--workers", type=int, help="thread pool size")

    def run(self, **opts):
        _, opt_cfg = self.load_configs(opts)
        overrides = {"seed": opts["seed"] if opts.get("seed") is not None else opt_cfg.seed}
        if opts.get("rho") is not None:
            overrides["rho"] = opts["rho"]
        if opts.get("direction_mode"):
            overrides["direction_mode"] = opts["direction_mode"]
        opt_cfg = opt_cfg.with_overrides(overrides)

        model = model_from_dict(read_json(opts["model"]))
        D = parse_budget(opts["budget"])
        weights = parse_weights(parse_mapping(opts.get("weights")), model.languages)

        result = optimize_allocation(model, weights, D, opt_cfg)
        oracle = None
        if opts.get("grid_res"):
            self.stage = "oracle"
            oracle = grid_oracle(model, weights, D, opts["grid_res"], workers=opt_cfg.workers)
        payload = allocation_to_dict(model.languages, result, oracle)

        out = opts.get("output")
        if out:
            self.ensure_parent(out)
            payload["manifest"] = manifest_path_for(out).name
            write_json(out, payload)
            RunManifest(command="optimize", inputs=[opts["model"]], outputs=[out],
                        config={"optimizer": opt_cfg.snapshot(), "budget": D,
                                "weights": opts.get("weights"), "grid_res": opts.get("grid_res")}).write(out)
        else:
            self.echo_json(payload)
            return

        self.stdout.write(f"{'lang':>6} {'p':>10} {'r*':>10} {'r_eff':>10} {'loss':>12}")
        for i, code in enumerate(model.languages.codes):
            loss = result.predicted_losses[i]
            self.stdout.write(f"{code:>6} {result.direction[i]:>10.6f} {result.allocation[i]:>10.6f} "
                              f"{result.effective_ratios[i]:>10.6f} {'-' if loss is None else f'{loss:.8f}':>12}")
        gap = max(abs(a - p) for a, p in zip(result.allocation, result.direction))
        zero_transfer = not any(any(row) for row in model.transfer.b) and not any(any(row) for row in model.transfer.k)
        if zero_transfer:
            verdict = "PASS" if gap <= REDUCTION_TOL else "FAIL"
            self.stdout.write(f"zero-transfer check: max|r* - p| = {gap:.3e} [{verdict}]")
        else:
            self.stdout.write(f"max|r* - p| = {gap:.3e}")
        if oracle is not None and result.weighted_loss is not None:
            rel = (result.weighted_loss - oracle.best_objective) / oracle.best_objective
            self.stdout.write(f"grid oracle @ {oracle.resolution:g}: {oracle.best_objective:.12g} (relative gap {rel:.3e})")
        self.done(f"Allocation saved: {out}")
