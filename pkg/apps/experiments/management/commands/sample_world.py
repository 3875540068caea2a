# apps/experiments/management/commands/sample_world.py
from apps.experiments.services.io import world_to_dict, write_json
from apps.experiments.services.manifest import RunManifest, manifest_path_for
from apps.synthetic.conf import TRANSFER_MODES
from apps.synthetic.services.world import sample_world

from ._base import ClimbCommand


class Command(ClimbCommand):
    help = "Sample a ground-truth world from the documented parameter ranges."
    stage = "sample_world"

    def add_arguments(self, parser):
        parser.add_argument("--m", type=int, required=True, help="number of languages (>= 2)")
        parser.add_argument("--seed", type=int, help="default CLIMB_SEED")
        parser.add_argument("--noise", type=float, default=0.0, help="noise_sigma stored in the world")
        parser.add_argument("--transfer", choices=TRANSFER_MODES, default="pairwise")
        parser.add_argument("--output", required=True, help="world JSON path")

    def run(self, **opts):
        seed = opts["seed"] if opts.get("seed") is not None else self.default_seed()
        world = sample_world(opts["m"], seed, noise_sigma=opts["noise"], transfer=opts["transfer"])
        out = opts["output"]
        self.ensure_parent(out)
        payload = world_to_dict(world)
        payload["manifest"] = manifest_path_for(out).name
        write_json(out, payload)
        RunManifest(command="sample_world", outputs=[out],
                    config={"m": opts["m"], "seed": seed, "noise_sigma": opts["noise"],
                            "transfer": opts["transfer"]}).write(out)
        self.done(f"World saved: {out} (m={opts['m']}, seed={seed})")
