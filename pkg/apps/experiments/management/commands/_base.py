# apps/experiments/management/commands/_base.py
from __future__ import annotations
import json
from pathlib import Path
from typing import Any, Dict, Tuple

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.allocation.conf import OptimizerConfig
from apps.fitting.conf import FitConfig
from apps.mixture.exceptions import ClimbError, StageError
from apps.experiments.services.io import read_json


class ClimbCommand(BaseCommand):
    """ClimbError → CommandError("[stage] ...") → 0 이 아닌 종료 코드."""
    stage = "run"

    def handle(self, *args, **opts):
        try:
            return self.run(**opts)
        except StageError as e:
            raise CommandError(str(e)) from e
        except ClimbError as e:
            raise CommandError(f"[{self.stage}] {e}") from e
        except OSError as e:
            raise CommandError(f"[io] {e}") from e

    def run(self, **opts):
        raise NotImplementedError

    # ---------- 공통 옵션 ----------
    def load_configs(self, opts: Dict[str, Any]) -> Tuple[FitConfig, OptimizerConfig]:
        fit_cfg = FitConfig.from_settings()
        opt_cfg = OptimizerConfig.from_settings()
        path = opts.get("config")
        if path:
            data = read_json(path)
            unknown = set(data) - {"fit", "optimizer"}
            if unknown:
                raise ClimbError(f"unknown config sections: {sorted(unknown)}")
            fit_cfg = fit_cfg.with_overrides(data.get("fit") or {})
            opt_cfg = opt_cfg.with_overrides(data.get("optimizer") or {})
        if opts.get("workers"):
            fit_cfg = fit_cfg.with_overrides({"workers": opts["workers"]})
            opt_cfg = opt_cfg.with_overrides({"workers": opts["workers"]})
        return fit_cfg, opt_cfg

    @staticmethod
    def default_seed() -> int:
        return int(getattr(settings, "CLIMB_SEED", 42))

    def echo_json(self, payload: Dict[str, Any]) -> None:
        self.stdout.write(json.dumps(payload, indent=2, ensure_ascii=False))

    def done(self, message: str) -> None:
        self.stderr.write(self.style.SUCCESS(message))

    @staticmethod
    def ensure_parent(path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
