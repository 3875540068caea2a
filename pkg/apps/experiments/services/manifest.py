# apps/experiments/services/manifest.py
from __future__ import annotations
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from django.conf import settings
from django.utils import timezone

from .io import write_json


def manifest_path_for(output: str | Path) -> Path:
    p = Path(output)
    return p.with_name(p.name + ".manifest.json")


@dataclass
class RunManifest:
    """
    산출물마다 하나. 타임스탬프는 여기에만 → 같은 입력이면 주 산출물은 바이트 단위로 동일.
    """
    command: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    version: str = field(default_factory=lambda: getattr(settings, "CLIMB_VERSION", "0"))
    timestamp: str = field(default_factory=lambda: timezone.now().isoformat())

    def write(self, primary_output: str | Path) -> Path:
        path = manifest_path_for(primary_output)
        write_json(path, asdict(self))
        return path
