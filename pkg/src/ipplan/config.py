"""Runtime settings for the planners, overridable from a TOML file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .allocation import AllocationConfig
from .cmaes import CmaesConfig
from .errors import ValidationError
from .refine import RefineConfig

# Sigmoid sharpness defaults to this many inverse lengthscales, keeping the
# coverage transition narrow at the kernel's natural scale.
ALPHA_LENGTHSCALES = 10.0


@dataclass(frozen=True)
class Settings:
    allocation: AllocationConfig = field(default_factory=AllocationConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    cmaes: CmaesConfig = field(default_factory=CmaesConfig)
    alpha_lengthscales: float = ALPHA_LENGTHSCALES
    trajectory_samples: int = 64  # dense rows per segment in trajectory.csv

    def alpha_for(self, lengthscale: float) -> float:
        return self.alpha_lengthscales / lengthscale


def _apply_section(obj, section: dict, name: str):
    fields = {f.name for f in dataclasses.fields(obj)}
    unknown = set(section) - fields
    if unknown:
        raise ValidationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return replace(obj, **section)


def settings_from_dict(d: dict) -> Settings:
    known = {"allocation", "refine", "cmaes", "pipeline"}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    s = Settings()
    if "allocation" in d:
        s = replace(s, allocation=_apply_section(s.allocation, d["allocation"], "allocation"))
    if "refine" in d:
        s = replace(s, refine=_apply_section(s.refine, d["refine"], "refine"))
    if "cmaes" in d:
        s = replace(s, cmaes=_apply_section(s.cmaes, d["cmaes"], "cmaes"))
    pipe = d.get("pipeline", {})
    extra = set(pipe) - {"alpha_lengthscales", "trajectory_samples"}
    if extra:
        raise ValidationError(f"unknown keys in [pipeline]: {sorted(extra)}")
    return replace(s, **pipe)


def load_settings(path) -> Settings:
    with open(Path(path), "rb") as f:
        return settings_from_dict(tomllib.load(f))


def settings_to_dict(s: Settings) -> dict:
    return {
        "allocation": dataclasses.asdict(s.allocation),
        "refine": dataclasses.asdict(s.refine),
        "cmaes": dataclasses.asdict(s.cmaes),
        "pipeline": {
            "alpha_lengthscales": s.alpha_lengthscales,
            "trajectory_samples": s.trajectory_samples,
        },
    }
