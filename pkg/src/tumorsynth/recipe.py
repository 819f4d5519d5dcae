"""Per-lesion recipe and synthesis result records."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .ca_engine import GrowthRules, StepReport
from .ct_mapping import IntensityModel
from .volume_io import MaskSet, Volume

BACKENDS = ("cellular_automata", "handcrafted")
ORGAN_PRESETS = ("liver", "pancreas", "kidney")


@dataclass
class ShapeSpec:
    """Perturbed-ellipsoid lesion shape; lengths in mm, angles in radians (z-y-x order)."""

    semiaxes_mm: tuple[float, float, float] = (5.0, 5.0, 5.0)
    euler_angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    elastic_sigma_mm: float = 4.0
    elastic_amplitude: float = 0.0
    multifocal_count: int = 1

    def __post_init__(self):
        self.semiaxes_mm = tuple(float(a) for a in self.semiaxes_mm)
        self.euler_angles = tuple(float(a) for a in self.euler_angles)
        if len(self.semiaxes_mm) != 3 or min(self.semiaxes_mm) <= 0:
            raise ValueError("semiaxes must be three positive lengths")
        if not 0.0 <= self.elastic_amplitude <= 0.5:
            raise ValueError("elastic_amplitude must lie in [0, 0.5]")
        if self.elastic_sigma_mm <= 0:
            raise ValueError("elastic_sigma_mm must be positive")
        if self.multifocal_count < 1:
            raise ValueError("multifocal_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "semiaxes_mm": list(self.semiaxes_mm),
            "euler_angles": list(self.euler_angles),
            "elastic_sigma_mm": self.elastic_sigma_mm,
            "elastic_amplitude": self.elastic_amplitude,
            "multifocal_count": self.multifocal_count,
        }


@dataclass
class LesionRecipe:
    """Everything needed to reproduce one synthetic lesion."""

    backend: str
    organ_preset: str
    target_volume_mm3: float
    intensity: IntensityModel
    rng_seed: int
    rules: GrowthRules | None = None
    shape: ShapeSpec | None = None
    seed_voxel: tuple[int, int, int] | None = None
    n_levels: int = 4
    seed_margin_voxels: float = 2.0
    mass_effect_strength: float = 1.0
    mass_effect_dmax: float = 3.0
    mass_effect_onset_mm: float = 1.5
    mass_effect_full_mm: float = 5.0
    max_placement_retries: int = 50
    satellite_radius_mm: float = 40.0
    max_organ_fraction: float = 0.25

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.organ_preset not in ORGAN_PRESETS:
            raise ValueError(f"organ_preset must be one of {ORGAN_PRESETS}")
        if (self.rules is None) == (self.shape is None):
            raise ValueError("exactly one of rules / shape must be set")
        if self.backend == "cellular_automata" and self.rules is None:
            raise ValueError("cellular_automata backend needs GrowthRules")
        if self.backend == "handcrafted" and self.shape is None:
            raise ValueError("handcrafted backend needs a ShapeSpec")
        if self.target_volume_mm3 <= 0:
            raise ValueError("target_volume_mm3 must be positive")
        if not 0.0 <= self.mass_effect_strength <= 1.0:
            raise ValueError("mass_effect_strength must lie in [0, 1]")
        if not 0.0 < self.max_organ_fraction <= 1.0:
            raise ValueError("max_organ_fraction must lie in (0, 1]")
        if self.seed_voxel is not None:
            self.seed_voxel = tuple(int(c) for c in self.seed_voxel)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "to_dict"):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LesionRecipe":
        d = dict(d)
        d["intensity"] = IntensityModel(**d["intensity"])
        if d.get("rules") is not None:
            d["rules"] = GrowthRules(**d["rules"])
        if d.get("shape") is not None:
            d["shape"] = ShapeSpec(**d["shape"])
        return cls(**d)


@dataclass(eq=False)
class SynthesisResult:
    image: Volume
    mask: Volume
    recipe_echo: LesionRecipe
    step_log: list[StepReport] = field(default_factory=list)
    anatomy: MaskSet | None = None
    died: bool = False
    case_id: str | None = None
