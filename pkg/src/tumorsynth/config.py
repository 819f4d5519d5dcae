"""Configuration defaults, organ presets, and recipe sampling."""

from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from . import rng as rngmod
from .ca_engine import GrowthRules
from .ct_mapping import IntensityModel
from .errors import ConfigError
from .handcrafted import shape_for_volume
from .recipe import BACKENDS, ORGAN_PRESETS, LesionRecipe

# Values tagged "placeholder" are engineering choices made for this tool.
DEFAULT_CONFIG_YAML = """\
seed: 0
backend: cellular_automata
organ: liver
lesions_per_case: 1            # placeholder: lesions grown per case per epoch
target_diameter_mm: [5.0, 60.0]  # placeholder: equivalent-sphere diameter range, sampled uniformly
levels: 4                      # placeholder: organ map quantile bands
seed_margin_voxels: 2          # placeholder: min distance of a seed from organ boundary and vessels
max_organ_fraction: 0.25       # placeholder: lesion volume cap as a fraction of parenchyma volume

growth:                        # placeholder: probabilities and multipliers are not published
  p_grow: 0.6
  p_invade: 0.3
  invade_threshold: 10
  level_multiplier: [0.0, 0.25, 0.5, 0.75, 1.0]
  necrosis_depth: 3
  death_stall_steps: 25
  max_steps: 2000

intensity:
  necrosis_delta: -30.0        # placeholder
  texture_sigma: 10.0          # placeholder
  texture_scales: [2.0, 4.0]   # placeholder: value-noise wavelengths in voxels
  blend_halfwidth: 1           # placeholder
  capsule_enabled: true
  capsule_delta: 20.0          # placeholder
  capsule_min_radius_mm: 10.0  # placeholder: 20 mm equivalent diameter gate

mass_effect:
  strength: 1.0
  d_max: 3.0                   # placeholder: voxels
  onset_radius_mm: 1.5         # placeholder: no push below this equivalent radius
  full_radius_mm: 5.0          # placeholder: full push above this equivalent radius

shape:
  aspect_jitter: 0.25          # placeholder
  elastic_sigma_mm: 4.0        # placeholder
  elastic_amplitude: [0.0, 0.3]  # placeholder: sampled uniformly
  multifocal_probability: 0.05   # placeholder: multifocal cases are rare
  max_satellites: 3
  satellite_radius_mm: 40.0
  max_retries: 50

presets:
  liver:
    hu_range: [36.0, 162.0]    # hepatocellular carcinoma, mean 106 HU (range 36-162)
  pancreas:
    hu_range: [40.0, 90.0]     # placeholder: hypoattenuating vs. pancreatic parenchyma
  kidney:
    hu_range: [60.0, 130.0]    # placeholder: hypoattenuating vs. nephrographic-phase cortex
"""

DEFAULT_CONFIG = yaml.safe_load(DEFAULT_CONFIG_YAML)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, **overrides) -> dict:
    """Defaults, then the YAML file at ``path``, then keyword overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        config = _merge(config, loaded)
    config = _merge(config, {k: v for k, v in overrides.items() if v is not None})
    if config["backend"] not in BACKENDS:
        raise ConfigError(f"unknown backend {config['backend']!r}")
    if config["organ"] not in ORGAN_PRESETS:
        raise ConfigError(f"unknown organ preset {config['organ']!r}")
    return config


def make_recipe(config: dict, rng_seed: int, *, backend: str | None = None, organ: str | None = None,
                target_diameter_mm: float | None = None, seed_voxel=None) -> LesionRecipe:
    """Sample every per-lesion value from ``config`` with a stream keyed on ``rng_seed``."""
    backend = backend or config["backend"]
    organ = organ or config["organ"]
    gen = rngmod.generator(rng_seed, "recipe")
    lo, hi = config["target_diameter_mm"]
    diameter = target_diameter_mm if target_diameter_mm is not None else float(gen.uniform(lo, hi))
    volume = math.pi * diameter**3 / 6.0

    hu_range = tuple(config["presets"][organ]["hu_range"])
    icfg = config["intensity"]
    intensity = IntensityModel(
        hu_base=float(gen.uniform(*hu_range)),
        hu_range=hu_range,
        necrosis_delta=icfg["necrosis_delta"],
        texture_sigma=icfg["texture_sigma"],
        texture_scales=tuple(icfg["texture_scales"]),
        blend_halfwidth=icfg["blend_halfwidth"],
        capsule_enabled=icfg["capsule_enabled"],
        capsule_delta=icfg["capsule_delta"],
        capsule_min_radius_mm=icfg["capsule_min_radius_mm"],
    )
    rules = shape = None
    if backend == "cellular_automata":
        rules = GrowthRules(**config["growth"], rng_seed=rngmod.derive_seed(rng_seed, "automaton"))
    else:
        scfg = config["shape"]
        multifocal = 1
        if gen.uniform() < scfg["multifocal_probability"]:
            multifocal = 1 + int(gen.integers(1, scfg["max_satellites"] + 1))
        amp_lo, amp_hi = scfg["elastic_amplitude"]
        shape = shape_for_volume(
            volume, gen, scfg["aspect_jitter"], scfg["elastic_sigma_mm"], float(gen.uniform(amp_lo, amp_hi)), multifocal
        )
    me = config["mass_effect"]
    return LesionRecipe(
        backend=backend,
        organ_preset=organ,
        target_volume_mm3=volume,
        intensity=intensity,
        rng_seed=int(rng_seed),
        rules=rules,
        shape=shape,
        seed_voxel=seed_voxel,
        n_levels=int(config["levels"]),
        seed_margin_voxels=float(config["seed_margin_voxels"]),
        mass_effect_strength=float(me["strength"]),
        mass_effect_dmax=float(me["d_max"]),
        mass_effect_onset_mm=float(me["onset_radius_mm"]),
        mass_effect_full_mm=float(me["full_radius_mm"]),
        max_placement_retries=int(config["shape"]["max_retries"]),
        satellite_radius_mm=float(config["shape"]["satellite_radius_mm"]),
        max_organ_fraction=float(config["max_organ_fraction"]),
    )
