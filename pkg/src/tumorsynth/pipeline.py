"""End-to-end synthesis, per-epoch streaming over a manifest, and result I/O."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from . import rng as rngmod
from .ca_engine import grow_lesion, sample_seed
from .config import make_recipe
from .ct_mapping import render
from .errors import DimensionMismatch, ManifestRowInvalid, SynthesisError
from .handcrafted import synthesize_handcrafted
from .interaction import mass_effect_field, warp, warp_masks
from .quantize import build_organ_map
from .recipe import LesionRecipe, SynthesisResult
from .volume_io import MaskSet, Volume, VolumeKind, label_volume, load_volume, save_volume

log = logging.getLogger(__name__)

__all__ = ["LesionRecipe", "SynthesisResult", "ManifestRow", "synthesize", "epoch_stream", "read_manifest",
           "case_seed", "write_result"]


def _synthesize_ca(ct: Volume, masks: MaskSet, recipe: LesionRecipe) -> SynthesisResult:
    organ_map = build_organ_map(ct, masks, recipe.n_levels)
    if recipe.seed_voxel is None:
        gen = rngmod.generator(recipe.rng_seed, "seed")
        seed_voxel = sample_seed(masks, organ_map, gen, recipe.seed_margin_voxels)
        recipe = LesionRecipe.from_dict({**recipe.to_dict(), "seed_voxel": seed_voxel})
    tumor, reports = grow_lesion(ct, masks, recipe, organ_map)
    died = reports[-1].died
    if tumor.density.any():
        field = mass_effect_field(
            tumor, masks, recipe.mass_effect_strength, recipe.mass_effect_dmax,
            onset_radius_mm=recipe.mass_effect_onset_mm, full_radius_mm=recipe.mass_effect_full_mm,
        )
        moved_ct = warp(ct, field, "trilinear")
        anatomy = warp_masks(masks, field)
    else:
        moved_ct, anatomy = ct, masks
    image = render(moved_ct, tumor, recipe.intensity, rngmod.derive_seed(recipe.rng_seed, "texture"))
    return SynthesisResult(
        image=image,
        mask=label_volume(tumor.mask, ct.spacing),
        recipe_echo=recipe,
        step_log=reports,
        anatomy=anatomy,
        died=died,
    )


def fit_to_organ(recipe: LesionRecipe, masks: MaskSet) -> LesionRecipe:
    """Cap the target volume at ``max_organ_fraction`` of the parenchyma volume.

    Handcrafted shapes are scaled isotropically to the capped volume. The
    returned recipe is the one echoed, so reruns see the capped value.
    """
    parenchyma = int((masks.organ_array & ~masks.vessel_array).sum())
    cap = recipe.max_organ_fraction * parenchyma * masks.organ.voxel_volume
    if recipe.target_volume_mm3 <= cap or cap <= 0:
        return recipe
    log.info("target %.0f mm3 exceeds %.0f%% of the organ; capping at %.0f mm3",
             recipe.target_volume_mm3, 100 * recipe.max_organ_fraction, cap)
    d = recipe.to_dict()
    if recipe.shape is not None:
        factor = (cap / recipe.target_volume_mm3) ** (1.0 / 3.0)
        d["shape"]["semiaxes_mm"] = [a * factor for a in recipe.shape.semiaxes_mm]
    d["target_volume_mm3"] = cap
    return LesionRecipe.from_dict(d)


def synthesize(ct: Volume, masks: MaskSet, recipe: LesionRecipe) -> SynthesisResult:
    """Grow (or shape) one lesion and composite it into ``ct``.

    The CT and anatomy masks are pushed by the mass-effect field first and the
    lesion is rendered on the pushed CT; the lesion mask itself is never
    warped, so it is exact.
    """
    if ct.kind is not VolumeKind.HU_INT16:
        raise DimensionMismatch("CT must be an HU_INT16 volume", stage="pipeline")
    if ct.dims != masks.dims:
        raise DimensionMismatch(f"CT {ct.dims} vs masks {masks.dims}", stage="pipeline")
    recipe = fit_to_organ(recipe, masks)
    if recipe.backend == "cellular_automata":
        return _synthesize_ca(ct, masks, recipe)
    return synthesize_handcrafted(ct, masks, recipe)


# ---------------------------------------------------------------------------
# Manifest streaming


@dataclass(frozen=True)
class ManifestRow:
    case_id: str
    ct_path: str
    organ_path: str
    vessel_path: str | None = None


def read_manifest(path) -> list[ManifestRow]:
    """Parse ``case_id,ct_path,organ_path[,vessel_path]`` rows; relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    rows = []
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            fields = [f.strip() for f in fields]
            if not fields or not fields[0] or fields[0].startswith("#"):
                continue
            if fields[0] == "case_id":
                continue
            if len(fields) not in (3, 4) or not all(fields[:3]):
                err = ManifestRowInvalid(f"{path}:{lineno}: expected 3 or 4 fields, got {len(fields)}")
                log.warning("skipping manifest row: %s", err)
                continue
            resolve = lambda p: str(p if Path(p).is_absolute() else base / p)
            vessel = resolve(fields[3]) if len(fields) == 4 and fields[3] else None
            rows.append(ManifestRow(fields[0], resolve(fields[1]), resolve(fields[2]), vessel))
    return rows


def case_seed(global_seed: int, epoch: int, case_id: str, lesion_index: int = 0) -> int:
    """Per-case seed; keyed on the case id so row order and row subsets don't matter."""
    return rngmod.mix(global_seed, epoch, rngmod.stable_hash(case_id), lesion_index)


def load_case(row: ManifestRow) -> tuple[Volume, MaskSet]:
    ct = load_volume(row.ct_path)
    organ = load_volume(row.organ_path)
    vessels = load_volume(row.vessel_path) if row.vessel_path else None
    if organ.dims != ct.dims:
        raise DimensionMismatch(f"organ mask {organ.dims} vs CT {ct.dims}")
    return ct, MaskSet(organ, vessels)


def synthesize_row(row: ManifestRow, config: dict, epoch: int) -> list[SynthesisResult]:
    ct, masks = load_case(row)
    results = []
    for k in range(int(config.get("lesions_per_case", 1))):
        recipe = make_recipe(config, case_seed(int(config["seed"]), epoch, row.case_id, k))
        result = synthesize(ct, masks, recipe)
        result.case_id = row.case_id if k == 0 else f"{row.case_id}_l{k}"
        results.append(result)
    return results


def epoch_stream(manifest, config: dict, epoch: int) -> Iterator[SynthesisResult]:
    """Yield fresh, reproducible lesions for every manifest row.

    Rows that fail to load or synthesize are logged and skipped.
    """
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    for row in rows:
        try:
            results = synthesize_row(row, config, epoch)
        except SynthesisError as exc:
            log.warning("skipping case %s: %s", row.case_id, exc)
            continue
        yield from results


def write_result(result: SynthesisResult, out_dir) -> dict:
    """Write ``<case>_img.rvol``, ``<case>_msk.rvol`` and ``<case>_recipe.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    case = result.case_id or "case"
    paths = {
        "image": out_dir / f"{case}_img.rvol",
        "mask": out_dir / f"{case}_msk.rvol",
        "recipe": out_dir / f"{case}_recipe.json",
    }
    save_volume(result.image, paths["image"])
    save_volume(result.mask, paths["mask"])
    echo = {
        "case_id": case,
        "recipe": result.recipe_echo.to_dict(),
        "died": result.died,
        "steps": len(result.step_log) - 1 if result.step_log else 0,
        "final_report": result.step_log[-1].to_dict() if result.step_log else None,
    }
    paths["recipe"].write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return paths
