"""Hand-crafted lesion backend: place, shape, texture, post-process."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from . import rng as rngmod
from .ca_engine import classify_phases, seed_candidates
from .ct_mapping import _lattice, render
from .errors import DegenerateShape, PlacementFailed
from .interaction import mass_effect_field, warp, warp_masks
from .quantize import MAX_DENSITY, OrganMap, TumorMap
from .recipe import LesionRecipe, ShapeSpec, SynthesisResult
from .volume_io import MaskSet, Volume, label_volume

log = logging.getLogger(__name__)

MAX_EXTENT_MM = 160.0
_SIX = ndimage.generate_binary_structure(3, 1)


def _surface_noise(directions: np.ndarray, frequency: float, seed: int) -> np.ndarray:
    """Smooth noise in [-1, 1] over unit directions (N, 3); ``frequency`` is lattice cells per unit radius."""
    pts = directions * frequency
    lo = np.floor(pts.min(axis=0)).astype(int) - 1
    hi = np.floor(pts.max(axis=0)).astype(int) + 2
    # shift so lattice coordinates are non-negative; absolute position only matters per seed
    shift = -lo
    lattice = _lattice(seed, 0, (0, 0, 0), hi - lo + 1)
    return ndimage.map_coordinates(lattice, (pts + shift).T, order=1, mode="nearest")


def generate_shape(spec: ShapeSpec, spacing=(1.0, 1.0, 1.0), seed: int = 0, max_extent_mm: float = MAX_EXTENT_MM) -> np.ndarray:
    """Rasterize a rotated, radially perturbed ellipsoid on a lesion-local grid.

    The grid has odd size along every axis and the lesion center sits on its
    middle voxel. A voxel is inside when its normalized ellipsoid radius is at
    most ``1 + amplitude * n(direction)``; only the 6-connected component
    holding the center is kept.
    """
    spacing = np.asarray(spacing, dtype=np.float64)
    reach_mm = max(spec.semiaxes_mm) * (1.0 + spec.elastic_amplitude)
    if 2.0 * reach_mm > max_extent_mm:
        raise DegenerateShape(f"lesion extent {2 * reach_mm:.1f} mm exceeds {max_extent_mm} mm")
    half = np.ceil(reach_mm / spacing).astype(int) + 1
    axes = [np.arange(-h, h + 1) * s for h, s in zip(half, spacing)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rot = Rotation.from_euler("zyx", spec.euler_angles).as_matrix()
    local = grid @ rot  # row vectors: x_local = R^T x
    semi = np.asarray(spec.semiaxes_mm)
    rho = np.sqrt(((local / semi) ** 2).sum(axis=-1))
    limit = np.ones_like(rho)
    if spec.elastic_amplitude > 0:
        norm = np.linalg.norm(local, axis=-1)
        dirs = np.zeros_like(local)
        nz = norm > 0
        dirs[nz] = local[nz] / norm[nz, None]
        frequency = float(np.mean(semi)) / spec.elastic_sigma_mm
        noise = _surface_noise(dirs.reshape(-1, 3), frequency, seed).reshape(rho.shape)
        limit = 1.0 + spec.elastic_amplitude * noise
    mask = rho <= limit
    center = tuple(half)
    if not mask[center]:
        raise DegenerateShape("lesion center fell outside its own shape")
    labels, _ = ndimage.label(mask, structure=_SIX)
    mask = labels == labels[center]
    if mask.sum() == 0:
        raise DegenerateShape("empty lesion mask")
    return mask


def _place(shape: np.ndarray, center, dims) -> tuple[tuple[slice, ...], tuple[slice, ...]] | None:
    """Slices (volume, shape) placing the shape's middle voxel at ``center``; None if it leaves the grid."""
    vol_sl, shp_sl = [], []
    for c, n, m in zip(center, dims, shape.shape):
        start = int(c) - m // 2
        if start < 0 or start + m > n:
            # the shape box may overhang the grid as long as no lesion voxel does
            s0, s1 = max(0, -start), min(m, n - start)
            axis = len(vol_sl)
            proj = shape.any(axis=tuple(a for a in range(3) if a != axis))
            if proj[:s0].any() or proj[s1:].any():
                return None
            vol_sl.append(slice(start + s0, start + s1))
            shp_sl.append(slice(s0, s1))
        else:
            vol_sl.append(slice(start, start + m))
            shp_sl.append(slice(0, m))
    return tuple(vol_sl), tuple(shp_sl)


def _fits(shape, center, allowed) -> tuple | None:
    placed = _place(shape, center, allowed.shape)
    if placed is None:
        return None
    vol_sl, shp_sl = placed
    piece = shape[shp_sl]
    if np.any(piece & ~allowed[vol_sl]):
        return None
    return placed


def shape_for_volume(target_volume_mm3: float, rng: np.random.Generator, aspect_jitter: float = 0.25,
                     elastic_sigma_mm: float = 4.0, elastic_amplitude: float = 0.0, multifocal_count: int = 1) -> ShapeSpec:
    """ShapeSpec with random aspect ratios and orientation whose unperturbed volume matches the target."""
    r_eq = (3.0 * target_volume_mm3 / (4.0 * math.pi)) ** (1.0 / 3.0)
    ratios = rng.uniform(1.0 - aspect_jitter, 1.0 + aspect_jitter, size=3)
    ratios /= np.prod(ratios) ** (1.0 / 3.0)
    angles = rng.uniform(-math.pi, math.pi, size=3)
    return ShapeSpec(
        semiaxes_mm=tuple(float(r_eq * q) for q in ratios),
        euler_angles=tuple(float(a) for a in angles),
        elastic_sigma_mm=elastic_sigma_mm,
        elastic_amplitude=elastic_amplitude,
        multifocal_count=multifocal_count,
    )


def place_lesions(masks: MaskSet, recipe: LesionRecipe) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Rejection-sample the primary (and satellite) placements; returns the union mask and primary center."""
    spec = recipe.shape
    dims = masks.dims
    allowed = masks.organ_array & ~masks.vessel_array
    shape = generate_shape(spec, masks.spacing, rngmod.derive_seed(recipe.rng_seed, "shape"))
    lesion = np.zeros(dims, dtype=bool)

    if recipe.seed_voxel is not None:
        center = recipe.seed_voxel
        placed = _fits(shape, center, allowed)
        if placed is None:
            raise PlacementFailed(f"lesion at {center} leaves the organ or touches a vessel")
    else:
        organ_map = build_organ_map_from_masks(masks)
        candidates = seed_candidates(masks, organ_map, recipe.seed_margin_voxels)
        if len(candidates) == 0:
            raise PlacementFailed("no seed candidates in organ")
        gen = rngmod.generator(recipe.rng_seed, "placement")
        placed = None
        for _ in range(recipe.max_placement_retries):
            center = tuple(int(c) for c in candidates[gen.integers(len(candidates))])
            placed = _fits(shape, center, allowed)
            if placed is not None:
                break
        if placed is None:
            raise PlacementFailed(f"no valid placement after {recipe.max_placement_retries} attempts")
    vol_sl, shp_sl = placed
    lesion[vol_sl] |= shape[shp_sl]

    if spec.multifocal_count > 1:
        gen = rngmod.generator(recipe.rng_seed, "satellites")
        spacing = np.asarray(masks.spacing)
        for k in range(spec.multifocal_count - 1):
            factor = gen.uniform(0.25, 0.5)
            sat_spec = ShapeSpec(
                semiaxes_mm=tuple(a * factor for a in spec.semiaxes_mm),
                euler_angles=tuple(gen.uniform(-math.pi, math.pi, size=3)),
                elastic_sigma_mm=spec.elastic_sigma_mm,
                elastic_amplitude=spec.elastic_amplitude,
            )
            sat = generate_shape(sat_spec, masks.spacing, rngmod.derive_seed(recipe.rng_seed, "satellite", k))
            for _ in range(recipe.max_placement_retries):
                direction = gen.normal(size=3)
                direction /= np.linalg.norm(direction)
                dist = recipe.satellite_radius_mm * gen.uniform() ** (1.0 / 3.0)
                c = np.rint(np.asarray(center) + direction * dist / spacing).astype(int)
                placed = _fits(sat, c, allowed)
                if placed is not None:
                    lesion[placed[0]] |= sat[placed[1]]
                    break
            else:
                log.info("satellite %d could not be placed; skipping", k + 1)
    return lesion, tuple(int(c) for c in center)


def build_organ_map_from_masks(masks: MaskSet) -> OrganMap:
    """Two-level map marking parenchyma; seed eligibility ignores intensity."""
    levels = (masks.organ_array & ~masks.vessel_array).astype(np.uint8)
    return OrganMap(levels, 1, (), masks.spacing)


def saturated_tumor(lesion: np.ndarray, levels: np.ndarray | None = None) -> TumorMap:
    """Density 10 on the lesion mask with Active/Quiescent phases (no necrosis)."""
    density = np.where(lesion, MAX_DENSITY, 0).astype(np.uint8)
    if levels is None:
        levels = np.ones(lesion.shape, dtype=np.uint8)
    phase = classify_phases(density, np.zeros_like(density), levels, necrosis_depth=1 << 30)
    return TumorMap(density, phase)


def synthesize_handcrafted(ct: Volume, masks: MaskSet, recipe: LesionRecipe) -> SynthesisResult:
    """Place a shaped lesion, push surrounding anatomy, and render it into the CT."""
    lesion, center = place_lesions(masks, recipe)
    tumor = saturated_tumor(lesion, masks.organ.data)
    field = mass_effect_field(
        tumor, masks, recipe.mass_effect_strength, recipe.mass_effect_dmax,
        onset_radius_mm=recipe.mass_effect_onset_mm, full_radius_mm=recipe.mass_effect_full_mm,
    )
    moved_ct = warp(ct, field, "trilinear")
    anatomy = warp_masks(masks, field)
    image = render(moved_ct, tumor, recipe.intensity, rngmod.derive_seed(recipe.rng_seed, "texture"))
    echo = LesionRecipe.from_dict({**recipe.to_dict(), "seed_voxel": center})
    return SynthesisResult(image=image, mask=label_volume(lesion, ct.spacing), recipe_echo=echo, anatomy=anatomy)
