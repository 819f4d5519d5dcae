"""Cellular-automaton tumor growth.

One step is a synchronous update in four phases: proliferation, invasion,
phase classification, and necrosis. Proliferation and invasion read only the
pre-step densities. Classification and necrosis describe the post-step
densities (the phase grid is derived state, plus the absorbing Necrotic flag).

Random draws are keyed per voxel, per step, per phase through
:mod:`tumorsynth.rng`, so results do not depend on scan order or on the
sub-window the engine happens to update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import rng as rngmod
from .errors import DimensionMismatch, InvalidRules, NoEligibleSeed, SeedOutsideOrgan
from .quantize import MAX_DENSITY, OrganMap, Phase, TumorMap, build_organ_map, init_tumor_map
from .volume_io import MaskSet, Volume

log = logging.getLogger(__name__)

# x+, x-, y+, y-, z+, z-; invasion draws use phase code 1 + direction index
NEIGHBOR_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
PHASE_PROLIFERATE = 0
PHASE_INVADE = 1

_SIX = ndimage.generate_binary_structure(3, 1)


@dataclass
class GrowthRules:
    """Automaton parameters.

    The probability and multiplier defaults are placeholders chosen for
    plausible growth speed; they are not published values.
    """

    p_grow: float = 0.6
    p_invade: float = 0.3
    invade_threshold: int = 10
    level_multiplier: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    necrosis_depth: int = 3
    death_stall_steps: int = 25
    max_steps: int = 2000
    rng_seed: int = 0

    def __post_init__(self):
        self.level_multiplier = tuple(float(m) for m in self.level_multiplier)
        self.validate()

    def validate(self) -> None:
        if not (0.0 <= self.p_grow <= 1.0 and 0.0 <= self.p_invade <= 1.0):
            raise InvalidRules("probabilities must lie in [0, 1]")
        if not self.level_multiplier or self.level_multiplier[0] != 0.0:
            raise InvalidRules("level_multiplier[0] must be 0")
        if any(not 0.0 <= m <= 1.0 for m in self.level_multiplier):
            raise InvalidRules("level multipliers must lie in [0, 1]")
        if not 1 <= self.invade_threshold <= MAX_DENSITY:
            raise InvalidRules("invade_threshold must lie in [1, 10]")
        if self.max_steps < 1:
            raise InvalidRules("max_steps must be >= 1")
        if self.necrosis_depth < 1 or self.death_stall_steps < 1:
            raise InvalidRules("necrosis_depth and death_stall_steps must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level_multiplier"] = list(self.level_multiplier)
        return d


@dataclass
class StepReport:
    step: int
    tumor_voxels: int
    saturated_voxels: int
    necrotic_voxels: int
    grew: bool
    died: bool = False
    target_unreachable: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _report(step_index, density, phase, grew) -> StepReport:
    return StepReport(
        step=step_index,
        tumor_voxels=int(np.count_nonzero(density)),
        saturated_voxels=int(np.count_nonzero(density == MAX_DENSITY)),
        necrotic_voxels=int(np.count_nonzero(phase == Phase.NECROTIC)),
        grew=grew,
    )


def classify_phases(density: np.ndarray, prev_phase: np.ndarray, levels: np.ndarray, necrosis_depth: int) -> np.ndarray:
    """Active/Quiescent/Necrotic labels for a density grid.

    Active cells touch an empty organ voxel through a face. Saturated
    Quiescent cells whose taxicab distance to the nearest unsaturated voxel
    (grid exterior included) reaches ``necrosis_depth`` become Necrotic.
    Necrotic cells in ``prev_phase`` stay Necrotic.
    """
    tumor = density > 0
    phase = np.zeros(density.shape, dtype=np.uint8)
    if not tumor.any():
        return phase
    free = (density == 0) & (levels >= 1)
    exposed = ndimage.binary_dilation(free, structure=_SIX)
    phase[tumor] = Phase.QUIESCENT
    phase[tumor & exposed] = Phase.ACTIVE
    phase[prev_phase == Phase.NECROTIC] = Phase.NECROTIC
    sat = density == MAX_DENSITY
    candidates = sat & (phase == Phase.QUIESCENT)
    if candidates.any():
        depth = ndimage.distance_transform_cdt(np.pad(sat, 1), metric="taxicab")[1:-1, 1:-1, 1:-1]
        phase[candidates & (depth >= necrosis_depth)] = Phase.NECROTIC
    return phase


def _advance(density, phase, levels, rules: GrowthRules, step_index: int, origin, grid_dims):
    """One synchronous step on a window whose corner sits at ``origin`` in the full grid."""
    mult_table = np.asarray(rules.level_multiplier, dtype=np.float64)
    if levels.max(initial=0) >= len(mult_table):
        raise InvalidRules(f"organ has level {int(levels.max())} but only {len(mult_table)} multipliers")
    seed = rules.rng_seed
    ox, oy, oz = origin
    shape = density.shape
    new = density.copy()

    def global_index(ix, iy, iz):
        return rngmod.linear_index((ix + ox, iy + oy, iz + oz), grid_dims).astype(np.uint64)

    if rules.p_grow > 0:
        ix, iy, iz = np.nonzero((density > 0) & (density < MAX_DENSITY))
        if ix.size:
            p = rules.p_grow * mult_table[levels[ix, iy, iz]]
            u = rngmod.uniform_array(seed, step_index, PHASE_PROLIFERATE, global_index(ix, iy, iz))
            hit = u < p
            new[ix[hit], iy[hit], iz[hit]] += 1

    if rules.p_invade > 0:
        sx, sy, sz = np.nonzero(density >= rules.invade_threshold)
        if sx.size:
            src_index = global_index(sx, sy, sz)
            invaded = np.zeros(shape, dtype=bool)
            for k, (dx, dy, dz) in enumerate(NEIGHBOR_OFFSETS):
                tx, ty, tz = sx + dx, sy + dy, sz + dz
                ok = (tx >= 0) & (tx < shape[0]) & (ty >= 0) & (ty < shape[1]) & (tz >= 0) & (tz < shape[2])
                tx, ty, tz, si = tx[ok], ty[ok], tz[ok], src_index[ok]
                lv = levels[tx, ty, tz]
                ok = (density[tx, ty, tz] == 0) & (lv >= 1)
                if not ok.any():
                    continue
                tx, ty, tz, si, lv = tx[ok], ty[ok], tz[ok], si[ok], lv[ok]
                u = rngmod.uniform_array(seed, step_index, PHASE_INVADE + k, si)
                hit = u < rules.p_invade * mult_table[lv]
                invaded[tx[hit], ty[hit], tz[hit]] = True
            new[invaded] = 1

    new_phase = classify_phases(new, phase, levels, rules.necrosis_depth)
    grew = not np.array_equal(new, density)
    return new, new_phase, grew


def step(tumor: TumorMap, organ: OrganMap | np.ndarray, rules: GrowthRules, step_index: int) -> tuple[TumorMap, StepReport]:
    """Advance the whole grid by one step. The RNG state is ``(rules.rng_seed, step_index)``."""
    levels = organ.levels if isinstance(organ, OrganMap) else np.asarray(organ)
    if levels.shape != tumor.dims:
        raise DimensionMismatch(f"tumor {tumor.dims} vs organ {levels.shape}", stage="ca_engine")
    density, phase, grew = _advance(tumor.density, tumor.phase, levels, rules, step_index, (0, 0, 0), tumor.dims)
    return TumorMap(density, phase), _report(step_index, density, phase, grew)


def _window(lo, hi, dims, margin):
    return tuple(slice(max(0, a - margin), min(n, b + 1 + margin)) for a, b, n in zip(lo, hi, dims))


def grow(
    organ: OrganMap,
    seed_voxel,
    rules: GrowthRules,
    target_voxels: int,
) -> tuple[TumorMap, list[StepReport]]:
    """Run the automaton from ``seed_voxel`` until ``target_voxels`` cells exist, it stalls, or max_steps.

    Steps only touch the tumor bounding box plus a two-voxel margin, which
    is enough for invasion and for classifying freshly invaded cells.
    """
    levels = organ.levels
    dims = levels.shape
    tumor = init_tumor_map(dims, seed_voxel, levels)
    density, phase = tumor.density, tumor.phase
    lo = list(int(c) for c in seed_voxel)
    hi = list(lo)
    reachable = int(np.count_nonzero(levels))
    unreachable = target_voxels > reachable
    if unreachable:
        log.warning("target of %d voxels exceeds organ capacity of %d; growing to exhaustion", target_voxels, reachable)

    reports = [_report(0, density, phase, False)]
    count = 1
    stall = 0
    step_index = 0
    while count < target_voxels and step_index < rules.max_steps:
        step_index += 1
        win = _window(lo, hi, dims, 2)
        origin = tuple(s.start for s in win)
        d_new, p_new, grew = _advance(density[win], phase[win], levels[win], rules, step_index, origin, dims)
        density[win] = d_new
        phase[win] = p_new
        rep = _report(step_index, d_new, p_new, grew)
        reports.append(rep)
        count = rep.tumor_voxels
        if grew:
            stall = 0
            nz = np.nonzero(d_new)
            for axis in range(3):
                lo[axis] = origin[axis] + int(nz[axis].min())
                hi[axis] = origin[axis] + int(nz[axis].max())
        else:
            stall += 1
            if stall >= rules.death_stall_steps:
                rep.died = True
                log.info("lesion stalled for %d steps at %d voxels; declared dead", stall, count)
                break
    reports[-1].target_unreachable = unreachable
    return TumorMap(density, phase), reports


def target_voxel_count(target_volume_mm3: float, spacing) -> int:
    return max(1, math.ceil(target_volume_mm3 / float(np.prod(spacing)) - 1e-9))


def grow_lesion(ct: Volume, masks: MaskSet, recipe, organ_map: OrganMap | None = None) -> tuple[TumorMap, list[StepReport]]:
    """Grow one lesion described by ``recipe`` (needs seed_voxel, target_volume_mm3, rules, n_levels)."""
    if recipe.target_volume_mm3 <= 0:
        raise ValueError("target_volume_mm3 must be positive")
    if organ_map is None:
        organ_map = build_organ_map(ct, masks, recipe.n_levels)
    seed = tuple(recipe.seed_voxel)
    if organ_map.levels[seed] < 1:
        raise SeedOutsideOrgan(f"seed {seed} is not on organ parenchyma", stage="ca_engine")
    return grow(organ_map, seed, recipe.rules, target_voxel_count(recipe.target_volume_mm3, ct.spacing))


def seed_candidates(masks: MaskSet, organ_map: OrganMap, min_margin_voxels: float) -> np.ndarray:
    """Coordinates (N, 3) of voxels eligible as lesion seeds, in x-fastest order."""
    levels = organ_map.levels
    organ = levels >= 1
    if not organ.any():
        raise NoEligibleSeed("organ map has no parenchyma")
    nz = np.nonzero(organ)
    win = tuple(slice(max(0, int(a.min()) - 1), min(n, int(a.max()) + 2)) for a, n in zip(nz, levels.shape))
    blockers = masks.boundary.data[win].astype(bool) | masks.vessel_array[win]
    if blockers.any():
        dist = ndimage.distance_transform_edt(~blockers)
    else:
        dist = np.full(blockers.shape, np.inf)
    ok = organ[win] & (dist >= min_margin_voxels)
    coords = np.argwhere(ok.transpose(2, 1, 0))[:, ::-1]
    return coords + np.array([s.start for s in win])


def sample_seed(masks: MaskSet, organ_map: OrganMap, rng: np.random.Generator, min_margin_voxels: float = 0) -> tuple[int, int, int]:
    """Uniformly pick a parenchyma voxel at least ``min_margin_voxels`` from boundary and vessels."""
    coords = seed_candidates(masks, organ_map, min_margin_voxels)
    if len(coords) == 0:
        raise NoEligibleSeed(f"no organ voxel is {min_margin_voxels} voxels from boundary and vessels")
    return tuple(int(c) for c in coords[rng.integers(len(coords))])
