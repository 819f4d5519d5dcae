"""Organ map (quantized tissue levels) and tumor map initialization."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyOrgan, SeedOutsideOrgan
from .volume_io import MaskSet, Volume, VolumeKind

log = logging.getLogger(__name__)

MAX_DENSITY = 10


class Phase(enum.IntEnum):
    EMPTY = 0
    ACTIVE = 1
    QUIESCENT = 2
    NECROTIC = 3


@dataclass(frozen=True, eq=False)
class OrganMap:
    """Per-voxel tissue level; 0 blocks growth (outside organ or vessel)."""

    levels: np.ndarray
    n_levels: int
    thresholds: tuple[float, ...]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def dims(self):
        return self.levels.shape

    def to_volume(self) -> Volume:
        return Volume(self.levels, self.spacing, VolumeKind.LABEL_U8)


@dataclass(eq=False)
class TumorMap:
    """Tumor cell density (0..10) and phase code per voxel."""

    density: np.ndarray
    phase: np.ndarray

    @property
    def dims(self):
        return self.density.shape

    @property
    def mask(self) -> np.ndarray:
        return self.density > 0

    def copy(self) -> "TumorMap":
        return TumorMap(self.density.copy(), self.phase.copy())

    def __eq__(self, other):
        if not isinstance(other, TumorMap):
            return NotImplemented
        return np.array_equal(self.density, other.density) and np.array_equal(self.phase, other.phase)

    def check_invariants(self, levels: np.ndarray | None = None) -> list[str]:
        """Return the list of violated invariants (empty when consistent)."""
        problems = []
        d, p = self.density, self.phase
        if d.min() < 0 or d.max() > MAX_DENSITY:
            problems.append("density outside [0, 10]")
        if not np.array_equal(p == Phase.EMPTY, d == 0):
            problems.append("phase Empty does not coincide with density 0")
        if np.any((p == Phase.NECROTIC) & (d != MAX_DENSITY)):
            problems.append("necrotic voxel below saturation")
        if levels is not None and np.any((d > 0) & (levels == 0)):
            problems.append("tumor on a level-0 voxel")
        return problems


def build_organ_map(ct: Volume, masks: MaskSet, n_levels: int = 4) -> OrganMap:
    """Quantize organ HU into ``n_levels`` quantile bands.

    Thresholds are the k/L quantiles of HU over organ voxels outside vessels.
    A voxel's level is 1 plus the number of thresholds at or below its HU, so
    ties go up and a constant-intensity organ lands entirely on level L.
    """
    if ct.dims != masks.dims:
        raise DimensionMismatch(f"CT {ct.dims} vs masks {masks.dims}", stage="quantize")
    if not 2 <= n_levels <= 8:
        raise ValueError(f"level count must be in [2, 8], got {n_levels}")
    tissue = masks.organ_array & ~masks.vessel_array
    if not tissue.any():
        raise EmptyOrgan("organ mask has no voxels outside vessels")
    hu = ct.data[tissue].astype(np.float64)
    thresholds = np.quantile(hu, np.arange(1, n_levels) / n_levels)
    if hu.min() == hu.max():
        log.warning("organ intensity is constant (%s HU); every organ voxel gets level %d", hu[0], n_levels)
    levels = np.zeros(ct.dims, dtype=np.uint8)
    levels[tissue] = 1 + np.searchsorted(thresholds, hu, side="right")
    return OrganMap(levels, n_levels, tuple(float(t) for t in thresholds), ct.spacing)


def init_tumor_map(dims, seed_voxel, levels: np.ndarray | None = None) -> TumorMap:
    """Single Active cell of density 1 at ``seed_voxel``."""
    dims = tuple(int(n) for n in dims)
    seed = tuple(int(c) for c in seed_voxel)
    if any(not 0 <= c < n for c, n in zip(seed, dims)):
        raise SeedOutsideOrgan(f"seed {seed} outside grid {dims}")
    if levels is not None and levels[seed] < 1:
        raise SeedOutsideOrgan(f"seed {seed} is on a level-0 voxel")
    density = np.zeros(dims, dtype=np.uint8)
    phase = np.zeros(dims, dtype=np.uint8)
    density[seed] = 1
    phase[seed] = Phase.ACTIVE
    return TumorMap(density, phase)
