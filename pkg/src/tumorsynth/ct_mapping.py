"""Render tumor state into CT intensities: texture, necrosis, capsule, edge blend."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import rng as rngmod
from .errors import DimensionMismatch
from .quantize import MAX_DENSITY, Phase, TumorMap
from .volume_io import HU_MAX, HU_MIN, Volume

_SIX = ndimage.generate_binary_structure(3, 1)
_NOISE_PHASE = 0x6E6F697365  # keeps lattice draws apart from automaton draws


@dataclass
class IntensityModel:
    """Per-lesion intensity parameters.

    hu_base is the lesion's mean HU before necrosis; hu_range is the preset
    interval it is sampled from. Offsets are in HU, widths in voxels.
    """

    hu_base: float = 106.0
    hu_range: tuple[float, float] = (36.0, 162.0)
    necrosis_delta: float = -30.0
    texture_sigma: float = 10.0
    texture_scales: tuple[float, ...] = (2.0, 4.0)
    blend_halfwidth: int = 1
    capsule_enabled: bool = True
    capsule_delta: float = 20.0
    capsule_min_radius_mm: float = 10.0

    def __post_init__(self):
        self.hu_range = (float(self.hu_range[0]), float(self.hu_range[1]))
        self.texture_scales = tuple(float(s) for s in self.texture_scales)
        if not self.hu_range[0] <= self.hu_base <= self.hu_range[1]:
            raise ValueError(f"hu_base {self.hu_base} outside preset range {self.hu_range}")
        if self.texture_sigma < 0 or self.blend_halfwidth < 0:
            raise ValueError("texture_sigma and blend_halfwidth must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hu_range"] = list(self.hu_range)
        d["texture_scales"] = list(self.texture_scales)
        return d


def _lattice(seed: int, scale_index: int, lo, shape) -> np.ndarray:
    """Random lattice values in [-1, 1] for lattice points lo .. lo+shape-1."""
    axes = [np.arange(l, l + n, dtype=np.int64) for l, n in zip(lo, shape)]
    i, j, k = np.meshgrid(*axes, indexing="ij")
    # lattice coordinates are small and non-negative, 21 bits per axis is plenty
    key = (i + (j << 21) + (k << 42)).astype(np.uint64)
    return 2.0 * rngmod.uniform_array(seed, scale_index, _NOISE_PHASE, key) - 1.0


def raw_value_noise(dims, scales, seed: int, origin=(0, 0, 0)) -> np.ndarray:
    """Sum of trilinearly interpolated random lattices, one per wavelength.

    Lattice values are keyed on absolute lattice coordinates, so a window
    placed at ``origin`` reproduces the same texture as the full grid.
    """
    dims = tuple(int(n) for n in dims)
    total = np.zeros(dims, dtype=np.float64)
    for s_idx, wavelength in enumerate(scales):
        if wavelength <= 0:
            raise ValueError("noise wavelengths must be positive")
        pos = [(np.arange(n, dtype=np.float64) + o) / wavelength for n, o in zip(dims, origin)]
        lo = [int(math.floor(p[0])) for p in pos]
        hi = [int(math.floor(p[-1])) + 1 for p in pos]
        lattice = _lattice(seed, s_idx, lo, [h - l + 1 for l, h in zip(lo, hi)])
        coords = np.meshgrid(*(p - l for p, l in zip(pos, lo)), indexing="ij")
        total += ndimage.map_coordinates(lattice, coords, order=1, mode="nearest")
    return total


def value_noise(dims, scales, sigma: float, seed: int, origin=(0, 0, 0)) -> np.ndarray:
    """Multiscale value noise standardized to zero mean and std ``sigma`` over the grid."""
    if not scales:
        raise ValueError("at least one wavelength is required")
    if sigma == 0:
        return np.zeros(tuple(int(n) for n in dims))
    field = raw_value_noise(dims, scales, seed, origin)
    return _standardize(field, np.ones(field.shape, dtype=bool), sigma)


def _standardize(field: np.ndarray, where: np.ndarray, sigma: float) -> np.ndarray:
    vals = field[where]
    sd = vals.std()
    if sigma == 0 or sd == 0:
        return np.zeros_like(field)
    return (field - vals.mean()) * (sigma / sd)


def equivalent_radius_mm(n_voxels: int, spacing) -> float:
    return (3.0 * n_voxels * float(np.prod(spacing)) / (4.0 * math.pi)) ** (1.0 / 3.0)


def blend_weight(density: np.ndarray, halfwidth: int) -> np.ndarray:
    """Compositing weight: density/10 on the tumor, tapering to 0 over ``halfwidth`` voxels outside."""
    w = density.astype(np.float64) / MAX_DENSITY
    mask = density > 0
    if halfwidth <= 0 or not mask.any() or mask.all():
        return w
    dist, nearest = ndimage.distance_transform_edt(~mask, return_indices=True)
    taper = np.clip(1.0 - dist / (halfwidth + 1.0), 0.0, 1.0)
    shell = ~mask & (dist <= halfwidth)
    w[shell] = w[tuple(n[shell] for n in nearest)] * taper[shell]
    return w


def render(ct: Volume, tumor: TumorMap, model: IntensityModel, seed: int = 0) -> Volume:
    """Composite the tumor into ``ct``: ``out = (1 - w) * ct' + w * T``.

    ``T`` is hu_base plus texture (standardized over the tumor voxels) plus
    the necrosis offset on Necrotic voxels; the necrotic level is floored at
    the preset minimum. ``ct'`` is the CT with the capsule rim applied for
    lesions above the capsule size gate. Voxels outside the weight support
    and the rim are returned untouched.
    """
    if ct.dims != tumor.dims:
        raise DimensionMismatch(f"CT {ct.dims} vs tumor {tumor.dims}", stage="ct_mapping")
    mask = tumor.density > 0
    if not mask.any():
        return ct.with_data(ct.data.copy())

    pad = int(model.blend_halfwidth) + 2
    idx = np.nonzero(mask)
    win = tuple(slice(max(0, int(a.min()) - pad), min(n, int(a.max()) + pad + 1)) for a, n in zip(idx, ct.dims))
    origin = tuple(s.start for s in win)
    density = tumor.density[win]
    phase = tumor.phase[win]
    local_mask = mask[win]
    base = ct.data[win].astype(np.float64)

    w = blend_weight(density, model.blend_halfwidth)
    target = np.full(base.shape, float(model.hu_base))
    necrotic = phase == Phase.NECROTIC
    if necrotic.any():
        target[necrotic] = max(model.hu_base + model.necrosis_delta, model.hu_range[0])
    if model.texture_sigma > 0 and model.texture_scales:
        raw = raw_value_noise(base.shape, model.texture_scales, seed, origin)
        target += _standardize(raw, local_mask, model.texture_sigma)

    touched = w > 0
    if model.capsule_enabled and equivalent_radius_mm(int(mask.sum()), ct.spacing) >= model.capsule_min_radius_mm:
        rim = ndimage.binary_dilation(local_mask, structure=_SIX) & ~local_mask
        base[rim] += model.capsule_delta
        touched |= rim

    blended = (1.0 - w) * base + w * target
    out = ct.data.copy()
    view = out[win]
    view[touched] = np.clip(np.rint(blended[touched]), HU_MIN, HU_MAX).astype(out.dtype)
    return ct.with_data(out)
