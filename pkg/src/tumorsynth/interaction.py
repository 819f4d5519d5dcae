"""Mass effect: an analytic radial displacement field and backward warping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyTumor
from .quantize import TumorMap
from .volume_io import HU_MAX, HU_MIN, MaskSet, Volume, VolumeKind

# the field amplitude is capped below these fractions of the radial scales so
# every per-axis finite difference stays under 1 (no folding)
_INNER_SLOPE_CAP = 0.8
_OUTER_SLOPE_CAP = 0.8


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Per-voxel displacement in voxel units, one grid per axis."""

    ux: np.ndarray
    uy: np.ndarray
    uz: np.ndarray

    @property
    def dims(self):
        return self.ux.shape

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.ux**2 + self.uy**2 + self.uz**2)

    def is_zero(self) -> bool:
        return not (self.ux.any() or self.uy.any() or self.uz.any())

    def support(self) -> tuple[slice, ...] | None:
        """Bounding box of nonzero displacement, or None for a zero field."""
        nz = (self.ux != 0) | (self.uy != 0) | (self.uz != 0)
        if not nz.any():
            return None
        idx = np.nonzero(nz)
        return tuple(slice(int(a.min()), int(a.max()) + 1) for a in idx)

    def max_axis_gradient(self) -> float:
        """Largest |du_i/dx_i| under forward differences."""
        worst = 0.0
        for axis, comp in enumerate((self.ux, self.uy, self.uz)):
            if comp.shape[axis] > 1:
                worst = max(worst, float(np.abs(np.diff(comp, axis=axis)).max()))
        return worst

    @classmethod
    def zeros(cls, dims) -> "DisplacementField":
        return cls(*(np.zeros(dims, dtype=np.float64) for _ in range(3)))


def size_gate(equiv_radius_mm: float, onset_mm: float = 1.5, full_mm: float = 5.0) -> float:
    """Smoothstep from 0 at ``onset_mm`` to 1 at ``full_mm`` of equivalent-sphere radius."""
    if equiv_radius_mm <= onset_mm:
        return 0.0
    if equiv_radius_mm >= full_mm:
        return 1.0
    t = (equiv_radius_mm - onset_mm) / (full_mm - onset_mm)
    return t * t * (3.0 - 2.0 * t)


def radial_profile(r: np.ndarray, surface_radius: float, r_influence: float) -> np.ndarray:
    """Displacement profile in [0, 1] as a function of distance from the centroid.

    Linear expansion inside the tumor (reaching 1 at the surface), cosine
    falloff outside, exactly 0 from ``r_influence`` on.
    """
    g = np.zeros_like(r, dtype=np.float64)
    inside = r < surface_radius
    g[inside] = r[inside] / surface_radius
    shell = (r >= surface_radius) & (r < r_influence)
    t = (r[shell] - surface_radius) / (r_influence - surface_radius)
    g[shell] = 0.5 * (1.0 + np.cos(np.pi * t))
    return g


def field_amplitude(strength: float, d_max: float, surface_radius: float, r_influence: float, gate: float) -> float:
    """Peak displacement in voxels after the size gate and the no-folding caps."""
    if r_influence <= surface_radius:
        return 0.0
    amp = strength * d_max * gate
    amp = min(amp, _INNER_SLOPE_CAP * surface_radius)
    amp = min(amp, _OUTER_SLOPE_CAP * 2.0 * (r_influence - surface_radius) / math.pi)
    return max(amp, 0.0)


def mass_effect_field(
    tumor: TumorMap,
    masks: MaskSet | None = None,
    strength: float = 1.0,
    d_max: float = 3.0,
    r_influence: float | None = None,
    *,
    spacing=None,
    onset_radius_mm: float = 1.5,
    full_radius_mm: float = 5.0,
) -> DisplacementField:
    """Outward radial push centred on the density-weighted tumor centroid.

    ``r_influence`` is in voxels measured from the centroid; by default it is
    three times the equivalent-sphere radius plus four voxels. Small lesions
    are gated to zero displacement.
    """
    density = tumor.density
    if not density.any():
        raise EmptyTumor("cannot compute mass effect of an empty tumor")
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must lie in [0, 1]")
    if spacing is None:
        spacing = masks.spacing if masks is not None else (1.0, 1.0, 1.0)
    dims = density.shape
    n_vox = int(np.count_nonzero(density))
    surface_radius = (3.0 * n_vox / (4.0 * math.pi)) ** (1.0 / 3.0)
    equiv_radius_mm = (3.0 * n_vox * float(np.prod(spacing)) / (4.0 * math.pi)) ** (1.0 / 3.0)
    if r_influence is None:
        r_influence = 3.0 * surface_radius + 4.0
    gate = size_gate(equiv_radius_mm, onset_radius_mm, full_radius_mm)
    amp = field_amplitude(strength, d_max, surface_radius, r_influence, gate)
    field = DisplacementField.zeros(dims)
    if amp == 0.0:
        return field

    w = density.astype(np.float64)
    idx = np.nonzero(density)
    weights = w[idx]
    centroid = np.array([np.dot(i, weights) for i in idx]) / weights.sum()

    reach = int(math.ceil(r_influence)) + 1
    win = tuple(slice(max(0, int(math.floor(c)) - reach), min(n, int(math.ceil(c)) + reach + 1)) for c, n in zip(centroid, dims))
    grids = np.meshgrid(*(np.arange(s.start, s.stop, dtype=np.float64) for s in win), indexing="ij")
    rel = [g - c for g, c in zip(grids, centroid)]
    r = np.sqrt(rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2)
    g = radial_profile(r, surface_radius, r_influence)
    # u = amp * g(r) * (x - c)/r; g(r)/r is finite at r=0 because g is linear there
    scale = np.zeros_like(r)
    nzr = r > 0
    scale[nzr] = amp * g[nzr] / r[nzr]
    for comp, d in zip((field.ux, field.uy, field.uz), rel):
        comp[win] = scale * d
    return field


def combine_fields(fields, d_max: float) -> DisplacementField:
    """Sum several lesions' fields and clamp the magnitude to ``d_max``."""
    fields = list(fields)
    ux = sum(f.ux for f in fields)
    uy = sum(f.uy for f in fields)
    uz = sum(f.uz for f in fields)
    mag = np.sqrt(ux**2 + uy**2 + uz**2)
    over = mag > d_max
    if over.any():
        k = np.ones_like(mag)
        k[over] = d_max / mag[over]
        ux, uy, uz = ux * k, uy * k, uz * k
    return DisplacementField(ux, uy, uz)


def warp_array(data: np.ndarray, field: DisplacementField, order: int) -> np.ndarray:
    """Backward warp ``out(x) = data(x - u(x))`` with edge clamping, as float64.

    Voxels with zero displacement are copied, not resampled.
    """
    if data.shape != field.dims:
        raise DimensionMismatch(f"volume {data.shape} vs field {field.dims}", stage="interaction")
    out = data.astype(np.float64, copy=True)
    win = field.support()
    if win is None:
        return out
    coords = np.meshgrid(*(np.arange(s.start, s.stop, dtype=np.float64) for s in win), indexing="ij")
    src = [c - comp[win] for c, comp in zip(coords, (field.ux, field.uy, field.uz))]
    sampled = ndimage.map_coordinates(data.astype(np.float64), src, order=order, mode="nearest")
    moved = (field.ux[win] != 0) | (field.uy[win] != 0) | (field.uz[win] != 0)
    view = out[win]
    view[moved] = sampled[moved]
    return out


def warp(volume: Volume, field: DisplacementField, interpolation: str | None = None) -> Volume:
    """Backward-warp a volume. Labels default to nearest, HU to trilinear."""
    if interpolation is None:
        interpolation = "nearest" if volume.kind is VolumeKind.LABEL_U8 else "trilinear"
    order = {"nearest": 0, "trilinear": 1}[interpolation]
    if field.is_zero():
        return volume.with_data(volume.data.copy())
    out = warp_array(volume.data, field, order)
    if volume.kind is VolumeKind.HU_INT16:
        out = np.clip(np.rint(out), HU_MIN, HU_MAX).astype(np.int16)
    else:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return volume.with_data(out)


def warp_masks(masks: MaskSet, field: DisplacementField) -> MaskSet:
    """Warp organ and vessel masks with nearest-neighbour sampling."""
    organ = warp(masks.organ, field, "nearest")
    vessels = None
    if masks.vessels is not None:
        vessels = warp(masks.vessels, field, "nearest")
        # nearest sampling of two masks can disagree by a voxel at the rim
        vessels = vessels.with_data(vessels.data & organ.data)
    return MaskSet(organ, vessels)
