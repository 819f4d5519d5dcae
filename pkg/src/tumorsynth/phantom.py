"""Synthetic abdominal phantoms for tests, demos, and benchmarks."""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .volume_io import MaskSet, Volume, label_volume


def organ_phantom(
    dims=(64, 64, 64),
    spacing=(1.0, 1.0, 1.0),
    *,
    radii_fraction=(0.38, 0.32, 0.30),
    organ_hu: float = 60.0,
    noise_hu: float = 8.0,
    vessel_radius: float = 1.5,
    n_vessels: int = 2,
    seed: int = 0,
) -> tuple[Volume, MaskSet]:
    """Ellipsoidal organ with straight vessels in soft-tissue surroundings.

    Background is fat-like (-80 HU), the organ ``organ_hu`` with Gaussian
    noise, vessels 160 HU. Vessels run along z through the organ and are
    clipped to it.
    """
    dims = tuple(int(n) for n in dims)
    gen = rngmod.generator(seed, "phantom")
    grids = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    center = [(n - 1) / 2.0 for n in dims]
    rho = sum(((g - c) / (f * n)) ** 2 for g, c, f, n in zip(grids, center, radii_fraction, dims))
    organ = rho <= 1.0
    vessels = np.zeros(dims, dtype=bool)
    for k in range(n_vessels):
        offset = (k - (n_vessels - 1) / 2.0) * dims[0] * 0.25
        cx, cy = center[0] + offset, center[1] + (0.15 * dims[1] if k % 2 else -0.15 * dims[1])
        vessels |= ((grids[0] - cx) ** 2 + (grids[1] - cy) ** 2) <= vessel_radius**2
    vessels &= organ
    hu = np.full(dims, -80.0)
    hu[organ] = organ_hu
    hu[vessels] = 160.0
    hu += gen.normal(0.0, noise_hu, size=dims)
    ct = Volume(np.clip(np.rint(hu), -1024, 3071).astype(np.int16), spacing)
    masks = MaskSet(label_volume(organ, spacing), label_volume(vessels, spacing) if n_vessels else None)
    return ct, masks
