"""Volume container, RVOL/NIfTI-1 readers, and boundary extraction.

Arrays are indexed ``data[x, y, z]``. On disk the payload is x-fastest, which
is Fortran order for a numpy array of shape ``(nx, ny, nz)``.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    IoFailure,
    MalformedHeader,
    NonBinaryMask,
    UnsupportedDatatype,
    VesselOutsideOrgan,
)

HU_MIN = -1024
HU_MAX = 3071

RVOL_MAGIC = b"RVOL"
RVOL_VERSION = 1
# magic, version, kind, 3 reserved, nx, ny, nz, sx, sy, sz
_RVOL_HEADER = struct.Struct("<4sIB3sIIIfff")
RVOL_HEADER_SIZE = _RVOL_HEADER.size  # 36


class VolumeKind(enum.IntEnum):
    HU_INT16 = 0
    LABEL_U8 = 1

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<i2") if self is VolumeKind.HU_INT16 else np.dtype("u1")


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense 3D scalar grid with voxel spacing in millimetres."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kind: VolumeKind = VolumeKind.HU_INT16

    def __post_init__(self):
        kind = VolumeKind(self.kind)
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DimensionMismatch(f"volume must be 3D with every dim >= 1, got shape {data.shape}")
        # stored as f32 on disk; quantize here so round-trips compare equal
        spacing = tuple(float(np.float32(s)) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise MalformedHeader(f"spacing must be three positive values, got {self.spacing}")
        if kind is VolumeKind.HU_INT16:
            if data.size and (data.min() < HU_MIN or data.max() > HU_MAX):
                raise UnsupportedDatatype(f"HU values outside [{HU_MIN}, {HU_MAX}]")
        elif data.size and (data.min() < 0 or data.max() > 255):
            raise UnsupportedDatatype("label values outside [0, 255]")
        data = np.ascontiguousarray(data, dtype=kind.dtype.newbyteorder("="))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "kind", kind)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def with_data(self, data: np.ndarray, kind: VolumeKind | None = None) -> "Volume":
        return Volume(data, self.spacing, self.kind if kind is None else kind)

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.spacing == other.spacing
            and self.dims == other.dims
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def label_volume(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> Volume:
    return Volume(np.asarray(mask).astype(np.uint8), spacing, VolumeKind.LABEL_U8)


# ---------------------------------------------------------------------------
# RVOL


def save_volume(v: Volume, path) -> None:
    """Write ``v`` as an RVOL container (little-endian, x-fastest payload)."""
    nx, ny, nz = v.dims
    sx, sy, sz = (np.float32(s) for s in v.spacing)
    header = _RVOL_HEADER.pack(RVOL_MAGIC, RVOL_VERSION, int(v.kind), b"\0\0\0", nx, ny, nz, sx, sy, sz)
    payload = v.data.astype(v.kind.dtype, copy=False).tobytes(order="F")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_rvol(raw: bytes, path) -> Volume:
    if len(raw) < RVOL_HEADER_SIZE:
        raise MalformedHeader(f"{path}: truncated RVOL header")
    magic, version, kind, reserved, nx, ny, nz, sx, sy, sz = _RVOL_HEADER.unpack_from(raw)
    if version != RVOL_VERSION:
        raise MalformedHeader(f"{path}: unsupported RVOL version {version}")
    if reserved != b"\0\0\0":
        raise MalformedHeader(f"{path}: reserved bytes must be zero")
    try:
        kind = VolumeKind(kind)
    except ValueError:
        raise UnsupportedDatatype(f"{path}: unknown kind code {kind}") from None
    if min(nx, ny, nz) < 1:
        raise MalformedHeader(f"{path}: zero dimension in header")
    if min(sx, sy, sz) <= 0 or not np.all(np.isfinite([sx, sy, sz])):
        raise MalformedHeader(f"{path}: spacing must be positive")
    expected = nx * ny * nz * kind.dtype.itemsize
    payload = raw[RVOL_HEADER_SIZE:]
    if len(payload) != expected:
        raise DimensionMismatch(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype=kind.dtype).reshape((nx, ny, nz), order="F")
    # f32 -> python float keeps the stored value exactly, so re-saving is byte-identical
    return Volume(data, (float(sx), float(sy), float(sz)), kind)


# ---------------------------------------------------------------------------
# NIfTI-1 (read-only, single-file, uncompressed)

_NIFTI_DTYPES = {2: VolumeKind.LABEL_U8, 4: VolumeKind.HU_INT16}


def _read_nifti(raw: bytes, path) -> Volume:
    if len(raw) < 348:
        raise MalformedHeader(f"{path}: truncated NIfTI header")
    for endian in "<>":
        if struct.unpack_from(endian + "i", raw, 0)[0] == 348:
            break
    else:
        raise MalformedHeader(f"{path}: sizeof_hdr is not 348")
    if raw[344:348] not in (b"n+1\0", b"n+1"):
        raise MalformedHeader(f"{path}: only single-file NIfTI-1 (n+1) is supported")
    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype = struct.unpack_from(endian + "h", raw, 70)[0]
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    vox_offset = int(struct.unpack_from(endian + "f", raw, 108)[0])
    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedDatatype(f"{path}: NIfTI datatype code {datatype} not supported")
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise MalformedHeader(f"{path}: invalid dim[0]={ndim}")
    shape = [dim[i] if i <= ndim else 1 for i in (1, 2, 3)]
    if any(d > 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedDatatype(f"{path}: only 3D volumes are supported")
    if min(shape) < 1:
        raise MalformedHeader(f"{path}: non-positive dimension {shape}")
    kind = _NIFTI_DTYPES[datatype]
    dtype = kind.dtype.newbyteorder(endian)
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = raw[vox_offset:]
    if len(payload) != expected:
        raise DimensionMismatch(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    spacing = tuple(abs(float(p)) or 1.0 for p in pixdim[1:4])
    if kind is VolumeKind.HU_INT16:
        data = np.clip(data, HU_MIN, HU_MAX)
    return Volume(data, spacing, kind)


def load_volume(path) -> Volume:
    """Load an RVOL container or an uncompressed single-file NIfTI-1 volume."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:4] == RVOL_MAGIC:
        return _read_rvol(raw, path)
    if len(raw) >= 348 and raw[344:347] == b"n+1":
        return _read_nifti(raw, path)
    raise MalformedHeader(f"{path}: neither RVOL nor NIfTI-1")


# ---------------------------------------------------------------------------
# Masks


_SIX = ndimage.generate_binary_structure(3, 1)


def _binary(organ) -> np.ndarray:
    data = organ.data if isinstance(organ, Volume) else np.asarray(organ)
    if data.size and not np.isin(np.unique(data), (0, 1)).all():
        raise NonBinaryMask("mask must contain only 0 and 1")
    return data.astype(bool)


def boundary_array(mask: np.ndarray) -> np.ndarray:
    """Voxels of ``mask`` with at least one 6-neighbour outside it (grid edge counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(mask, structure=_SIX, border_value=0)
    return mask & ~interior


def derive_boundary(organ: Volume) -> Volume:
    """Organ voxels touching background through a face."""
    mask = _binary(organ)
    spacing = organ.spacing if isinstance(organ, Volume) else (1.0, 1.0, 1.0)
    return label_volume(boundary_array(mask), spacing)


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Organ mask, optional vessel mask, and the derived organ boundary."""

    organ: Volume
    vessels: Volume | None = None
    boundary: Volume = field(init=False)

    def __post_init__(self):
        organ = _binary(self.organ)
        if self.vessels is not None:
            if self.vessels.dims != self.organ.dims or self.vessels.spacing != self.organ.spacing:
                raise DimensionMismatch("vessel mask does not match organ mask geometry")
            vessels = _binary(self.vessels)
            if np.any(vessels & ~organ):
                raise VesselOutsideOrgan("vessel voxels must lie inside the organ mask")
        object.__setattr__(self, "boundary", label_volume(boundary_array(organ), self.organ.spacing))

    @property
    def dims(self):
        return self.organ.dims

    @property
    def spacing(self):
        return self.organ.spacing

    @property
    def organ_array(self) -> np.ndarray:
        return self.organ.data.astype(bool)

    @property
    def vessel_array(self) -> np.ndarray:
        if self.vessels is None:
            return np.zeros(self.dims, dtype=bool)
        return self.vessels.data.astype(bool)


def check_same_grid(*volumes: Volume) -> None:
    dims = {v.dims for v in volumes}
    if len(dims) != 1:
        raise DimensionMismatch(f"volumes have different dims: {sorted(dims)}")


def ensure_parent(path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
