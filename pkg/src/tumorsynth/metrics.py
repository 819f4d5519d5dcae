"""Segmentation overlap metrics, reader-study arithmetic, and lesion features."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyInput, EmptyMask
from .volume_io import Volume, boundary_array

DEFAULT_TAU_MM = 2.0
BRUTE_FORCE_LIMIT = 10_000


def _mask(m) -> np.ndarray:
    data = m.data if isinstance(m, Volume) else np.asarray(m)
    return data.astype(bool)


def _pair(a, b):
    a, b = _mask(a), _mask(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}", stage="metrics")
    return a, b


def dsc(a, b) -> float:
    """Dice similarity 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    a, b = _pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


@dataclass(frozen=True)
class SurfaceTolerance:
    tau_mm: float = DEFAULT_TAU_MM

    def __post_init__(self):
        if self.tau_mm < 0:
            raise ValueError("tau_mm must be non-negative")


def surface_distances_brute(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """For every voxel of ``src`` the exact mm distance to the nearest voxel of ``dst``, by enumeration."""
    sp = np.asarray(spacing, dtype=np.float64)
    p = np.argwhere(src) * sp
    q = np.argwhere(dst) * sp
    out = np.empty(len(p))
    chunk = max(1, 2_000_000 // max(1, len(q)))
    for i in range(0, len(p), chunk):
        diff = p[i : i + chunk, None, :] - q[None, :, :]
        out[i : i + chunk] = np.sqrt((diff**2).sum(axis=-1).min(axis=1))
    return out


def surface_distances_edt(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Same quantity as :func:`surface_distances_brute` via an exact Euclidean distance transform."""
    dist = ndimage.distance_transform_edt(~dst, sampling=spacing)
    return dist[src]


def nsd(a, b, tol: SurfaceTolerance | float = DEFAULT_TAU_MM, spacing=None, method: str = "auto") -> float:
    """Normalized surface Dice at tolerance ``tau_mm``.

    Surfaces are the 6-neighbourhood boundary voxels of each mask. Both empty
    gives 1.0; exactly one empty gives 0.0.
    """
    if spacing is None:
        spacing = a.spacing if isinstance(a, Volume) else (1.0, 1.0, 1.0)
    if isinstance(a, Volume) and isinstance(b, Volume) and a.spacing != b.spacing:
        raise DimensionMismatch("mask spacings differ", stage="metrics")
    a, b = _pair(a, b)
    tau = tol.tau_mm if isinstance(tol, SurfaceTolerance) else float(tol)
    sa, sb = boundary_array(a), boundary_array(b)
    na, nb = int(sa.sum()), int(sb.sum())
    if na == 0 and nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    if method == "auto":
        method = "brute" if max(na, nb) <= BRUTE_FORCE_LIMIT else "edt"
    dist = {"brute": surface_distances_brute, "edt": surface_distances_edt}[method]
    d_ab = dist(sa, sb, spacing)
    d_ba = dist(sb, sa, spacing)
    return (int((d_ab <= tau).sum()) + int((d_ba <= tau).sum())) / (na + nb)


# ---------------------------------------------------------------------------
# Reader study

REAL, SYNTHETIC, UNSURE = "real", "synthetic", "unsure"


def reader_metrics(labels, unsure: str = "incorrect") -> tuple[float, float, float]:
    """Sensitivity, specificity, accuracy with real tumors as positives.

    ``labels`` holds ``(truth, call)`` pairs. By default an "unsure" call counts
    as wrong for its truth class; ``unsure="drop"`` removes those rows instead.
    A ratio with an empty denominator is reported as NaN.
    """
    labels = [(str(t).strip().lower(), str(c).strip().lower()) for t, c in labels]
    if not labels:
        raise EmptyInput("reader_metrics needs at least one rating")
    for t, c in labels:
        if t not in (REAL, SYNTHETIC) or c not in (REAL, SYNTHETIC, UNSURE):
            raise ValueError(f"bad rating ({t!r}, {c!r})")
    if unsure == "drop":
        labels = [(t, c) for t, c in labels if c != UNSURE]
        if not labels:
            raise EmptyInput("every rating was unsure")
    elif unsure != "incorrect":
        raise ValueError("unsure must be 'incorrect' or 'drop'")
    tp = sum(t == REAL and c == REAL for t, c in labels)
    fn = sum(t == REAL and c != REAL for t, c in labels)
    tn = sum(t == SYNTHETIC and c == SYNTHETIC for t, c in labels)
    fp = sum(t == SYNTHETIC and c != SYNTHETIC for t, c in labels)
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return sens, spec, (tp + tn) / len(labels)


def read_reader_csv(path) -> list[tuple[str, str]]:
    """Ratings from a CSV with ``truth`` and ``call`` columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"truth", "call"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns truth,call")
        return [(row["truth"], row["call"]) for row in reader]


# ---------------------------------------------------------------------------
# Features


@dataclass
class FeatureVector:
    mean: float
    std: float
    median: float
    p10: float
    p90: float
    entropy: float
    volume_mm3: float
    surface_area_mm2: float
    sphericity: float
    equivalent_diameter_mm: float
    elongation: float

    def to_dict(self) -> dict:
        return asdict(self)


def surface_area(mask: np.ndarray, spacing) -> float:
    """Area of exposed voxel faces in mm²."""
    sx, sy, sz = spacing
    padded = np.pad(mask.astype(np.int8), 1)
    face_area = (sy * sz, sx * sz, sx * sy)
    total = 0.0
    for axis in range(3):
        total += np.count_nonzero(np.diff(padded, axis=axis)) * face_area[axis]
    return total


def sphericity(volume_mm3: float, area_mm2: float) -> float:
    return math.pi ** (1.0 / 3.0) * (6.0 * volume_mm3) ** (2.0 / 3.0) / area_mm2


def _entropy(values: np.ndarray, bins: int = 32) -> float:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(values, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum())


def extract_features(image: Volume, mask) -> FeatureVector:
    """First-order intensity statistics and voxel-geometry shape features over ``mask``."""
    m = _mask(mask)
    if m.shape != image.dims:
        raise DimensionMismatch(f"image {image.dims} vs mask {m.shape}", stage="metrics")
    if not m.any():
        raise EmptyMask("feature extraction needs a nonempty mask")
    vals = image.data[m].astype(np.float64)
    spacing = image.spacing
    volume = float(m.sum()) * float(np.prod(spacing))
    area = surface_area(m, spacing)
    coords = np.argwhere(m) * np.asarray(spacing)
    if len(coords) > 1:
        eig = np.sort(np.linalg.eigvalsh(np.cov(coords, rowvar=False, bias=True)))
    else:
        eig = np.zeros(3)
    elongation = math.sqrt(max(eig[1], 0.0) / eig[2]) if eig[2] > 0 else 1.0
    return FeatureVector(
        mean=float(vals.mean()),
        std=float(vals.std()),
        median=float(np.median(vals)),
        p10=float(np.percentile(vals, 10)),
        p90=float(np.percentile(vals, 90)),
        entropy=_entropy(vals),
        volume_mm3=volume,
        surface_area_mm2=area,
        sphericity=sphericity(volume, area),
        equivalent_diameter_mm=(6.0 * volume / math.pi) ** (1.0 / 3.0),
        elongation=elongation,
    )


def metrics_csv(rows) -> str:
    """CSV text with header ``case_id,metric,value`` from (case_id, metric, value) triples."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "metric", "value"])
    for case_id, metric, value in rows:
        writer.writerow([case_id, metric, repr(float(value))])
    return buf.getvalue()
