import numpy as np
import pytest

from tumorsynth.phantom import organ_phantom
from tumorsynth.quantize import OrganMap
from tumorsynth.volume_io import MaskSet, label_volume


@pytest.fixture(scope="session")
def phantom64():
    return organ_phantom((64, 64, 64), seed=11)


@pytest.fixture(scope="session")
def phantom40():
    return organ_phantom((40, 40, 40), seed=3)


def uniform_organ(n=21, level=4, n_levels=4):
    levels = np.full((n, n, n), level, dtype=np.uint8)
    return OrganMap(levels, n_levels, (0.0,) * (n_levels - 1))


def box_masks(dims, lo, hi, spacing=(1.0, 1.0, 1.0)):
    organ = np.zeros(dims, dtype=np.uint8)
    organ[tuple(slice(a, b) for a, b in zip(lo, hi))] = 1
    return MaskSet(label_volume(organ, spacing))


def write_phantom_manifest(out_dir, n_cases=3, size=64, spacing=(1.0, 1.0, 1.0)):
    """Write phantom cases as RVOL files plus a manifest; returns the manifest path."""
    from tumorsynth.volume_io import save_volume

    lines = ["case_id,ct_path,organ_path,vessel_path"]
    for k in range(n_cases):
        ct, masks = organ_phantom((size,) * 3, spacing, seed=100 + k)
        case = f"case{k:03d}"
        save_volume(ct, out_dir / f"{case}_ct.rvol")
        save_volume(masks.organ, out_dir / f"{case}_organ.rvol")
        save_volume(masks.vessels, out_dir / f"{case}_vessels.rvol")
        lines.append(f"{case},{case}_ct.rvol,{case}_organ.rvol,{case}_vessels.rvol")
    path = out_dir / "manifest.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def mini_manifest(tmp_path_factory):
    return write_phantom_manifest(tmp_path_factory.mktemp("cases"))
