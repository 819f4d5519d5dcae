import math

import numpy as np
import pytest
from scipy import ndimage

from conftest import box_masks
from tumorsynth.config import load_config, make_recipe
from tumorsynth.errors import DegenerateShape, PlacementFailed
from tumorsynth.handcrafted import generate_shape, place_lesions, synthesize_handcrafted
from tumorsynth.metrics import sphericity, surface_area
from tumorsynth.recipe import LesionRecipe, ShapeSpec
from tumorsynth.volume_io import Volume


def _sphericity(mask, spacing=(1.0, 1.0, 1.0)):
    return sphericity(mask.sum() * np.prod(spacing), surface_area(mask, spacing))


def test_voxelized_sphere_volume():
    mask = generate_shape(ShapeSpec((5.0, 5.0, 5.0)), (1.0, 1.0, 1.0))
    analytic = 4.0 / 3.0 * math.pi * 125.0
    assert abs(mask.sum() - analytic) / analytic <= 0.06


def test_sphere_invariant_under_axis_rotations():
    mask = generate_shape(ShapeSpec((4.5, 4.5, 4.5)), (1.0, 1.0, 1.0))
    for axes in ((0, 1), (1, 2), (0, 2)):
        for k in (1, 2, 3):
            np.testing.assert_array_equal(np.rot90(mask, k, axes), mask)


def test_shape_is_deterministic_and_connected():
    spec = ShapeSpec((6.0, 4.0, 5.0), (0.3, -1.0, 2.0), elastic_amplitude=0.4)
    a = generate_shape(spec, (0.8, 0.8, 1.5), seed=12)
    b = generate_shape(spec, (0.8, 0.8, 1.5), seed=12)
    np.testing.assert_array_equal(a, b)
    _, n = ndimage.label(a, structure=ndimage.generate_binary_structure(3, 1))
    assert n == 1
    center = tuple(s // 2 for s in a.shape)
    assert a[center]


def test_perturbation_lowers_sphericity():
    smooth = _sphericity(generate_shape(ShapeSpec((10.0, 10.0, 10.0))))
    for seed in range(30):
        bumpy = generate_shape(ShapeSpec((10.0, 10.0, 10.0), elastic_amplitude=0.3), seed=seed)
        assert _sphericity(bumpy) < smooth


def test_oversized_shape_rejected():
    with pytest.raises(DegenerateShape):
        generate_shape(ShapeSpec((90.0, 10.0, 10.0)))


def _recipe(seed, diameter, **kw):
    return make_recipe(load_config(), seed, backend="handcrafted", target_diameter_mm=diameter, **kw)


def test_small_lesion_placed_inside_organ_off_vessels(phantom64):
    ct, masks = phantom64
    for seed in range(10):
        result = synthesize_handcrafted(ct, masks, _recipe(seed, 4.0))
        m = result.mask.data.astype(bool)
        assert m.any()
        assert not np.any(m & ~masks.organ_array)
        assert not np.any(m & masks.vessel_array)


def test_handcrafted_is_deterministic_and_echo_reproduces(phantom64):
    ct, masks = phantom64
    recipe = _recipe(5, 12.0)
    a = synthesize_handcrafted(ct, masks, recipe)
    b = synthesize_handcrafted(ct, masks, recipe)
    assert a.image == b.image and a.mask == b.mask
    again = synthesize_handcrafted(ct, masks, LesionRecipe.from_dict(a.recipe_echo.to_dict()))
    assert again.image == a.image and again.mask == a.mask


def test_liver_lesion_means_within_preset(phantom64):
    ct, masks = phantom64
    for seed in range(50):
        result = synthesize_handcrafted(ct, masks, _recipe(seed, 8.0))
        m = result.mask.data.astype(bool)
        mean = result.image.data[m].astype(float).mean()
        assert 36.0 <= mean <= 162.0, (seed, mean)


def test_mask_equals_placed_shape(phantom64):
    ct, masks = phantom64
    recipe = _recipe(3, 10.0)
    lesion, _ = place_lesions(masks, recipe)
    result = synthesize_handcrafted(ct, masks, recipe)
    np.testing.assert_array_equal(result.mask.data.astype(bool), lesion)


def test_placement_failure_after_retries():
    masks = box_masks((20, 20, 20), (8, 8, 8), (12, 12, 12))
    ct = Volume(np.zeros((20, 20, 20), np.int16))
    with pytest.raises(PlacementFailed):
        synthesize_handcrafted(ct, masks, _recipe(0, 10.0))


def test_explicit_center_outside_organ_fails(phantom64):
    ct, masks = phantom64
    with pytest.raises(PlacementFailed):
        synthesize_handcrafted(ct, masks, _recipe(0, 6.0, seed_voxel=(1, 1, 1)))


def test_satellites_stay_near_and_inside(phantom64):
    ct, masks = phantom64
    base = _recipe(2, 10.0)
    spec = ShapeSpec(base.shape.semiaxes_mm, base.shape.euler_angles, multifocal_count=4)
    recipe = LesionRecipe.from_dict({**base.to_dict(), "shape": spec.to_dict(), "satellite_radius_mm": 15.0})
    lesion, center = place_lesions(masks, recipe)
    single, _ = place_lesions(masks, base)
    assert lesion.sum() > single.sum()
    assert not np.any(lesion & ~masks.organ_array)
    pts = np.argwhere(lesion)
    assert np.linalg.norm(pts - np.asarray(center), axis=1).max() <= 15.0 + 10.0
