import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorsynth.errors import DimensionMismatch, EmptyTumor
from tumorsynth.interaction import (
    DisplacementField,
    combine_fields,
    mass_effect_field,
    radial_profile,
    warp,
    warp_array,
    warp_masks,
)
from tumorsynth.quantize import TumorMap
from tumorsynth.volume_io import Volume


def ball_tumor(n, radius, center=None):
    c = (n // 2,) * 3 if center is None else center
    g = np.indices((n, n, n))
    r = np.sqrt(sum((gi - ci) ** 2 for gi, ci in zip(g, c)))
    density = np.where(r <= radius, 10, 0).astype(np.uint8)
    return TumorMap(density, (density > 0).astype(np.uint8))


def test_zero_strength_gives_zero_field():
    f = mass_effect_field(ball_tumor(32, 6), strength=0.0)
    assert f.is_zero()


def test_empty_tumor_rejected():
    with pytest.raises(EmptyTumor):
        mass_effect_field(TumorMap(np.zeros((4, 4, 4), np.uint8), np.zeros((4, 4, 4), np.uint8)))


def test_single_voxel_tumor_barely_moves_anything():
    f = mass_effect_field(ball_tumor(16, 0), strength=1.0, d_max=3.0)
    assert f.magnitude().max() < 0.1


def test_radius_eight_ball_surface_displacement():
    n = 64
    tumor = ball_tumor(n, 8, center=(32, 32, 32))
    f = mass_effect_field(tumor, strength=1.0, d_max=3.0, spacing=(1.0, 1.0, 1.0))
    n_vox = int(tumor.density.astype(bool).sum())
    r_s = (3 * n_vox / (4 * math.pi)) ** (1 / 3)
    # closed form at the equivalent surface radius along +x: amp * g(r_s) = 3 * 1
    expected = 3.0 * radial_profile(np.array([r_s]), r_s, 3 * r_s + 4)[0]
    assert expected == pytest.approx(3.0)
    # grid voxel just outside the ball along +x
    x = 32 + 9
    r = 9.0
    g = radial_profile(np.array([r]), r_s, 3 * r_s + 4)[0]
    assert f.ux[x, 32, 32] == pytest.approx(3.0 * g, rel=1e-9)
    assert f.ux[x, 32, 32] > 2.5
    assert abs(f.uy[x, 32, 32]) < 1e-12 and abs(f.uz[x, 32, 32]) < 1e-12
    # octahedral symmetry: mirrored positions carry mirrored vectors
    ux, uy, uz = f.ux, f.uy, f.uz
    # x -> 64 - x about the center 32
    np.testing.assert_allclose(ux[1:][::-1], -ux[1:], atol=1e-12)
    np.testing.assert_allclose(uy[1:][::-1], uy[1:], atol=1e-12)
    np.testing.assert_allclose(uy.transpose(1, 0, 2), ux, atol=1e-12)
    np.testing.assert_allclose(uz.transpose(2, 1, 0), ux, atol=1e-12)


def test_field_respects_bounds_and_locality():
    tumor = ball_tumor(48, 6, center=(20, 24, 26))
    f = mass_effect_field(tumor, strength=1.0, d_max=3.0, r_influence=20.0)
    assert f.magnitude().max() <= 3.0 + 1e-12
    assert f.max_axis_gradient() < 1.0
    g = np.indices(f.dims)
    w = tumor.density.astype(float)
    c = [np.sum(gi * w) / w.sum() for gi in g]
    r = np.sqrt(sum((gi - ci) ** 2 for gi, ci in zip(g, c)))
    assert not f.magnitude()[r >= 20.0].any()


def test_zero_field_warp_is_identity():
    rs = np.random.default_rng(0)
    v = Volume(rs.integers(-200, 200, size=(6, 7, 8)).astype(np.int16))
    out = warp(v, DisplacementField.zeros(v.dims))
    assert out == v


def test_unit_shift_on_ramp():
    ramp = np.add.outer(np.add.outer(np.arange(4) * 100, np.arange(4) * 10), np.arange(4)).astype(np.int16)
    v = Volume(ramp)
    f = DisplacementField(np.ones((4, 4, 4)), np.zeros((4, 4, 4)), np.zeros((4, 4, 4)))
    out = warp(v, f, "trilinear").data
    # out[x] = in[x - 1]; x = 0 samples -1, clamped to the edge
    expected = np.empty_like(ramp)
    expected[1:] = ramp[:-1]
    expected[0] = ramp[0]
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(warp(v, f, "nearest").data, expected)


def test_warp_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        warp(Volume(np.zeros((3, 3, 3), np.int16)), DisplacementField(*(np.ones((2, 2, 2)),) * 3))


def test_warped_labels_stay_binary(phantom64):
    _, masks = phantom64
    f = mass_effect_field(ball_tumor(64, 7), masks, 1.0, 3.0)
    out = warp(masks.organ, f)
    assert set(np.unique(out.data)) <= {0, 1}
    warped = warp_masks(masks, f)
    assert not np.any(warped.vessel_array & ~warped.organ_array)


def test_warp_is_linear_under_constant_offset():
    rs = np.random.default_rng(3)
    data = rs.normal(size=(20, 20, 20)) * 50
    f = mass_effect_field(ball_tumor(20, 4), strength=1.0, d_max=3.0)
    a = warp_array(data + 17.5, f, order=1)
    b = warp_array(data, f, order=1) + 17.5
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_far_anatomy_volume_preserved(phantom64):
    _, masks = phantom64
    f = mass_effect_field(ball_tumor(64, 6), masks, 1.0, 3.0)
    before = masks.organ.data.sum()
    after = warp(masks.organ, f).data.sum()
    assert abs(int(after) - int(before)) / before < 0.05


def test_combined_fields_clamped():
    a = mass_effect_field(ball_tumor(40, 5, (15, 20, 20)), strength=1.0, d_max=3.0)
    b = mass_effect_field(ball_tumor(40, 5, (25, 20, 20)), strength=1.0, d_max=3.0)
    c = combine_fields([a, b], d_max=3.0)
    assert c.magnitude().max() <= 3.0 + 1e-9


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, 8), st.floats(0.0, 1.0), st.floats(0.5, 6.0), st.floats(2.0, 30.0),
    st.tuples(st.integers(10, 30), st.integers(10, 30), st.integers(10, 30)),
)
def test_no_folding_property(radius, strength, d_max, r_infl, center):
    f = mass_effect_field(ball_tumor(40, radius, center), strength=strength, d_max=d_max, r_influence=r_infl)
    assert f.max_axis_gradient() < 1.0
    assert f.magnitude().max() <= d_max + 1e-12
