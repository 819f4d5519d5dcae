import numpy as np
import pytest

from tumorsynth.ct_mapping import IntensityModel, blend_weight, raw_value_noise, render, value_noise
from tumorsynth.errors import DimensionMismatch
from tumorsynth.quantize import Phase, TumorMap
from tumorsynth.volume_io import Volume

FLAT = dict(texture_sigma=0.0, blend_halfwidth=0, capsule_enabled=False)


def ball(n, radius, center=None):
    c = (n // 2,) * 3 if center is None else center
    g = np.indices((n, n, n))
    return np.sqrt(sum((gi - ci) ** 2 for gi, ci in zip(g, c))) <= radius


def saturated(mask, necrotic=None):
    density = np.where(mask, 10, 0).astype(np.uint8)
    phase = np.where(mask, Phase.QUIESCENT, Phase.EMPTY).astype(np.uint8)
    if necrotic is not None:
        phase[necrotic & mask] = Phase.NECROTIC
    return TumorMap(density, phase)


def noisy_ct(n, seed=0, mean=60.0):
    rs = np.random.default_rng(seed)
    return Volume(np.rint(rs.normal(mean, 15.0, size=(n, n, n))).astype(np.int16))


def test_empty_tumor_is_identity():
    ct = noisy_ct(12)
    empty = TumorMap(np.zeros(ct.dims, np.uint8), np.zeros(ct.dims, np.uint8))
    assert render(ct, empty, IntensityModel()) == ct


def test_flat_saturated_ball_reads_base_value():
    ct = noisy_ct(24)
    mask = ball(24, 6)
    out = render(ct, saturated(mask), IntensityModel(hu_base=106.0, **FLAT)).data
    assert (out[mask] == 106).all()
    np.testing.assert_array_equal(out[~mask], ct.data[~mask])


def test_textured_ball_statistics():
    mask = ball(32, 6.2)
    assert 950 <= mask.sum() <= 1050
    ct = noisy_ct(32)
    model = IntensityModel(hu_base=106.0, texture_sigma=20.0, capsule_enabled=False)
    vals = render(ct, saturated(mask), model, seed=4).data[mask].astype(float)
    assert abs(vals.mean() - 106.0) <= 3.0
    assert 14.0 <= vals.std() <= 26.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        render(noisy_ct(8), saturated(ball(9, 2)), IntensityModel())


def test_value_noise_zero_sigma_and_determinism():
    assert not value_noise((8, 8, 8), (4.0,), 0.0, seed=1).any()
    a = value_noise((16, 16, 16), (2.0, 4.0), 5.0, seed=9)
    b = value_noise((16, 16, 16), (2.0, 4.0), 5.0, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.mean() == pytest.approx(0.0, abs=1e-9)
    assert a.std() == pytest.approx(5.0)
    assert not np.array_equal(a, value_noise((16, 16, 16), (2.0, 4.0), 5.0, seed=10))


def test_value_noise_positive_autocorrelation_at_half_wavelength():
    f = value_noise((64, 64, 64), (8.0,), 1.0, seed=2)
    lag = 4
    for axis in range(3):
        a = np.take(f, np.arange(64 - lag), axis=axis)
        b = np.take(f, np.arange(lag, 64), axis=axis)
        assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.2


def test_noise_window_matches_full_grid():
    full = raw_value_noise((20, 20, 20), (2.0, 4.0), seed=3)
    win = raw_value_noise((7, 9, 5), (2.0, 4.0), seed=3, origin=(5, 3, 11))
    np.testing.assert_allclose(win, full[5:12, 3:12, 11:16], atol=1e-12)


def test_output_range_is_clamped():
    ct = Volume(np.full((16, 16, 16), 3060, np.int16))
    model = IntensityModel(hu_base=150.0, texture_sigma=0.0, blend_halfwidth=0, capsule_min_radius_mm=1.0,
                           capsule_delta=500.0)
    out = render(ct, saturated(ball(16, 4)), model).data
    assert out.min() >= -1024 and out.max() <= 3071
    assert out.max() == 3071  # the rim overflowed and was clamped


def test_necrotic_core_is_darker():
    n = 32
    mask = ball(n, 10)
    core = ball(n, 5)
    model = IntensityModel(hu_base=106.0, necrosis_delta=-30.0, texture_sigma=7.5, capsule_enabled=False)
    out = render(noisy_ct(n), saturated(mask, core), model, seed=1).data.astype(float)
    gap = out[mask & ~core].mean() - out[core].mean()
    assert gap >= 15.0


def test_necrotic_level_floored_at_preset_minimum():
    mask = ball(16, 4)
    model = IntensityModel(hu_base=40.0, necrosis_delta=-30.0, **FLAT)
    out = render(noisy_ct(16), saturated(mask, mask), model).data
    assert (out[mask] == 36).all()


def test_blend_weight_monotone_in_density():
    rs = np.random.default_rng(0)
    density = rs.integers(0, 11, size=(10, 10, 10)).astype(np.uint8)
    density[rs.random(density.shape) < 0.5] = 0
    w = blend_weight(density, 1)
    assert w.min() >= 0 and w.max() <= 1
    higher = np.where(density > 0, np.minimum(density + 3, 10), 0).astype(np.uint8)
    assert (blend_weight(higher, 1) >= w - 1e-12).all()
    np.testing.assert_array_equal(w[density == 10], 1.0)


def test_identity_outside_influence():
    n = 30
    ct = noisy_ct(n, seed=5)
    mask = ball(n, 5)
    model = IntensityModel(blend_halfwidth=2, capsule_enabled=False)
    out = render(ct, saturated(mask), model, seed=2).data
    w = blend_weight(saturated(mask).density, 2)
    np.testing.assert_array_equal(out[w == 0], ct.data[w == 0])
    assert np.any(out[(w > 0) & ~mask] != ct.data[(w > 0) & ~mask])


def test_capsule_rim_only_above_size_gate():
    n = 40
    ct = Volume(np.full((n, n, n), 60, np.int16))
    model = IntensityModel(hu_base=106.0, texture_sigma=0.0, blend_halfwidth=0, capsule_delta=20.0,
                           capsule_min_radius_mm=10.0)
    small, large = ball(n, 5), ball(n, 12)
    rim = lambda m: np.pad(m, 1)[2:, 1:-1, 1:-1] & ~m  # voxel just below a mask voxel along x
    out_small = render(ct, saturated(small), model).data
    out_large = render(ct, saturated(large), model).data
    assert (out_small[~small] == 60).all()
    assert (out_large[rim(large)] == 80).all()
    assert (out_large[~ball(n, 14)] == 60).all()


def test_model_validation():
    with pytest.raises(ValueError):
        IntensityModel(hu_base=200.0, hu_range=(36.0, 162.0))
    with pytest.raises(ValueError):
        IntensityModel(texture_sigma=-1.0)
