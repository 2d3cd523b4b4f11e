import numpy as np
import pytest
from hypothesis import given, strategies as st

from accelrelax.field import (GridSpec, ScalarField, h1_norm, high_band_fraction, inner_product, l2_norm,
                              project_mean_zero, random_field, sobolev_norm, wavenumbers)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(12)
    with pytest.raises(ValueError):
        GridSpec(4)
    with pytest.raises(ValueError):
        GridSpec(16, d=3)
    assert GridSpec(16).shape == (16, 16)


def test_coords_indexing():
    g = GridSpec(8)
    X, Y = g.coords()
    assert X[3, 0] == pytest.approx(3 / 8)
    assert Y[0, 5] == pytest.approx(5 / 8)


def test_spectral_roundtrip(grid32, rng):
    f = ScalarField(grid32, rng.standard_normal(grid32.shape))
    g = ScalarField.from_spectral(grid32, f.spectral())
    assert np.max(np.abs(f.values - g.values)) < 1e-13


def test_single_mode_coefficient(grid32):
    f = ScalarField.from_function(grid32, lambda x, y: np.cos(2 * np.pi * (2 * x + 3 * y)))
    c = f.spectral()
    assert abs(c[2, 3] - 0.5) < 1e-14
    assert abs(c[-2, -3] - 0.5) < 1e-14
    assert l2_norm(f) == pytest.approx(np.sqrt(0.5), rel=1e-14)


def test_values_are_frozen(grid32):
    f = ScalarField.zeros(grid32)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_sobolev_norm_single_mode(grid32):
    f = ScalarField.from_function(grid32, lambda x, y: np.sin(2 * np.pi * (x + 2 * y)))
    k2 = 5.0
    for s in (-1.0, 0.5, 1.0):
        expect = np.sqrt(0.5) * (4 * np.pi**2 * k2) ** (s / 2)
        assert sobolev_norm(f, s) == pytest.approx(expect, rel=1e-12)
    assert h1_norm(f) == pytest.approx(np.hypot(l2_norm(f), sobolev_norm(f, 1)))


def test_negative_norm_needs_mean_zero(grid32):
    f = ScalarField.from_function(grid32, lambda x, y: 1.0 + np.sin(2 * np.pi * x))
    with pytest.raises(ValueError):
        sobolev_norm(f, -1)
    assert sobolev_norm(project_mean_zero(f), -1) > 0


def test_inner_product_grid_mismatch():
    with pytest.raises(ValueError):
        inner_product(ScalarField.zeros(GridSpec(8)), ScalarField.zeros(GridSpec(16)))


@given(st.integers(0, 2**32 - 1))
def test_random_field_normalised(seed):
    f = random_field(GridSpec(16), seed)
    assert abs(f.mean()) < 1e-14
    assert l2_norm(f) == pytest.approx(1.0, rel=1e-12)


def test_random_field_is_seeded(grid32):
    a = random_field(grid32, 5, decay=1.0)
    b = random_field(grid32, 5, decay=1.0)
    assert np.array_equal(a.values, b.values)


def test_smooth_field_has_little_high_band(grid64):
    assert high_band_fraction(random_field(grid64, 1, decay=4.0)) < 1e-6
    assert high_band_fraction(random_field(grid64, 1)) > 0.3


def test_csv_roundtrip(tmp_path, grid32):
    f = random_field(grid32, 9)
    f.to_csv(tmp_path / "f.csv")
    g = ScalarField.from_csv(tmp_path / "f.csv")
    assert np.array_equal(f.values, g.values)


def test_wavenumbers_layout():
    full, half = wavenumbers(8)
    assert list(full) == [0, 1, 2, 3, -4, -3, -2, -1]
    assert list(half) == [0, 1, 2, 3, 4]
