import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.exceptions import DomainError, UnsupportedError
from heleshaw.forms import (annulus, corner, density_at, drop_indicator, fubini_study, gaussian_bump,
                            grid_form, laplacian_density, make_form, quadratic, radial_profile, slit,
                            total_mass)
from heleshaw.grid import square_grid

coords = st.floats(-1.9, 1.9, allow_nan=False)


def test_quadratic_density_is_constant():
    f = quadratic()
    z = np.array([0, 1 + 1j, -1.5j])
    assert np.allclose(f.rho(z), 1 / np.pi)


def test_quadratic_mass_over_box():
    # area 16 times 1/pi
    assert total_mass(quadratic()) == pytest.approx(16 / np.pi, rel=1e-12)


@pytest.mark.parametrize("make", [fubini_study, annulus, slit])
def test_sphere_presets_have_unit_mass(make):
    assert total_mass(make()) == pytest.approx(1.0, abs=2e-4)


def test_fubini_study_charts_agree():
    f = fubini_study()
    z = np.array([0.3 + 0.4j, 2.0, -5j])
    w = 1 / z
    # same form in both charts: rho_w(w) = rho(z) |dz/dw|^2 with z = 1/w
    assert np.allclose(f.rho(z) * np.abs(z) ** 4, f.rho_w(w))


@settings(max_examples=40, deadline=None)
@given(coords, coords)
def test_potential_laplacian_matches_density(x, y):
    f = gaussian_bump()
    z = np.array([complex(x, y)])
    assert laplacian_density(f.potential, z)[0] == pytest.approx(f.rho(z)[0], rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(coords, coords, st.floats(0.1, 5.0))
def test_scaling_multiplies_density(x, y, lam):
    f = gaussian_bump()
    z = np.array([complex(x, y)])
    assert f.scaled(lam).rho(z)[0] == pytest.approx(lam * f.rho(z)[0], rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(coords, coords)
def test_densities_positive(x, y):
    z = np.array([complex(x, y)])
    for f in (gaussian_bump(), annulus(), slit()):
        assert f.rho(z)[0] > 0
    assert corner().rho(z)[0] >= 0


def test_corner_density_vanishes_in_drop():
    f = corner()
    z = square_grid(2.0, 64, 0j).z
    inside = drop_indicator(z)
    assert f.rho(z[inside]).max() < f.rho(z[~inside]).min()


def test_make_form_roundtrip():
    f = make_form({"preset": "gaussian-bump", "amplitude": 2.0, "center": [0.1, 0.2]})
    assert f.params["amplitude"] == 2.0
    assert f.params["center"] == [0.1, 0.2]


def test_make_form_unknown_preset():
    with pytest.raises(DomainError):
        make_form({"preset": "torus"})


def test_density_at_outside_region():
    with pytest.raises(DomainError):
        density_at(quadratic(), 3 + 0j)


def test_radial_profile_requires_radial_form():
    with pytest.raises(UnsupportedError):
        radial_profile(gaussian_bump())


def test_grid_form_reproduces_node_values():
    g = square_grid(1.0, 16, 0j)
    vals = 1.0 + np.abs(g.z) ** 2
    f = grid_form(g, vals)
    assert np.allclose(f.rho(g.z), vals)


def test_bad_kind_rejected():
    from heleshaw.forms import AreaForm
    with pytest.raises(DomainError):
        AreaForm("torus", lambda z: z)
