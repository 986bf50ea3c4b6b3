import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.exceptions import DomainError
from heleshaw.flow import (_label_counts, area_law_tolerance, arrival_by_solves, arrival_direct,
                           extract_domain, moments, nesting_check, quadrature_identity_check, solve_family)
from heleshaw.forms import fubini_study, quadratic
from heleshaw.grid import square_grid
from heleshaw.obstacle import solve_envelope, sphere_grids


@pytest.fixture(scope="module")
def domains(quad_family):
    return [extract_domain(f) for f in quad_family[1]]


def test_area_law(domains):
    for d in domains:
        assert abs(d.area - d.t) <= area_law_tolerance(d, d.t)


def test_filled_mass_is_exact(domains):
    for d in domains:
        assert d.filled_mass == pytest.approx(d.t, abs=1e-9)


def test_discs_are_simply_connected(domains):
    assert all(d.components == 1 and d.holes == 0 for d in domains)


def test_nested(domains):
    assert nesting_check(domains)["nested"]


def test_nesting_rejects_unsorted(domains):
    with pytest.raises(DomainError):
        nesting_check(domains[::-1])


def test_richardson_moments_vanish(domains):
    for d in domains:
        M = moments(d, 4)
        assert M[0].real == pytest.approx(d.t, abs=1e-9)
        assert np.all(np.abs(M[1:4]) < 1e-9)
        # the square lattice is only 4-fold symmetric, so z^4 cancels only up to a fraction of t r^4
        assert abs(M[4]) < 0.1 * d.t ** 3


def test_quadrature_identity_outside(domains):
    d = domains[7]
    pts = 1.5 * np.exp(2j * np.pi * np.arange(8) / 8)
    rep = quadrature_identity_check(d, pts)
    assert rep["used"] == 8
    assert rep["max_deviation"] < 5e-3


def test_arrival_matches_squared_modulus(quad_family):
    grid, fam = quad_family
    arr = arrival_direct(fam)
    inner = np.abs(grid.z) ** 2 < 0.9
    assert np.abs(arr.arrival - np.abs(grid.z) ** 2)[inner].max() <= 1 / 16 + 1e-3


def test_arrival_needs_two_fields(quad_family):
    with pytest.raises(DomainError):
        arrival_direct(quad_family[1][:1])


def test_family_rejects_decreasing_times():
    with pytest.raises(DomainError):
        solve_family(quadratic(), [0.5, 0.2], square_grid(2.0, 16, 0j))


def test_arrival_by_solves_on_circle():
    g = square_grid(2.0, 64, 0j)
    t = arrival_by_solves(quadratic(), g, [0.5 + 0j], 0.1, 0.5, depth=12)
    # node masks lag the circle |z|^2 = t by under a cell
    assert t[0] == pytest.approx(0.25, abs=2 * 0.5 * g.h)


def test_sphere_domain_compactified_topology():
    zg, wg = sphere_grids(64)
    d = extract_domain(solve_envelope(fubini_study(), 0.7, zg, w_grid=wg))
    assert (d.components, d.holes) == (1, 0)
    # the domain straddles both charts: the node quadrature of the unit-disc split costs ~1e-4
    assert d.filled_mass == pytest.approx(0.7, abs=1e-3)
    inner = extract_domain(solve_envelope(fubini_study(), 0.3, zg, w_grid=wg))
    assert inner.filled_mass == pytest.approx(0.3, abs=1e-9)


def disc_mask(n, c, r):
    y, x = np.mgrid[0:n, 0:n]
    return (x - c[0]) ** 2 + (y - c[1]) ** 2 < r * r


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 10), st.integers(16, 24), st.integers(16, 24))
def test_label_counts_disc_and_ring(r, cx, cy):
    n = 48
    disc = disc_mask(n, (cx, cy), r + 6)
    assert _label_counts(disc) == (1, 1)
    ring = disc & ~disc_mask(n, (cx, cy), r)
    assert _label_counts(ring) == (1, 2)


def test_label_counts_ignores_specks():
    m = disc_mask(40, (20, 20), 10)
    m[2, 2] = True
    assert _label_counts(m) == (1, 1)
