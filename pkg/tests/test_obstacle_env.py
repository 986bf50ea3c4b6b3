import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.exceptions import NotFittedError

from heleshaw.exceptions import DomainError, FrameContactError
from heleshaw.forms import fubini_study, gaussian_bump, quadratic
from heleshaw.grid import square_grid
from heleshaw.obstacle import (HeleShawEnvelope, grid_potential, lattice_log, log_potential, residual_report,
                               solve_envelope, sphere_grids)
from heleshaw.radial import envelope_value


def oracle_error(form, t, cells):
    g = square_grid(2.0, cells, 0j)
    fl = solve_envelope(form, t, g)
    ex = envelope_value(form.radial, t, g.z)
    fin = np.isfinite(ex)
    return float(np.abs(fl.psi[fin] - ex[fin]).max())


def test_quadratic_error_decreases_with_refinement():
    e = [oracle_error(quadratic(), 0.5, c) for c in (32, 64, 128)]
    assert e[0] > e[1] > e[2]
    assert e[2] < 1e-3


def test_nonpositive_and_converged():
    g = square_grid(2.0, 64, 0j)
    fl = solve_envelope(gaussian_bump(), 0.4, g)
    rep = residual_report(fl)
    assert rep["converged"]
    assert rep["sign_violations"] == 0
    assert rep["max_residual"] < 1e-8


def test_pdas_and_psor_agree():
    g = square_grid(2.0, 32, 0j)
    a = solve_envelope(quadratic(), 0.5, g)
    b = solve_envelope(quadratic(), 0.5, g, method="psor")
    fin = np.isfinite(a.psi)
    assert np.abs(a.psi[fin] - b.psi[fin]).max() < 1e-8


def test_frame_contact_raises():
    with pytest.raises(FrameContactError):
        solve_envelope(quadratic(), 5.0, square_grid(2.0, 32, 0j))


def test_nonpositive_tol_rejected():
    with pytest.raises(DomainError):
        solve_envelope(quadratic(), 0.5, square_grid(2.0, 32, 0j), tol=0.0)


def test_zero_time_is_trivial():
    fl = solve_envelope(quadratic(), 0.0, square_grid(2.0, 32, 0j))
    assert np.all(fl.psi == 0)


def test_sphere_matches_fubini_study_oracle():
    zg, wg = sphere_grids(48)
    fs = fubini_study()
    fl = solve_envelope(fs, 0.5, zg, w_grid=wg)
    ex = envelope_value(fs.radial, 0.5, zg.z)
    fin = np.isfinite(ex)
    assert np.abs(fl.psi[fin] - ex[fin]).max() < 1e-3
    assert residual_report(fl)["sign_violations"] == 0


def test_sphere_beyond_mass_is_minus_infinity():
    zg, wg = sphere_grids(16)
    fl = solve_envelope(fubini_study(), 1.5, zg, w_grid=wg)
    assert fl.marker == "minus-infinity"


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.8), st.floats(0.05, 0.8))
def test_monotone_in_t(t1, t2):
    lo, hi = sorted((t1, t2))
    g = square_grid(2.0, 32, 0j)
    a = solve_envelope(quadratic(), lo, g).psi
    b = solve_envelope(quadratic(), hi, g).psi
    fin = np.isfinite(a)
    assert np.all(b[fin] <= a[fin] + 1e-9)


def test_grid_potential_has_lattice_laplacian():
    g = square_grid(1.0, 32, 0j)
    dens = np.exp(-np.abs(g.z) ** 2)
    u = grid_potential(g, dens)
    lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]) / g.h ** 2
    assert np.allclose(lap / (4 * np.pi), dens[1:-1, 1:-1], atol=1e-8)


def test_log_potential_against_quadrature():
    from scipy.integrate import dblquad
    g = square_grid(1.0, 64, 0j)
    dens = np.exp(-8 * np.abs(g.z) ** 2)
    u = log_potential(g, dens)
    zc = g.z[-1, -1]
    ref, _ = dblquad(lambda y, x: np.log((x - zc.real) ** 2 + (y - zc.imag) ** 2) * np.exp(-8 * (x * x + y * y)),
                     -1, 1, -1, 1, epsabs=1e-11)
    assert u[-1, -1] == pytest.approx(ref, rel=1e-3)


def test_lattice_log_singular_only_at_center():
    g = square_grid(1.0, 16, 0j)
    L = lattice_log(g)
    assert np.isfinite(L).sum() >= g.z.size - 1


def test_estimator_api():
    est = HeleShawEnvelope(t=0.3, cells=32)
    with pytest.raises(NotFittedError):
        est.transform([0.1])
    est.fit(quadratic())
    vals = est.transform(np.array([0.1 + 0j, 1.5 + 0j]))
    assert vals[0] < 0
    assert vals[1] == 0
    assert est.domain_mask().sum() > 0
    assert est.get_params()["t"] == 0.3


def test_estimator_rejects_non_form():
    with pytest.raises(DomainError):
        HeleShawEnvelope(cells=16).fit("quadratic")


def test_c11_proxy_bounded_under_refinement():
    from heleshaw.obstacle import c11_proxy
    # closed form: |psi_xx| <= 2t/r^2 + 2 inside, 0 outside; 6 at t = 0.5, r >= 0.5
    vals = [c11_proxy(solve_envelope(quadratic(), 0.5, square_grid(2.0, c, 0j)), 0.5) for c in (64, 128, 256)]
    assert max(vals) <= 6.0 * 1.25
    assert vals[-1] <= 1.25 * vals[0]
