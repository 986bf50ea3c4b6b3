import dataclasses

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from sklearn.exceptions import NotFittedError

from heleshaw.conformal import (RiemannMap, analytic_map, area_transport, map_from_curve, properness_check,
                                riemann_map, signed_area, verify_harmonic_disc, winding_number)
from heleshaw.exceptions import DomainError, TopologyError
from heleshaw.flow import extract_domain
from heleshaw.forms import quadratic


def circle(c, R, n=400):
    th = 2 * np.pi * np.arange(n) / n
    return c + R * np.exp(1j * th)


def mobius(tau, b):
    return (tau + b) / (1 + np.conj(b) * tau)


@settings(max_examples=8, deadline=None)
@given(st.floats(0, 0.6), st.floats(0, 2 * np.pi), st.floats(0.3, 2.0))
@example(0.375, 0.0, 1.0)  # plain Newton on the correspondence diverged here
def test_off_center_disc_is_mobius(rad, ang, R):
    c = 0.2 - 0.1j
    b = rad * np.exp(1j * ang)
    cmap = map_from_curve(circle(c, R), c + R * b, M=256)
    tau = 0.9 * np.exp(1j * np.linspace(0, 2 * np.pi, 17)) * np.linspace(0.1, 1, 17)
    assert np.abs(cmap(tau) - (c + R * mobius(tau, b))).max() < 1e-6 * R


def test_normalization():
    cmap = map_from_curve(circle(0, 1), 0.3j, M=256)
    assert abs(cmap(np.array([0j]))[0] - 0.3j) < 1e-10
    assert abs(np.angle(cmap.derivative(np.array([0j]))[0])) < 1e-10


def test_center_outside_rejected():
    with pytest.raises(DomainError):
        map_from_curve(circle(0, 1), 2.0)


def test_signed_area_and_winding():
    sq = np.array([0, 1, 1 + 1j, 1j])
    assert signed_area(sq) == pytest.approx(1.0)
    assert signed_area(sq[::-1]) == pytest.approx(-1.0)
    assert winding_number(sq, 0.5 + 0.5j) == 1
    assert winding_number(sq, 2.0) == 0


def test_analytic_map_area():
    # the unit disc under tau -> 2 tau carries Lebesgue area 4 pi
    cmap = analytic_map(lambda t: 2 * t, lambda t: 2 + 0 * t, 0j)
    assert area_transport(cmap, quadratic()) == pytest.approx(4.0, rel=1e-10)


@pytest.fixture(scope="module")
def disc_domain(quad_family):
    return extract_domain(quad_family[1][7])


def test_riemann_map_of_flow_domain(disc_domain):
    cmap = riemann_map(disc_domain)
    t = disc_domain.t
    assert abs(cmap.coeffs[1]) == pytest.approx(np.sqrt(t), rel=0.02)
    assert properness_check(cmap, disc_domain)["inside_fraction"] == 1.0


def test_harmonic_disc_residuals(quad_fan, disc_domain):
    cmap = riemann_map(disc_domain)
    res = verify_harmonic_disc(cmap, disc_domain.t, quad_fan)
    assert res["identity_max"] < 5e-3


def test_unsampled_time_rejected(quad_fan, disc_domain):
    cmap = riemann_map(disc_domain)
    with pytest.raises(DomainError):
        verify_harmonic_disc(cmap, 0.51, quad_fan)


def test_multiply_connected_refused(disc_domain):
    holed = dataclasses.replace(disc_domain, holes=1)
    with pytest.raises(TopologyError):
        riemann_map(holed)


def test_estimator(disc_domain):
    est = RiemannMap(samples=256)
    with pytest.raises(NotFittedError):
        est.transform([0j])
    est.fit(disc_domain)
    assert est.transform(np.array([0j]))[0] == pytest.approx(0j, abs=1e-10)
    with pytest.raises(DomainError):
        RiemannMap().fit("not a domain")
