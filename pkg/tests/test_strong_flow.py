import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.exceptions import NotFittedError

from heleshaw.exceptions import DomainError
from heleshaw.forms import gaussian_bump, quadratic
from heleshaw.grid import square_grid
from heleshaw.strong import (MarkerFront, StrongHeleShaw, disc_front, front_moments, reverse_engineer_kappa,
                             run_strong_flow, self_intersections, strong_weak_compare)


@pytest.fixture(scope="module")
def quad_run():
    return run_strong_flow(quadratic(), 1e-3, 0.5, steps=100, markers=64, record=[0.2])


def test_mass_tracks_time(quad_run):
    M = quad_run.moments
    assert np.abs(M[:, 0].real - quad_run.times).max() <= 0.01 * quad_run.times.max()


def test_higher_moments_conserved(quad_run):
    assert np.abs(quad_run.moments[:, 1:]).max() <= 1e-3 * (1 + quad_run.times.max())


def test_recorded_times_hit_exactly(quad_run):
    assert 0.2 in quad_run.times
    assert quad_run.front_at(0.2).t == 0.2


def test_radial_front_is_circle(quad_run):
    f = quad_run.front_at(0.5)
    assert np.abs(np.abs(f.z) - np.sqrt(0.5)).max() < 5e-3


def test_heun_beats_euler():
    exact = 0.2 * np.pi
    a = run_strong_flow(quadratic(), 1e-3, 0.2, steps=40, scheme="heun").fronts[-1].polygon_area()
    b = run_strong_flow(quadratic(), 1e-3, 0.2, steps=40, scheme="euler").fronts[-1].polygon_area()
    assert abs(a - exact) < abs(b - exact) < 0.01 * exact


def test_shifted_injection_first_moment():
    res = run_strong_flow(quadratic(), 1e-3, 0.3, steps=60, z0=0.3 + 0j)
    M1 = res.moments[-1, 1]
    assert abs(M1 - 0.3 * res.times[-1]) <= 0.01 * res.times[-1]


@pytest.mark.parametrize("t0,t1", [(0.0, 0.5), (0.5, 0.2), (-1.0, 0.1)])
def test_bad_time_range(t0, t1):
    with pytest.raises(DomainError):
        run_strong_flow(quadratic(), t0, t1)


def test_bad_cfl():
    with pytest.raises(DomainError):
        run_strong_flow(quadratic(), 0.01, 0.1, cfl=3.0)


def test_self_intersections():
    th = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    assert self_intersections(np.exp(1j * th)) == []
    # shift the samples so the crossing is not a shared vertex
    eight = np.sin(th + 0.01) + 1j * np.sin(2 * (th + 0.01))
    assert len(self_intersections(eight)) >= 1


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.5), st.integers(32, 128))
def test_disc_front_area(r, n):
    f = disc_front(0j, r, n)
    assert f.polygon_area() == pytest.approx(np.pi * r * r * np.sin(2 * np.pi / n) * n / (2 * np.pi), rel=1e-10)


def test_front_moments_of_disc():
    f = disc_front(0j, 0.5, 256)
    M = front_moments(f, quadratic(), 3)
    assert M[0].real == pytest.approx(0.25, rel=1e-3)
    assert np.all(np.abs(M[1:]) < 1e-8)


def test_reverse_engineered_kappa_constant():
    # concentric circles r = sqrt(t) come from the density 1/pi, i.e. kappa = pi
    ts = np.linspace(0.1, 0.9, 33)
    fam = [MarkerFront(float(t), np.sqrt(t) * np.exp(2j * np.pi * np.arange(128) / 128), 0j) for t in ts]
    ks = reverse_engineer_kappa(fam)
    assert np.allclose(ks.kappa, np.pi, rtol=0.02)


def test_reverse_engineering_needs_nested_fronts():
    fam = [disc_front(0j, r, 64, t=t) for r, t in ((0.5, 0.1), (0.4, 0.2), (0.6, 0.3))]
    with pytest.raises(DomainError):
        reverse_engineer_kappa(fam)


def test_strong_weak_agree_on_bump():
    res = run_strong_flow(gaussian_bump(), 1e-3, 0.3, steps=60, record=[0.3])
    cmp_ = strong_weak_compare(res.fronts, gaussian_bump(), square_grid(2.0, 96, 0j), times=[0.3])
    assert cmp_["max_relative"] < 0.05


def test_estimator():
    est = StrongHeleShaw(t1=0.1, steps=20)
    with pytest.raises(NotFittedError):
        est.transform([0.05])
    est.fit(quadratic())
    fronts = est.transform([0.05, 0.1])
    assert fronts[-1].t == pytest.approx(0.1)
    assert est.moments_.shape[1] == 5
