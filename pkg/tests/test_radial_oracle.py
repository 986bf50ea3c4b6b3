import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.exceptions import NoBreakpointError
from heleshaw.forms import fubini_study, quadratic, quartic
from heleshaw.radial import breakpoint, domain_radius, envelope_value, radial_envelope


def psi_quadratic(t, z):
    """Closed form for phi = |z|^2, derived by hand from the convex minorant."""
    r2 = np.abs(z) ** 2
    with np.errstate(divide="ignore"):
        inner = t + t * np.log(r2) - t * np.log(t) - r2
    return np.where(r2 < t, inner, 0.0)


def test_quadratic_breakpoint():
    for t in (0.1, 0.5, 0.9):
        assert breakpoint(quadratic().radial, t) == pytest.approx(-np.log(t), abs=1e-12)


def test_fubini_study_radius():
    # -u'(s) = 1/(1+e^s) = t  gives  r^2 = t/(1-t)
    for t in (0.2, 0.5, 0.8):
        assert domain_radius(fubini_study().radial, t) == pytest.approx(np.sqrt(t / (1 - t)), rel=1e-12)


def test_quartic_radius():
    # -u'(s) = e^{-2s} = t  gives  r^4 = t
    assert domain_radius(quartic().radial, 0.3) == pytest.approx(0.3 ** 0.25, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(1e-3, 2.0), st.floats(0, 2 * np.pi))
def test_matches_hand_derivation(t, r, th):
    z = np.array([r * np.exp(1j * th)])
    assert envelope_value(quadratic().radial, t, z)[0] == pytest.approx(psi_quadratic(t, z)[0], abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0, 3.0))
def test_nonpositive(t, r):
    for f in (quadratic(), fubini_study(), quartic()):
        assert envelope_value(f.radial, t, np.array([complex(r)]))[0] <= 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.01, 1.5))
def test_concave_nonincreasing_in_t(t, r):
    u = fubini_study().radial
    z = np.array([complex(r)])
    d = 0.02
    a, b, c = (envelope_value(u, tt, z)[0] for tt in (t - d / 2, t, t + d / 2))
    assert b <= a + 1e-12
    assert a + c - 2 * b <= 1e-10


def test_lelong_slope_bounded():
    u = quadratic().radial
    r = np.logspace(-6, -2, 30)
    for t in (0.1, 0.5):
        v = envelope_value(u, t, r.astype(complex)) - t * np.log(r ** 2)
        assert np.ptp(v) < 1e-3


def test_pole_at_origin():
    assert envelope_value(quadratic().radial, 0.5, np.array([0j]))[0] == -np.inf


def test_tie_resolves_to_zero():
    t = 0.25
    env = radial_envelope(quadratic().radial, t)
    assert float(env.psi(np.array([env.s0]))[0]) == 0.0


@pytest.mark.parametrize("t", [0.0, -1.0, 1.5])
def test_no_breakpoint(t):
    with pytest.raises(NoBreakpointError):
        breakpoint(fubini_study().radial, t)
